"""Embedding-space scorers: Mahalanobis distance, its robust kernel-PCA
variant, a per-class Gaussian mixture density, and a nonparametric
kernel estimator of the label-noise rate.

Fitters consume the train split only.  Scoring takes one embedding and
returns a float, higher = more uncertain.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import eigh
from scipy.spatial.distance import cdist, pdist
from scipy.special import logsumexp

from .core import LabeledSplit, seeded_rng

RIDGE_SCALE = 1e-6        # ridge = RIDGE_SCALE * trace/d, floor below
RIDGE_FLOOR = 1e-12
MCD_DEFAULT_FRACTION = 0.75
MCD_DET_TOL = 1e-9
MCD_MAX_CSTEPS = 100
MCD_RESTARTS = 20
DENSITY_UNDERFLOW = 1e-300


def _ridge_lambda(cov: np.ndarray) -> float:
    d = cov.shape[0]
    lam = RIDGE_SCALE * float(np.trace(cov)) / d
    return max(lam, RIDGE_FLOOR)


def _regularized_precision(cov: np.ndarray) -> tuple[np.ndarray, float]:
    """Inverse of cov + lambda*I with the scale-aware ridge; symmetrised."""
    lam = _ridge_lambda(cov)
    reg = cov + lam * np.eye(cov.shape[0])
    try:
        np.linalg.cholesky(reg)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance not positive definite after regularization") from exc
    prec = np.linalg.inv(reg)
    return (prec + prec.T) / 2.0, lam


def _quadforms(e: np.ndarray, centroids: np.ndarray, precision: np.ndarray) -> np.ndarray:
    diffs = centroids - e[None, :]
    return np.einsum("cd,de,ce->c", diffs, precision, diffs)


def _require_embeddings(split: LabeledSplit) -> np.ndarray:
    if split.embeddings is None:
        raise ValueError("split has no embeddings")
    return split.embeddings


def _class_partition(split: LabeledSplit, min_per_class: int):
    """Indices per class id 0..C-1; errors name any class that is short.

    Multilabel splits have no mutually exclusive classes, so they fit a
    single shared component over all embeddings.
    """
    X = _require_embeddings(split)
    if split.task != "multiclass":
        if X.shape[0] < min_per_class:
            raise ValueError(
                f"shared component has {X.shape[0]} train embeddings, need >= {min_per_class}"
            )
        return X, [np.arange(X.shape[0])]
    C = split.n_classes
    groups = []
    for c in range(C):
        idx = np.flatnonzero(split.labels == c)
        if idx.size == 0:
            raise ValueError(f"class {c} absent from train split")
        if idx.size < min_per_class:
            raise ValueError(f"class {c} has {idx.size} train embeddings, need >= {min_per_class}")
        groups.append(idx)
    return X, groups


# ---------------------------------------------------------------- Mahalanobis

@dataclass(frozen=True)
class MdModel:
    centroids: np.ndarray     # (C, d)
    covariance: np.ndarray    # (d, d) pooled within-class, denominator n - C
    precision: np.ndarray     # inverse of the ridged covariance
    ridge: float


def fit_md(train: LabeledSplit) -> MdModel:
    """Class centroids plus one shared within-class covariance."""
    X, groups = _class_partition(train, min_per_class=2)
    n, d = X.shape
    C = len(groups)
    centroids = np.empty((C, d))
    scatter = np.zeros((d, d))
    for c, idx in enumerate(groups):
        pts = X[idx]
        centroids[c] = pts.mean(axis=0)
        diff = pts - centroids[c]
        scatter += diff.T @ diff
    pooled = scatter / (n - C)
    precision, lam = _regularized_precision(pooled)
    return MdModel(centroids, pooled, precision, lam)


def score_md(e, model: MdModel) -> float:
    """Smallest squared Mahalanobis distance to any class centroid."""
    e = np.asarray(e, dtype=float)
    if e.shape != (model.centroids.shape[1],):
        raise ValueError("embedding dimension mismatch with fitted model")
    return float(_quadforms(e, model.centroids, model.precision).min())


# ------------------------------------------------------------ robust variant

@dataclass(frozen=True)
class KernelPcaBasis:
    """RBF kernel principal components fit on the train embeddings."""

    support: np.ndarray       # (n, d)
    gamma: float
    dual_vectors: np.ndarray  # (n, k): eigvec / sqrt(eigval)
    col_means: np.ndarray     # (n,) train-kernel column means
    grand_mean: float

    def transform(self, E: np.ndarray) -> np.ndarray:
        E = np.atleast_2d(np.asarray(E, dtype=float))
        K = np.exp(-self.gamma * cdist(E, self.support, "sqeuclidean"))
        Kc = K - self.col_means[None, :] - K.mean(axis=1, keepdims=True) + self.grand_mean
        return Kc @ self.dual_vectors


def fast_mcd(
    Z: np.ndarray,
    fraction: float = MCD_DEFAULT_FRACTION,
    rng: Optional[np.random.Generator] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Minimum-covariance-determinant location and scatter.

    Concentration steps: from a candidate subset, take the ``h`` points
    with the smallest Mahalanobis distance under the subset statistics
    and repeat; the determinant never increases.  Several restarts keep
    the search out of poor local minima.  Rows are canonicalised by
    lexicographic sort first, so the result ignores record order.
    """
    Z = np.asarray(Z, dtype=float)
    n, p = Z.shape
    if not 0.5 <= fraction <= 1.0:
        raise ValueError("subset fraction must lie in [0.5, 1]")
    Z = Z[np.lexsort(Z.T[::-1])]
    h = max(int(np.ceil(fraction * n)), int(np.ceil((n + p + 1) / 2)))
    h = min(h, n)
    if h >= n or h < p + 1:
        return Z.mean(axis=0), np.cov(Z, rowvar=False, ddof=1).reshape(p, p)
    if rng is None:
        rng = seeded_rng(0)

    def _stats(idx):
        pts = Z[idx]
        mu = pts.mean(axis=0)
        cov = np.cov(pts, rowvar=False, ddof=1).reshape(p, p)
        return mu, cov

    def _concentrate(idx):
        mu, cov = _stats(idx)
        det = float(np.linalg.det(cov))
        for _ in range(MCD_MAX_CSTEPS):
            lam = _ridge_lambda(cov)
            try:
                prec = np.linalg.inv(cov + lam * np.eye(p))
            except np.linalg.LinAlgError:
                prec = np.linalg.pinv(cov + lam * np.eye(p))
            diffs = Z - mu
            dist = np.einsum("ij,jk,ik->i", diffs, prec, diffs)
            idx = np.argsort(dist, kind="stable")[:h]
            mu, cov = _stats(idx)
            det_new = float(np.linalg.det(cov))
            if abs(det_new - det) < MCD_DET_TOL:
                det = det_new
                break
            det = det_new
        return det, mu, cov

    # one deterministic start (closest to the overall mean) + random restarts
    overall = Z.mean(axis=0)
    (first,) = (np.argsort(((Z - overall) ** 2).sum(axis=1), kind="stable")[:h],)
    starts = [first]
    for _ in range(MCD_RESTARTS - 1):
        starts.append(rng.choice(n, size=h, replace=False))
    best = None
    for idx in starts:
        det, mu, cov = _concentrate(np.asarray(idx))
        if best is None or det < best[0]:
            best = (det, mu, cov)
    det, mu, cov = best
    if det <= 0.0 or not np.isfinite(det):
        warnings.warn("degenerate MCD covariance; ridge applied", RuntimeWarning)
    return mu, cov


@dataclass(frozen=True)
class RdeModel:
    basis: KernelPcaBasis
    centroids: np.ndarray      # (C, k) robust locations in component space
    precisions: np.ndarray     # (C, k, k)
    n_components: int
    mcd_fraction: float
    seed: int


def fit_rde(
    train: LabeledSplit,
    n_components: Optional[int] = None,
    mcd_fraction: float = MCD_DEFAULT_FRACTION,
    seed: int = 0,
) -> RdeModel:
    """Global kernel PCA, then per-class robust statistics.

    The RBF width comes from the median pairwise distance heuristic.
    Components default to min(64, smallest class count - 2).  Inputs are
    canonicalised by row sort so record order cannot change the fit.
    """
    X, groups = _class_partition(train, min_per_class=2)
    comp = np.empty(X.shape[0], dtype=np.int64)
    for c, idx in enumerate(groups):
        comp[idx] = c
    order = np.lexsort(X.T[::-1])
    X = X[order]
    comp = comp[order]
    n = X.shape[0]
    min_class = min(len(g) for g in groups)
    if n_components is None:
        n_components = min(64, min_class - 2)
    k = int(n_components)
    if k < 1:
        raise ValueError("need at least one kernel component; classes too small")
    if any(len(g) < k + 2 for g in groups):
        raise ValueError(f"every class needs >= {k + 2} train embeddings for {k} components")
    if k > n - 1:
        raise ValueError(f"{k} components infeasible with {n} train rows")

    dists = pdist(X)
    med = float(np.median(dists)) if dists.size else 0.0
    if med <= 0.0:
        warnings.warn("median pairwise distance is zero; unit kernel width used", RuntimeWarning)
        med = 1.0
    gamma = 1.0 / (2.0 * med * med)

    K = np.exp(-gamma * cdist(X, X, "sqeuclidean"))
    col = K.mean(axis=0)
    grand = float(K.mean())
    Kc = K - col[None, :] - col[:, None] + grand
    evals, evecs = eigh(Kc, subset_by_index=(n - k, n - 1))
    evals, evecs = evals[::-1], evecs[:, ::-1]
    keep = evals > max(1e-12, 1e-10 * float(evals.max()))
    if not np.all(keep):
        warnings.warn(f"kernel spectrum collapsed; using {int(keep.sum())} components", RuntimeWarning)
        evals, evecs = evals[keep], evecs[:, keep]
        k = int(evals.size)
    basis = KernelPcaBasis(X, gamma, evecs / np.sqrt(evals)[None, :], col, grand)
    Z = basis.transform(X)

    rng = seeded_rng(seed)
    C = len(groups)
    centroids = np.empty((C, k))
    precisions = np.empty((C, k, k))
    for c in range(C):
        mu, cov = fast_mcd(Z[comp == c], mcd_fraction, rng)
        prec, _ = _regularized_precision(cov)
        centroids[c] = mu
        precisions[c] = prec
    return RdeModel(basis, centroids, precisions, k, mcd_fraction, seed)


def score_rde(e, model: RdeModel) -> float:
    """Smallest robust Mahalanobis distance in kernel component space."""
    e = np.asarray(e, dtype=float)
    if e.shape != (model.basis.support.shape[1],):
        raise ValueError("embedding dimension mismatch with fitted model")
    z = model.basis.transform(e[None, :])[0]
    diffs = model.centroids - z[None, :]
    quad = np.einsum("ck,ckj,cj->c", diffs, model.precisions, diffs)
    return float(quad.min())


# ----------------------------------------------------------- density mixture

@dataclass(frozen=True)
class DduModel:
    centroids: np.ndarray     # (C, d)
    precisions: np.ndarray    # (C, d, d) inverses of ridged per-class covs
    log_dets: np.ndarray      # (C,) log det of the ridged covariances
    log_priors: np.ndarray    # (C,) log empirical class frequencies


def fit_ddu(train: LabeledSplit) -> DduModel:
    """Per-class Gaussian fit with empirical-frequency priors."""
    X, groups = _class_partition(train, min_per_class=2)
    n, d = X.shape
    C = len(groups)
    centroids = np.empty((C, d))
    precisions = np.empty((C, d, d))
    log_dets = np.empty(C)
    log_priors = np.empty(C)
    for c, idx in enumerate(groups):
        pts = X[idx]
        centroids[c] = pts.mean(axis=0)
        cov = np.cov(pts, rowvar=False, ddof=1).reshape(d, d)
        lam = _ridge_lambda(cov)
        reg = cov + lam * np.eye(d)
        sign, logdet = np.linalg.slogdet(reg)
        if sign <= 0:
            raise ValueError("covariance not positive definite after regularization")
        prec, _ = _regularized_precision(cov)
        precisions[c] = prec
        log_dets[c] = logdet
        log_priors[c] = np.log(idx.size / n)
    return DduModel(centroids, precisions, log_dets, log_priors)


def score_ddu(e, model: DduModel) -> float:
    """Negative log of the prior-weighted Gaussian mixture density."""
    e = np.asarray(e, dtype=float)
    d = model.centroids.shape[1]
    if e.shape != (d,):
        raise ValueError("embedding dimension mismatch with fitted model")
    quad = np.einsum(
        "cd,cde,ce->c", model.centroids - e[None, :], model.precisions, model.centroids - e[None, :]
    )
    log_comp = model.log_priors - 0.5 * (d * np.log(2.0 * np.pi) + model.log_dets + quad)
    return float(-logsumexp(log_comp))


# ------------------------------------------------------- kernel noise scorer

@dataclass(frozen=True)
class NuqModel:
    embeddings: np.ndarray      # (n, d) train points kept verbatim
    label_matrix: np.ndarray    # (n, C) one-hot rows (bit rows if multilabel)
    bandwidth: float
    kernel_constant: float      # bandwidth**d / (2 sqrt(pi))


def fit_nuq(train: LabeledSplit, bandwidth="auto") -> NuqModel:
    """Store the train sample and pick the kernel bandwidth.

    "auto" takes median pairwise distance / sqrt(2).
    """
    X = _require_embeddings(train)
    n, d = X.shape
    if n < 2:
        raise ValueError("kernel fit needs at least two train embeddings")
    if bandwidth == "auto":
        dists = pdist(X)
        med = float(np.median(dists))
        if med <= 0.0:
            raise ValueError("degenerate train sample: median pairwise distance is zero")
        h = med / np.sqrt(2.0)
    else:
        h = float(bandwidth)
        if not h > 0.0:
            raise ValueError("bandwidth must be positive")
    if train.task == "multiclass":
        C = train.n_classes
        Y = np.zeros((n, C))
        Y[np.arange(n), train.labels] = 1.0
    else:
        Y = train.labels.astype(float)
    return NuqModel(X, Y, h, h**d / (2.0 * np.sqrt(np.pi)))


def score_nuq(e, model: NuqModel) -> float:
    """Kernel estimate of the pointwise label-noise rate, scaled.

    Kernel-weighted class frequencies give per-class Bernoulli variances
    p(1-p); the worst one, divided by the kernel density estimate and
    the sample size (times the bandwidth constant), is the squared
    spread of the noise estimate.  The score is 2 sqrt(2/pi) times that
    spread.  Where the density estimate underflows the score is +inf
    with a warning, keeping far-away points maximally uncertain.
    """
    e = np.asarray(e, dtype=float)
    n, d = model.embeddings.shape
    if e.shape != (d,):
        raise ValueError("embedding dimension mismatch with fitted model")
    h2 = model.bandwidth * model.bandwidth
    sq = ((model.embeddings - e[None, :]) ** 2).sum(axis=1)
    w = np.exp(-sq / (2.0 * h2))
    wsum = float(w.sum())
    density = wsum / (n * (2.0 * np.pi) ** (d / 2.0) * model.bandwidth**d)
    if density < DENSITY_UNDERFLOW:
        warnings.warn("density underflow: embedding far outside the train support", RuntimeWarning)
        return float("inf")
    p_class = (w @ model.label_matrix) / wsum
    sig2_max = float((p_class * (1.0 - p_class)).max())
    tau2 = model.kernel_constant / n * sig2_max / density
    return float(2.0 * np.sqrt(2.0 / np.pi) * np.sqrt(tau2))
