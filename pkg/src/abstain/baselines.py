"""Output-probability scorers: softmax response, per-label ambiguity,
top-two margin, predictive entropy, and a Beta-mixture posterior over
the maximum class probability.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special

from .core import LabeledSplit, validate_probs

PROB_CLAMP = 1e-6      # keeps Beta densities and their logs finite
SHAPE_CAP = 1e4        # Beta shape bound when a group has no spread
MLE_TOL = 1e-8
MLE_MAX_ITER = 200


def score_sr(p) -> float:
    """1 - max class probability."""
    p = validate_probs(p, normalized=True)
    return float(1.0 - p.max())


def score_mp_labelwise(p, i: int) -> float:
    """Ambiguity of one sigmoid output: 1 - max(p_i, 1 - p_i)."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 1:
        raise ValueError("expected a 1-D probability vector")
    if not 0 <= i < p.shape[0]:
        raise IndexError(f"label index {i} out of range for {p.shape[0]} labels")
    pi = float(p[i])
    if not np.isfinite(pi) or pi < 0.0 or pi > 1.0:
        raise ValueError("probability entry outside [0, 1]")
    return 1.0 - max(pi, 1.0 - pi)


def score_delta(p) -> float:
    """1 - (top probability - second probability); 0 iff a hard one-hot."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.shape[0] < 2:
        raise ValueError("margin needs at least two classes")
    if not np.all(np.isfinite(p)) or np.any(p < 0.0) or np.any(p > 1.0):
        raise ValueError("probability entry outside [0, 1]")
    top2 = np.partition(p, -2)[-2:]
    return float(1.0 - (top2[1] - top2[0]))


def score_entropy(p) -> float:
    """Shannon entropy in nats, with 0 * log 0 = 0."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.shape[0] < 2:
        raise ValueError("entropy needs at least two classes")
    if not np.all(np.isfinite(p)) or np.any(p < 0.0):
        raise ValueError("negative or non-finite probability entry")
    return float(-special.xlogy(p, p).sum())


@dataclass(frozen=True)
class BetaModel:
    """Two Beta densities over the max class probability plus priors."""

    alpha_correct: float
    gamma_correct: float
    alpha_incorrect: float
    gamma_incorrect: float
    prior_correct: float
    prior_incorrect: float
    shape_capped: bool = False

    def __post_init__(self):
        for name in ("alpha_correct", "gamma_correct", "alpha_incorrect", "gamma_incorrect"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if abs(self.prior_correct + self.prior_incorrect - 1.0) > 1e-9:
            raise ValueError("priors must sum to 1")
        if self.prior_correct < 0.0 or self.prior_incorrect < 0.0:
            raise ValueError("negative prior")


def _beta_loglik(a: float, g: float, m1: float, m2: float) -> float:
    return (a - 1.0) * m1 + (g - 1.0) * m2 - special.betaln(a, g)


def _grid_mle(m1: float, m2: float) -> tuple[float, float]:
    """Coarse-to-fine likelihood grid; the crash pad when Newton stalls."""
    lo, hi = 1e-2, SHAPE_CAP
    grid = np.geomspace(lo, hi, 200)
    best = (1.0, 1.0)
    for _ in range(3):
        ll = (
            np.add.outer((grid - 1.0) * m1, (grid - 1.0) * m2)
            - special.betaln(grid[:, None], grid[None, :])
        )
        ia, ig = np.unravel_index(np.argmax(ll), ll.shape)
        best = (float(grid[ia]), float(grid[ig]))
        span = grid[1] / grid[0]
        grid_a = np.geomspace(max(best[0] / span, 1e-3), min(best[0] * span, SHAPE_CAP), 60)
        grid_g = np.geomspace(max(best[1] / span, 1e-3), min(best[1] * span, SHAPE_CAP), 60)
        ll = (
            np.add.outer((grid_a - 1.0) * m1, (grid_g - 1.0) * m2)
            - special.betaln(grid_a[:, None], grid_g[None, :])
        )
        ia, ig = np.unravel_index(np.argmax(ll), ll.shape)
        best = (float(grid_a[ia]), float(grid_g[ig]))
        grid = np.geomspace(max(best[0] / 2, 1e-3), min(best[0] * 2, SHAPE_CAP), 200)
    return best


def _fit_beta_group(x: np.ndarray) -> tuple[float, float, bool]:
    """Max-likelihood Beta shapes for one sample.

    Newton iterations on the digamma stationarity conditions, started
    from method-of-moments.  Degenerate (zero-spread) samples cap the
    shapes at SHAPE_CAP with the sample mean preserved.
    """
    x = np.clip(np.asarray(x, dtype=float), PROB_CLAMP, 1.0 - PROB_CLAMP)
    mean = float(x.mean())
    var = float(x.var(ddof=1)) if x.size > 1 else 0.0
    if var < 1e-12:
        scale = SHAPE_CAP / max(mean, 1.0 - mean)
        warnings.warn("beta shapes capped: group has no spread", RuntimeWarning)
        return mean * scale, (1.0 - mean) * scale, True
    m1 = float(np.log(x).mean())
    m2 = float(np.log1p(-x).mean())
    common = mean * (1.0 - mean) / var - 1.0
    a = max(mean * common, 1e-3)
    g = max((1.0 - mean) * common, 1e-3)
    converged = False
    for _ in range(MLE_MAX_ITER):
        tri_ab = special.polygamma(1, a + g)
        f1 = special.digamma(a) - special.digamma(a + g) - m1
        f2 = special.digamma(g) - special.digamma(a + g) - m2
        j11 = special.polygamma(1, a) - tri_ab
        j22 = special.polygamma(1, g) - tri_ab
        det = j11 * j22 - tri_ab * tri_ab
        if not np.isfinite(det) or abs(det) < 1e-300:
            break
        da = -(j22 * f1 + tri_ab * f2) / det
        dg = -(tri_ab * f1 + j11 * f2) / det
        step = 1.0
        while (a + step * da <= 0.0 or g + step * dg <= 0.0) and step > 1e-8:
            step *= 0.5
        a_new, g_new = a + step * da, g + step * dg
        if a_new > 10.0 * SHAPE_CAP or g_new > 10.0 * SHAPE_CAP:
            break
        moved = max(abs(a_new - a), abs(g_new - g))
        a, g = a_new, g_new
        if moved < MLE_TOL:
            converged = True
            break
    if not converged:
        a, g = _grid_mle(m1, m2)
    capped = False
    if a > SHAPE_CAP or g > SHAPE_CAP:
        shrink = SHAPE_CAP / max(a, g)
        a, g = a * shrink, g * shrink
        capped = True
        warnings.warn("beta shapes capped at 1e4", RuntimeWarning)
    return float(a), float(g), capped


def fit_beta(validation: LabeledSplit) -> BetaModel:
    """Fit the correctness mixture on held-out max probabilities.

    The observable is the max softmax probability per instance; group
    membership is whether the argmax matched the label.  Priors are the
    empirical group frequencies.
    """
    if validation.task != "multiclass":
        raise ValueError("beta fitting is defined for multiclass splits")
    probs = validation.probs
    maxprob = probs.max(axis=1)
    correct = probs.argmax(axis=1) == validation.labels
    n_c = int(correct.sum())
    n_i = int((~correct).sum())
    if n_c < 2 or n_i < 2:
        raise ValueError(
            f"degenerate validation split: {n_c} correct / {n_i} incorrect, need >= 2 each"
        )
    a_c, g_c, cap_c = _fit_beta_group(maxprob[correct])
    a_i, g_i, cap_i = _fit_beta_group(maxprob[~correct])
    n = n_c + n_i
    return BetaModel(a_c, g_c, a_i, g_i, n_c / n, n_i / n, cap_c or cap_i)


def score_beta(p, model: BetaModel) -> float:
    """1 - posterior probability of correctness given the max probability."""
    p = validate_probs(p, normalized=True)
    x = float(np.clip(p.max(), PROB_CLAMP, 1.0 - PROB_CLAMP))
    lx, l1x = np.log(x), np.log1p(-x)
    log_c = (model.alpha_correct - 1.0) * lx + (model.gamma_correct - 1.0) * l1x - special.betaln(
        model.alpha_correct, model.gamma_correct
    )
    log_i = (model.alpha_incorrect - 1.0) * lx + (model.gamma_incorrect - 1.0) * l1x - special.betaln(
        model.alpha_incorrect, model.gamma_incorrect
    )
    with np.errstate(divide="ignore"):
        num = np.log(model.prior_correct) + log_c
        other = np.log(model.prior_incorrect) + log_i
    if np.isneginf(num):
        return 1.0
    if np.isneginf(other):
        return 0.0
    posterior = float(np.exp(num - np.logaddexp(num, other)))
    return 1.0 - posterior
