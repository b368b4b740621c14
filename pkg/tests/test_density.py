import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from abstain.core import LabeledSplit, seeded_rng
from abstain.density import (
    DduModel,
    _ridge_lambda,
    fast_mcd,
    fit_ddu,
    fit_md,
    fit_nuq,
    fit_rde,
    score_ddu,
    score_md,
    score_nuq,
    score_rde,
)

# 2-class symmetric fixture used by several MD/DDU checks
CLASS0 = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
CLASS1 = CLASS0 + np.array([4.0, 0.0])


def two_class_split(repeat=1):
    X = np.vstack([CLASS0, CLASS1])
    labels = np.array([0] * 4 + [1] * 4)
    if repeat > 1:
        X = np.tile(X, (repeat, 1))
        labels = np.tile(labels, repeat)
    probs = np.full((len(labels), 2), 0.5)
    return LabeledSplit(probs, labels, "multiclass", "train", X)


def random_split(n, C, d, seed, spread=4.0):
    rng = seeded_rng(seed)
    labels = np.arange(n) % C
    centers = rng.normal(size=(C, d)) * spread
    X = centers[labels] + rng.normal(size=(n, d))
    return LabeledSplit(np.full((n, C), 1.0 / C), labels, "multiclass", "train", X)


# ------------------------------------------------------------------ MD


def test_md_centroids_and_pooled_covariance():
    model = fit_md(two_class_split())
    assert np.allclose(model.centroids, [[0.0, 0.0], [4.0, 0.0]], atol=1e-15)
    # per-class scatter diag(2,2); pooled over n-C=6
    assert np.allclose(model.covariance, np.diag([2 / 3, 2 / 3]), atol=1e-15)


def test_md_precision_matches_direct_inverse():
    model = fit_md(two_class_split())
    lam = 1e-6 * np.trace(model.covariance) / 2
    direct = np.linalg.inv(model.covariance + lam * np.eye(2))
    assert np.allclose(model.precision, direct, atol=1e-9)


def test_md_score_at_centroid_is_zero():
    model = fit_md(two_class_split())
    assert score_md(np.array([0.0, 0.0]), model) == 0.0
    assert score_md(np.array([4.0, 0.0]), model) == 0.0


def test_md_equidistant_point_matches_quadform_oracle():
    model = fit_md(two_class_split())
    e = np.array([2.0, 0.0])
    # naive per-class quadratic forms
    dists = [
        float((e - c) @ model.precision @ (e - c)) for c in model.centroids
    ]
    assert dists[0] == pytest.approx(dists[1], abs=1e-12)
    assert score_md(e, model) == pytest.approx(min(dists), abs=1e-12)


def test_md_duplication_changes_covariance_by_denominator_only():
    # duplicating every point doubles the scatter but moves the pooled
    # denominator from n-C to 2n-C, so the covariance picks up exactly
    # that ratio; centroids stay identical
    base = fit_md(two_class_split())
    doubled = fit_md(two_class_split(repeat=2))
    assert np.array_equal(base.centroids, doubled.centroids)
    n, C = 8, 2
    factor = (2 * (n - C)) / (2 * n - C)
    assert np.allclose(doubled.covariance, base.covariance * factor, atol=1e-12)


def test_md_absent_class_error():
    probs = np.full((4, 3), 1 / 3)
    split = LabeledSplit(probs, [0, 0, 1, 1], "multiclass", "train",
                         np.arange(8.0).reshape(4, 2))
    with pytest.raises(ValueError, match="class 2 absent"):
        fit_md(split)


def test_md_short_class_error():
    probs = np.full((3, 2), 0.5)
    split = LabeledSplit(probs, [0, 0, 1], "multiclass", "train",
                         np.arange(6.0).reshape(3, 2))
    with pytest.raises(ValueError, match="class 1 has 1"):
        fit_md(split)


def test_md_dimension_mismatch():
    model = fit_md(two_class_split())
    with pytest.raises(ValueError, match="dimension mismatch"):
        score_md(np.zeros(3), model)


def test_md_multilabel_fits_single_shared_component():
    rng = seeded_rng(4)
    X = rng.normal(size=(12, 2))
    bits = rng.integers(0, 2, size=(12, 3))
    split = LabeledSplit(np.full((12, 3), 0.5), bits, "multilabel", "train", X)
    model = fit_md(split)
    assert model.centroids.shape == (1, 2)
    assert np.allclose(model.centroids[0], X.mean(axis=0))
    assert np.allclose(model.covariance, np.cov(X, rowvar=False, ddof=1))


def test_md_similarity_transform_invariance():
    split = random_split(120, 3, 5, seed=9)
    rng = seeded_rng(11)
    Q = np.linalg.qr(rng.normal(size=(5, 5)))[0] * 1.7
    b = rng.normal(size=5)
    mapped = LabeledSplit(split.probs, split.labels, "multiclass", "train",
                          split.embeddings @ Q.T + b)
    m1, m2 = fit_md(split), fit_md(mapped)
    for _ in range(20):
        e = rng.normal(size=5) * 3
        s1 = score_md(e, m1)
        s2 = score_md(e @ Q.T + b, m2)
        assert s2 == pytest.approx(s1, rel=1e-9)


@given(st.integers(0, 1000))
@settings(max_examples=20, deadline=None)
def test_md_scores_nonnegative(seed):
    split = random_split(30, 3, 2, seed=seed)
    model = fit_md(split)
    q = seeded_rng(seed + 1).normal(size=2) * 10
    assert score_md(q, model) >= 0.0


def test_ridge_lambda_floor():
    assert _ridge_lambda(np.zeros((3, 3))) == 1e-12


# ------------------------------------------------------------------ MCD


def exhaustive_mcd_det(X, h):
    """Minimum determinant over every size-h subset, brute force."""
    best = math.inf
    for idx in itertools.combinations(range(X.shape[0]), h):
        sub = X[list(idx)]
        d = np.linalg.det(np.cov(sub, rowvar=False, ddof=1))
        best = min(best, d)
    return best


@pytest.mark.parametrize("seed", range(5))
def test_fast_mcd_matches_exhaustive_oracle(seed):
    rng = seeded_rng(seed)
    X = rng.normal(size=(12, 2)) * 2.0
    mu, cov = fast_mcd(X, 0.75, seeded_rng(100 + seed))
    h = max(math.ceil(0.75 * 12), math.ceil((12 + 2 + 1) / 2))
    target = exhaustive_mcd_det(X, h)
    got = np.linalg.det(cov)
    assert got <= 1.05 * target + 1e-12


def test_fast_mcd_resists_planted_outliers():
    rng = seeded_rng(1)
    clean = rng.normal(size=(20, 2)) * 0.3
    X = np.vstack([clean, [[25.0, 25.0], [-30.0, 40.0]]])
    mu, cov = fast_mcd(X, 0.75, seeded_rng(2))
    assert np.linalg.norm(mu - clean.mean(axis=0)) < 0.1
    assert np.linalg.norm(X.mean(axis=0) - clean.mean(axis=0)) > 0.5


def test_fast_mcd_identical_points_degenerate_warning():
    X = np.ones((10, 2))
    with pytest.warns(RuntimeWarning, match="degenerate MCD covariance"):
        mu, cov = fast_mcd(X, 0.75, seeded_rng(0))
    assert np.allclose(mu, [1.0, 1.0])


def test_fast_mcd_record_order_invariant():
    rng = seeded_rng(3)
    X = rng.normal(size=(15, 2))
    perm = seeded_rng(4).permutation(15)
    mu1, cov1 = fast_mcd(X, 0.75, seeded_rng(9))
    mu2, cov2 = fast_mcd(X[perm], 0.75, seeded_rng(9))
    assert np.array_equal(mu1, mu2)
    assert np.array_equal(cov1, cov2)


# ------------------------------------------------------------------ RDE


def test_rde_identical_class_scores_zero_at_its_point():
    rng = seeded_rng(2)
    X = np.vstack([np.zeros((10, 2)), rng.normal(size=(10, 2)) + 5.0])
    labels = np.array([0] * 10 + [1] * 10)
    split = LabeledSplit(np.full((20, 2), 0.5), labels, "multiclass", "train", X)
    model = fit_rde(split, seed=0)
    assert score_rde(np.zeros(2), model) == pytest.approx(0.0, abs=1e-6)


def test_rde_far_point_beats_train_quantile():
    split = random_split(80, 2, 3, seed=6)
    model = fit_rde(split, seed=0)
    train_scores = np.array([score_rde(e, model) for e in split.embeddings])
    far = score_rde(np.full(3, 60.0), model)
    assert far > np.quantile(train_scores, 0.99)


def test_rde_shuffle_invariance_is_exact():
    split = random_split(60, 3, 4, seed=12)
    perm = seeded_rng(13).permutation(60)
    shuffled = LabeledSplit(split.probs[perm], split.labels[perm], "multiclass",
                            "train", split.embeddings[perm])
    m1 = fit_rde(split, seed=5)
    m2 = fit_rde(shuffled, seed=5)
    queries = seeded_rng(14).normal(size=(10, 4)) * 4
    s1 = np.array([score_rde(q, m1) for q in queries])
    s2 = np.array([score_rde(q, m2) for q in queries])
    assert np.array_equal(s1, s2)


@pytest.mark.filterwarnings("ignore:degenerate MCD covariance")
def test_rde_spectrum_collapse_reduces_components():
    rng = seeded_rng(4)
    locs0 = rng.normal(size=(3, 2))
    locs1 = rng.normal(size=(3, 2)) + 6
    X = np.vstack([locs0[np.arange(10) % 3], locs1[np.arange(10) % 3]])
    labels = np.array([0] * 10 + [1] * 10)
    split = LabeledSplit(np.full((20, 2), 0.5), labels, "multiclass", "train", X)
    with pytest.warns(RuntimeWarning, match="kernel spectrum collapsed"):
        model = fit_rde(split, seed=0)
    assert model.n_components < 8


def test_rde_component_count_validation():
    split = random_split(20, 2, 2, seed=0)
    with pytest.raises(ValueError, match=">= 14"):
        fit_rde(split, n_components=12)
    with pytest.raises(ValueError, match="at least one"):
        fit_rde(split, n_components=0)


def test_rde_dimension_mismatch():
    model = fit_rde(random_split(30, 2, 2, seed=1), seed=0)
    with pytest.raises(ValueError, match="dimension mismatch"):
        score_rde(np.zeros(5), model)


# ------------------------------------------------------------------ DDU


def test_ddu_standard_normal_closed_form():
    # single component, mean 0, identity covariance, query at the mean:
    # density 1/(2 pi), score is its negative log
    model = DduModel(np.zeros((1, 2)), np.eye(2)[None], np.zeros(1), np.zeros(1))
    assert score_ddu(np.zeros(2), model) == pytest.approx(np.log(2 * np.pi), abs=1e-12)


def test_ddu_priors_are_label_frequencies():
    split = random_split(40, 2, 2, seed=3)  # alternating labels, 20/20
    model = fit_ddu(split)
    assert np.allclose(np.exp(model.log_priors), [0.5, 0.5], atol=1e-12)
    rng = seeded_rng(8)
    X = rng.normal(size=(40, 2))
    labels = np.array([0] * 32 + [1] * 8)
    X[labels == 1] += 5
    split2 = LabeledSplit(np.full((40, 2), 0.5), labels, "multiclass", "train", X)
    assert np.allclose(np.exp(fit_ddu(split2).log_priors), [0.8, 0.2], atol=1e-12)


def test_ddu_class_covariance_matches_hand_value():
    model = fit_ddu(two_class_split())
    cov = np.diag([2 / 3, 2 / 3])
    lam = 1e-6 * np.trace(cov) / 2
    assert np.allclose(model.precisions[0], np.linalg.inv(cov + lam * np.eye(2)), atol=1e-9)


def test_ddu_two_identical_classes_collapse_to_one():
    rng = seeded_rng(2)
    pts = rng.normal(size=(12, 3))
    X = np.vstack([pts, pts])
    labels = np.array([0] * 12 + [1] * 12)
    split = LabeledSplit(np.full((24, 2), 0.5), labels, "multiclass", "train", X)
    mixture = fit_ddu(split)
    cov = np.cov(pts, rowvar=False, ddof=1)
    lam = _ridge_lambda(cov)
    reg = cov + lam * np.eye(3)
    single = DduModel(pts.mean(axis=0)[None], np.linalg.inv(reg)[None],
                      np.array([np.linalg.slogdet(reg)[1]]), np.array([0.0]))
    for _ in range(10):
        q = rng.normal(size=3) * 2
        assert score_ddu(q, mixture) == pytest.approx(score_ddu(q, single), abs=1e-12)


def test_ddu_logsumexp_matches_naive_density_sum():
    split = random_split(60, 3, 2, seed=7)
    model = fit_ddu(split)
    rng = seeded_rng(9)
    for _ in range(20):
        q = rng.normal(size=2) * 3
        dens = 0.0
        for c in range(3):
            diff = q - model.centroids[c]
            quad = diff @ model.precisions[c] @ diff
            # naive: prior * (2 pi)^(-d/2) * det^(-1/2) * exp(-quad/2)
            dens += np.exp(model.log_priors[c]) * (2 * np.pi) ** -1 \
                * np.exp(-0.5 * model.log_dets[c]) * np.exp(-0.5 * quad)
        if dens > 1e-290:
            assert score_ddu(q, model) == pytest.approx(-np.log(dens), abs=1e-9)


def test_ddu_score_grows_with_distance():
    model = fit_ddu(two_class_split())
    scores = [score_ddu(np.array([x, 0.0]), model) for x in (6.0, 10.0, 20.0, 40.0)]
    assert all(a < b for a, b in zip(scores, scores[1:]))
    assert np.isfinite(scores[0])


# ------------------------------------------------------------------ NUQ


def test_nuq_kernel_constant_fixtures():
    rng = seeded_rng(0)
    X2 = rng.normal(size=(6, 2))
    sp2 = LabeledSplit(np.full((6, 2), 0.5), [0, 1, 0, 1, 0, 1], "multiclass", "train", X2)
    m = fit_nuq(sp2, bandwidth=1.0)
    assert m.kernel_constant == pytest.approx(0.28209479177387814, abs=1e-15)
    X1 = rng.normal(size=(6, 1))
    sp1 = LabeledSplit(np.full((6, 2), 0.5), [0, 1, 0, 1, 0, 1], "multiclass", "train", X1)
    m1 = fit_nuq(sp1, bandwidth=2.0)
    assert m1.kernel_constant == pytest.approx(0.5641895835477563, abs=1e-15)


def test_nuq_auto_bandwidth_is_median_over_sqrt2():
    X = np.array([[0.0], [1.0], [3.0], [7.0]])
    # pairwise distances 1,3,7,2,6,4 -> median 3.5
    sp = LabeledSplit(np.full((4, 2), 0.5), [0, 1, 0, 1], "multiclass", "train", X)
    m = fit_nuq(sp)
    assert m.bandwidth == pytest.approx(3.5 / np.sqrt(2), abs=1e-15)


def test_nuq_single_label_gives_zero():
    rng = seeded_rng(1)
    X = rng.normal(size=(8, 2))
    bits = np.ones((8, 1), dtype=int)
    # multilabel path with a constant bit: no label variance anywhere
    sp = LabeledSplit(np.full((8, 2), 0.9), np.hstack([bits, bits]), "multilabel",
                      "train", X)
    m = fit_nuq(sp, bandwidth=1.0)
    assert score_nuq(X[0], m) == 0.0


def naive_nuq(e, X, labels, C, h):
    n, d = X.shape
    weights = []
    for i in range(n):
        s = 0.0
        for k in range(d):
            s += (X[i][k] - e[k]) ** 2
        weights.append(math.exp(-s / (2 * h * h)))
    wsum = sum(weights)
    dens = wsum / (n * (2 * math.pi) ** (d / 2) * h ** d)
    if dens < 1e-300:
        return float("inf")
    worst = 0.0
    for c in range(C):
        pc = sum(w for w, l in zip(weights, labels) if l == c) / wsum
        worst = max(worst, pc * (1 - pc))
    tau2 = (h ** d / (2 * math.sqrt(math.pi))) / n * worst / dens
    return 2 * math.sqrt(2 / math.pi) * math.sqrt(tau2)


@pytest.mark.parametrize("seed", range(8))
def test_nuq_matches_naive_double_loop(seed):
    rng = seeded_rng(seed)
    n = int(rng.integers(5, 51))
    d = int(rng.integers(1, 4))
    C = int(rng.integers(2, 5))
    X = rng.normal(size=(n, d)) * 3
    labels = rng.integers(0, C, size=n)
    labels[:C] = np.arange(C)
    sp = LabeledSplit(np.full((n, C), 1.0 / C), labels, "multiclass", "train", X)
    model = fit_nuq(sp)
    for _ in range(6):
        e = rng.normal(size=d) * 3
        got = score_nuq(e, model)
        want = naive_nuq(e, X, labels, C, model.bandwidth)
        if math.isinf(want):
            assert math.isinf(got)
        else:
            assert got == pytest.approx(want, abs=1e-10)


def test_nuq_duplication_scales_by_sample_size():
    rng = seeded_rng(4)
    X = rng.normal(size=(12, 2))
    labels = rng.integers(0, 2, 12)
    labels[:2] = [0, 1]
    sp = LabeledSplit(np.full((12, 2), 0.5), labels, "multiclass", "train", X)
    m1 = fit_nuq(sp, bandwidth=1.3)
    sp2 = LabeledSplit(np.full((24, 2), 0.5), np.tile(labels, 2), "multiclass",
                       "train", np.tile(X, (2, 1)))
    m2 = fit_nuq(sp2, bandwidth=1.3)
    q = rng.normal(size=2) * 0.5
    # tau^2 carries a 1/|D| factor, so the score drops by sqrt(1/2)
    assert score_nuq(q, m2) / score_nuq(q, m1) == pytest.approx(1 / np.sqrt(2), abs=1e-12)


def test_nuq_underflow_returns_inf_with_warning():
    rng = seeded_rng(5)
    X = rng.normal(size=(10, 2))
    sp = LabeledSplit(np.full((10, 2), 0.5), rng.integers(0, 2, 10), "multiclass",
                      "train", X)
    m = fit_nuq(sp, bandwidth=0.05)
    with pytest.warns(RuntimeWarning, match="density underflow"):
        out = score_nuq(np.array([500.0, -500.0]), m)
    assert out == float("inf")


def test_nuq_bandwidth_validation():
    sp = random_split(10, 2, 2, seed=0)
    with pytest.raises(ValueError, match="positive"):
        fit_nuq(sp, bandwidth=0.0)
    same = LabeledSplit(np.full((4, 2), 0.5), [0, 1, 0, 1], "multiclass", "train",
                        np.ones((4, 2)))
    with pytest.raises(ValueError, match="median pairwise distance is zero"):
        fit_nuq(same)
