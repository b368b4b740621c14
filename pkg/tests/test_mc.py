import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp
from scipy.special import xlogy

from abstain.mc import score_bald, score_pv, score_smp

TWO_PASS = np.array([[1.0, 0.0], [0.0, 1.0]])


def test_smp_hand_values():
    assert score_smp(TWO_PASS) == pytest.approx(0.5, abs=1e-15)
    t = np.array([[0.8, 0.2], [0.6, 0.4]])
    assert score_smp(t) == pytest.approx(0.3, abs=1e-15)


def test_pv_hand_value():
    # disagreeing one-hot passes: each class variance is 0.5 with ddof=1
    assert score_pv(TWO_PASS) == pytest.approx(0.5, abs=1e-15)


def test_bald_hand_value():
    # total disagreement: mutual information = ln 2 (up to the 1e-12 clamp)
    assert score_bald(TWO_PASS) == pytest.approx(np.log(2.0), abs=1e-10)


def test_duplicated_rows_are_exactly_zero():
    rng = np.random.default_rng(5)
    for T in (2, 3, 7, 8, 20):
        row = rng.random(6)
        row /= row.sum()
        dup = np.tile(row, (T, 1))
        assert score_pv(dup) == 0.0
        assert score_bald(dup) == 0.0


def test_input_validation():
    with pytest.raises(ValueError, match="rectangular"):
        score_smp(np.array([0.5, 0.5]))
    with pytest.raises(ValueError, match="two classes"):
        score_smp(np.ones((3, 1)))
    with pytest.raises(ValueError, match="at least 2 passes"):
        score_pv(np.array([[0.5, 0.5]]))
    with pytest.raises(ValueError, match="\\[0, 1\\]"):
        score_bald(np.array([[0.5, 1.5]]))


tensors = hnp.arrays(
    np.float64, st.tuples(st.integers(2, 8), st.integers(2, 5)),
    elements=st.floats(1e-6, 1.0),
).map(lambda t: t / t.sum(axis=1, keepdims=True))


@given(tensors)
def test_aggregators_nonnegative(t):
    assert score_pv(t) >= 0.0
    assert score_bald(t) >= 0.0
    assert 0.0 <= score_smp(t) <= 1.0


@given(tensors)
def test_bald_bounded_by_mean_entropy(t):
    m = t.mean(axis=0)
    h_mean = float(-xlogy(m, m).sum())
    assert score_bald(t) <= h_mean + 1e-9


@given(tensors, st.randoms(use_true_random=False))
@settings(max_examples=50)
def test_pass_order_invariance(t, pyrng):
    perm = list(range(t.shape[0]))
    pyrng.shuffle(perm)
    shuffled = t[perm]
    assert score_smp(shuffled) == pytest.approx(score_smp(t), abs=1e-12)
    assert score_pv(shuffled) == pytest.approx(score_pv(t), abs=1e-12)
    assert score_bald(shuffled) == pytest.approx(score_bald(t), abs=1e-12)
