"""Rank-space combinators pairing an ambiguity scorer with a novelty
scorer.

Raw scores from different families live on incompatible scales, so both
inputs are reduced to ranks over held-out score tables before mixing.
Two variants are provided: a three-region rule that routes each
instance by thresholds on the novelty score, and a smooth product form
whose squared ranks are damped by the complementary rank.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import LabeledSplit, rank, rank_all
from .rejection import (
    build_curve,
    curve_auc,
    multiclass_losses,
)

ALPHA_GRID = tuple(i / 20.0 for i in range(21))
DELTA_MIN_QUANTILES = (0.50, 0.60, 0.70, 0.80, 0.90, 0.95, 0.99, 1.00)
DELTA_MAX_QUANTILES = (0.00, 0.50, 0.70, 0.80, 0.90, 0.95)
C_GRID = (1, 2, 3)
MIN_CALIBRATION = 20

VARIANTS = ("huq", "huq2")
OBJECTIVES = ("rc_auc", "fr_auc")


@dataclass(frozen=True)
class HybridConfig:
    """Fitted hyperparameters plus the held-out rank tables."""

    variant: str
    alpha: float
    delta_min: float
    delta_max: float
    c: int
    n_validation: int
    table_ambiguity: np.ndarray      # sorted held-out ambiguity scores
    table_ambiguity_id: np.ndarray   # same, restricted to low-novelty rows
    table_novelty: np.ndarray        # sorted held-out novelty scores

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.c not in C_GRID:
            raise ValueError(f"c must be one of {C_GRID}")
        for name in ("table_ambiguity", "table_ambiguity_id", "table_novelty"):
            t = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, t)
            if t.size and np.any(np.diff(t) < 0):
                raise ValueError(f"{name} must be sorted ascending")
        if self.n_validation < 1:
            raise ValueError("empty validation table")

    @property
    def case_offset(self) -> int:
        # strictly above any reachable rank, so the three regions of the
        # threshold rule can never interleave
        return self.n_validation + 2


def score_huq(u_ambiguity: float, u_novelty: float, config: HybridConfig) -> float:
    """Three-region rule on the novelty threshold.

    Low novelty and low ambiguity: rank the ambiguity score inside the
    low-novelty table.  Low novelty but high ambiguity: rank it over the
    whole table.  High novelty: mix both ranks with weight alpha.  Each
    region is offset above the previous one.
    """
    base = config.case_offset
    if u_novelty <= config.delta_min:
        if u_ambiguity <= config.delta_max:
            return float(rank(u_ambiguity, config.table_ambiguity_id))
        return float(rank(u_ambiguity, config.table_ambiguity) + base)
    mixed = (1.0 - config.alpha) * rank(u_novelty, config.table_novelty) + config.alpha * rank(
        u_ambiguity, config.table_ambiguity
    )
    return float(mixed + 2 * base)


def score_huq2(u_ambiguity: float, u_novelty: float, config: HybridConfig) -> float:
    """Smooth product form over squared ranks.

    Each squared rank is damped by a linear leverage term in the other
    score's rank: l(u) = 1 - R(u)/(c * N).
    """
    n = config.n_validation
    r_a = rank(u_ambiguity, config.table_ambiguity)
    r_e = rank(u_novelty, config.table_novelty)
    lever_a = 1.0 - r_a / (config.c * n)
    lever_e = 1.0 - r_e / (config.c * n)
    return float(
        (1.0 - config.alpha) * r_e * r_e * lever_a + config.alpha * r_a * r_a * lever_e
    )


def _huq_batch(u_a, u_e, config: HybridConfig) -> np.ndarray:
    base = config.case_offset
    r_a = rank_all(u_a, config.table_ambiguity).astype(float)
    r_e = rank_all(u_e, config.table_novelty).astype(float)
    in_dist = u_e <= config.delta_min
    ambiguous = in_dist & (u_a > config.delta_max)
    plain = in_dist & ~ambiguous
    out = (1.0 - config.alpha) * r_e + config.alpha * r_a + 2 * base
    out[ambiguous] = r_a[ambiguous] + base
    if np.any(plain):
        out[plain] = rank_all(u_a[plain], config.table_ambiguity_id).astype(float)
    return out


def _huq2_batch(u_a, u_e, config: HybridConfig) -> np.ndarray:
    n = config.n_validation
    r_a = rank_all(u_a, config.table_ambiguity).astype(float)
    r_e = rank_all(u_e, config.table_novelty).astype(float)
    lever_a = 1.0 - r_a / (config.c * n)
    lever_e = 1.0 - r_e / (config.c * n)
    return (1.0 - config.alpha) * r_e * r_e * lever_a + config.alpha * r_a * r_a * lever_e


def score_hybrid_batch(u_a, u_e, config: HybridConfig) -> np.ndarray:
    """Vectorised scoring of aligned ambiguity/novelty score arrays."""
    u_a = np.asarray(u_a, dtype=float)
    u_e = np.asarray(u_e, dtype=float)
    if u_a.shape != u_e.shape or u_a.ndim != 1:
        raise ValueError("score arrays must be matching 1-D")
    if not (np.all(np.isfinite(u_a)) and np.all(np.isfinite(u_e))):
        raise ValueError("hybrid inputs must be finite")
    if config.variant == "huq":
        return _huq_batch(u_a, u_e, config)
    return _huq2_batch(u_a, u_e, config)


def _rc_objective(validation: LabeledSplit) -> Callable[[np.ndarray], float]:
    if validation.task != "multiclass":
        raise ValueError("rc_auc calibration needs a multiclass split")
    losses = multiclass_losses(validation.probs, validation.labels)

    def objective(scores: np.ndarray) -> float:
        return curve_auc(build_curve(scores, losses, "risk"), "full")

    return objective


def _fr_objective(validation: LabeledSplit) -> Callable[[np.ndarray], float]:
    if validation.task != "multilabel":
        raise ValueError("fr_auc calibration needs a multilabel split")
    pred = (validation.probs >= 0.5).astype(int)
    truth = validation.labels
    tp = ((pred == 1) & (truth == 1)).sum(axis=1).astype(float)
    fp = ((pred == 1) & (truth == 0)).sum(axis=1).astype(float)
    fn = ((pred == 0) & (truth == 1)).sum(axis=1).astype(float)

    def objective(scores: np.ndarray) -> float:
        # negated so the caller always minimises
        return -curve_auc(build_curve(scores, (tp, fp, fn), "f1_micro"), "full")

    return objective


def fit_hybrid(
    validation: LabeledSplit,
    u_a_scores,
    u_e_scores,
    variant: str = "huq2",
    objective: str = "rc_auc",
) -> HybridConfig:
    """Grid-search the combinator hyperparameters on held-out scores.

    alpha runs over {0, 0.05, ..., 1}; the novelty threshold over upper
    quantiles of the novelty scores; the ambiguity threshold over
    quantiles of the ambiguity scores; c over {1, 2, 3} for the smooth
    variant.  Quantiles are order statistics (actual held-out values),
    which keeps every decision a pure rank comparison.  Ties prefer the
    smallest alpha, then the smallest quantile positions.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if objective not in OBJECTIVES:
        raise ValueError(f"unknown objective {objective!r}")
    u_a = np.asarray(u_a_scores, dtype=float)
    u_e = np.asarray(u_e_scores, dtype=float)
    n = len(validation)
    if n < MIN_CALIBRATION:
        raise ValueError(f"insufficient calibration data: {n} < {MIN_CALIBRATION}")
    if u_a.shape != (n,) or u_e.shape != (n,):
        raise ValueError("score arrays must match the validation split")
    if not (np.all(np.isfinite(u_a)) and np.all(np.isfinite(u_e))):
        raise ValueError("hybrid inputs must be finite")

    objective_fn = _rc_objective(validation) if objective == "rc_auc" else _fr_objective(validation)
    table_a = np.sort(u_a)
    table_e = np.sort(u_e)

    def make(alpha, dmin, dmax, c, table_id):
        return HybridConfig(variant, alpha, dmin, dmax, c, n, table_a, table_id, table_e)

    best = None
    if variant == "huq":
        dmin_values = [float(np.quantile(u_e, q, method="lower")) for q in DELTA_MIN_QUANTILES]
        dmax_values = [float(np.quantile(u_a, q, method="lower")) for q in DELTA_MAX_QUANTILES]
        id_tables = [np.sort(u_a[u_e <= dmin]) for dmin in dmin_values]
        for alpha in ALPHA_GRID:
            for dmin, table_id in zip(dmin_values, id_tables):
                for dmax in dmax_values:
                    cfg = make(alpha, dmin, dmax, 1, table_id)
                    val = objective_fn(score_hybrid_batch(u_a, u_e, cfg))
                    if best is None or val < best[0]:
                        best = (val, cfg)
    else:
        table_id = table_a  # thresholds unused by the smooth variant
        for alpha in ALPHA_GRID:
            for c in C_GRID:
                cfg = make(alpha, float(table_e[-1]), float(table_a[-1]), c, table_id)
                val = objective_fn(score_hybrid_batch(u_a, u_e, cfg))
                if best is None or val < best[0]:
                    best = (val, cfg)
    return best[1]
