"""Shared primitives: dataset container, rank function, seeded RNG.

Every scorer in this package emits a plain float under one convention:
higher = more uncertain.  Scorers whose natural output is a confidence
are complemented or negated at the module boundary, so curves and
hybrid combinators never need per-method sign handling.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

PROB_SUM_TOL = 1e-6

TASKS = ("multiclass", "multilabel")


def seeded_rng(seed: int) -> np.random.Generator:
    """PCG64 stream for ``seed``; identical seeds give identical draws."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def rank(u: float, table: np.ndarray) -> int:
    """1-based rank of ``u`` over a sorted score table.

    Counts the table entries strictly below ``u`` and adds one, so tied
    values share the smallest rank and out-of-table values still rank
    sensibly (below the minimum -> 1, above the maximum -> len + 1).
    """
    table = np.asarray(table, dtype=float)
    if table.size == 0:
        raise ValueError("empty rank table")
    u = float(u)
    if not np.isfinite(u):
        raise ValueError("rank input must be finite")
    return int(np.searchsorted(table, u, side="left")) + 1


def rank_all(u: np.ndarray, table: np.ndarray) -> np.ndarray:
    """Vectorised :func:`rank` over an array of query values."""
    table = np.asarray(table, dtype=float)
    if table.size == 0:
        raise ValueError("empty rank table")
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise ValueError("rank input must be finite")
    return np.searchsorted(table, u, side="left") + 1


def validate_probs(p, normalized: bool = True) -> np.ndarray:
    """Check one probability vector; returns it as a float array."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.shape[0] < 2:
        raise ValueError("probability vector needs at least two entries")
    if not np.all(np.isfinite(p)):
        raise ValueError("non-finite probability entry")
    if np.any(p < 0.0) or np.any(p > 1.0 + PROB_SUM_TOL):
        raise ValueError("probability entry outside [0, 1]")
    if normalized and abs(float(p.sum()) - 1.0) > PROB_SUM_TOL:
        raise ValueError(
            f"probabilities sum to {float(p.sum()):.8f}, expected 1 within {PROB_SUM_TOL}"
        )
    return p


@dataclass
class LabeledSplit:
    """One dataset split held as parallel arrays.

    probs   : (n, C) softmax rows for multiclass, (n, L) independent
              sigmoid entries for multilabel
    labels  : (n,) int class ids, or (n, L) 0/1 bits
    embeddings / mc are optional; mc is (n, T, C) stochastic-pass rows.
    """

    probs: np.ndarray
    labels: np.ndarray
    task: str = "multiclass"
    role: str = "train"
    embeddings: Optional[np.ndarray] = None
    mc: Optional[np.ndarray] = None

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        if self.probs.ndim != 2 or self.probs.shape[1] < 2:
            raise ValueError("probs must be (n, C) with C >= 2")
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        n, width = self.probs.shape
        self.labels = np.asarray(self.labels)
        if self.labels.shape[0] != n:
            raise ValueError("labels/probs row count mismatch")
        if self.task == "multiclass":
            if self.labels.ndim != 1:
                raise ValueError("multiclass labels must be one-dimensional")
            self.labels = self.labels.astype(np.int64)
            if n and (self.labels.min() < 0 or self.labels.max() >= width):
                raise ValueError("class label outside 0..C-1")
        else:
            if self.labels.shape != (n, width):
                raise ValueError("multilabel labels must match probs shape")
            self.labels = self.labels.astype(np.int8)
            if n and not np.isin(self.labels, (0, 1)).all():
                raise ValueError("multilabel bits must be 0 or 1")
        if self.embeddings is not None:
            self.embeddings = np.asarray(self.embeddings, dtype=float)
            if self.embeddings.ndim != 2 or self.embeddings.shape[0] != n:
                raise ValueError("embeddings must be (n, d)")
            if not np.all(np.isfinite(self.embeddings)):
                raise ValueError("non-finite embedding entry")
        if self.mc is not None:
            self.mc = np.asarray(self.mc, dtype=float)
            if self.mc.ndim != 3 or self.mc.shape[0] != n or self.mc.shape[2] != width:
                raise ValueError("mc tensor must be (n, T, C)")

    def __len__(self) -> int:
        return int(self.probs.shape[0])

    @property
    def n_classes(self) -> int:
        return int(self.probs.shape[1])
