"""Variance-weighted multi-attribute host selection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class WeightVector:
    ca: float
    q: float
    qf: float

    def as_array(self) -> np.ndarray:
        return np.array([self.ca, self.q, self.qf])


@dataclass
class CandidateMatrix:
    """Rows of (Ca = kappa/f seconds/bit, q bits, q_f bits), one per candidate host."""

    ids: Sequence[int]
    rows: np.ndarray

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=float).reshape(-1, 3)
        if len(self.ids) != self.rows.shape[0]:
            raise ValueError("one row per candidate id required")
        if np.any(self.rows < 0):
            raise ValueError("candidate attributes must be non-negative")

    def normalized(self) -> np.ndarray:
        """Min-max normalize each column; constant columns become zeros."""
        lo = self.rows.min(axis=0)
        span = self.rows.max(axis=0) - lo
        out = np.zeros_like(self.rows)
        nz = span > 0
        out[:, nz] = (self.rows[:, nz] - lo[nz]) / span[nz]
        return out


EQUAL_WEIGHTS = WeightVector(1 / 3, 1 / 3, 1 / 3)


def compute_weights(m: CandidateMatrix) -> WeightVector:
    var = m.normalized().var(axis=0)  # population variance
    total = var.sum()
    if total <= 0:
        return EQUAL_WEIGHTS
    w = var / total
    return WeightVector(float(w[0]), float(w[1]), float(w[2]))


def utility(row, w: WeightVector) -> float:
    """Weighted sum of an already-normalized row; lower is better."""
    row = np.asarray(row, dtype=float)
    return float(w.ca * row[0] + w.q * row[1] + w.qf * row[2])


def select_host(m: CandidateMatrix) -> int:
    if len(m.ids) == 0:
        raise ValueError("no candidate hosts to select from")
    if len(m.ids) == 1:
        return m.ids[0]
    w = compute_weights(m)
    scores = m.normalized() @ w.as_array()
    best = scores.min()
    # exact ties only; smallest id wins
    return min(i for i, s in zip(m.ids, scores) if s == best)
