"""Row-sampling sketches: leverage scores, the D*T sampling operator and
the nonzero-row sampler used for entrywise L_p affine embeddings."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .binmat import BinMatrix, IntMatrix

__all__ = [
    "RowSketch",
    "leverage_scores",
    "leverage_sample",
    "l0_row_estimate",
    "l0_affine_sketch",
]


def _dense(M) -> np.ndarray:
    if isinstance(M, (BinMatrix, IntMatrix)):
        return M.to_dense()
    return np.atleast_2d(np.asarray(M))


@dataclass(frozen=True)
class RowSketch:
    """Sampling-and-rescaling operator S = D * T.

    Row ``j`` of ``S @ M`` is ``scales[j] * M[rows[j]]``.
    """

    rows: np.ndarray
    scales: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64).reshape(-1)
        scales = np.asarray(self.scales, dtype=np.float64).reshape(-1)
        if rows.shape != scales.shape:
            raise ValueError("rows and scales must have equal length")
        if scales.size and scales.min() <= 0:
            raise ValueError("scales must be positive")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "scales", scales)

    @property
    def m(self) -> int:
        return int(self.rows.shape[0])

    @classmethod
    def identity(cls, n: int) -> "RowSketch":
        return cls(np.arange(n), np.ones(n))

    def apply(self, M) -> np.ndarray:
        dense = _dense(M).astype(np.float64)
        return dense[self.rows] * self.scales[:, None]

    def row_weights(self, power: float = 2.0) -> np.ndarray:
        """Scales raised to ``power``, the equivalent per-row loss weights."""
        return self.scales**power


def leverage_scores(A, rtol: float = 1e-10) -> np.ndarray:
    """Leverage score of every row, via a thin SVD.

    Rank deficiency is handled like a pseudoinverse: singular values below
    ``rtol * max`` are dropped.  Scores lie in [0, 1] and sum to the rank.
    """
    X = _dense(A).astype(np.float64)
    if X.size == 0:
        return np.zeros(X.shape[0])
    Uq, s, _ = np.linalg.svd(X, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return np.zeros(X.shape[0])
    r = int((s > rtol * s[0]).sum())
    return np.clip((Uq[:, :r] ** 2).sum(axis=1), 0.0, 1.0)


def leverage_sample(scores, m: int, rng=None, epsilon: float = 0.5, k: int | None = None,
                    C: float = 1.0, floor: float | None = None) -> RowSketch:
    """Draw ``m`` rows i.i.d. by clamped leverage scores.

    Row i gets mass min(1, C * score_i * log(k) / epsilon^2), normalized to a
    distribution pi; each draw j is rescaled by 1 / sqrt(m * pi_j).  ``k``
    defaults to the rounded score sum (the rank), and rows with score below
    ``floor`` (default 1/n^2) are never drawn.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    rng = np.random.default_rng(rng)
    ell = np.asarray(scores, dtype=np.float64).reshape(-1)
    n = ell.shape[0]
    if n == 0 or not np.any(ell > 0):
        raise ValueError("all leverage scores are zero")
    if k is None:
        k = max(1, int(round(ell.sum())))
    if floor is None:
        floor = 1.0 / (n * n)
    mass = np.minimum(1.0, C * ell * math.log(max(k, 2)) / epsilon**2)
    mass[ell < floor] = 0.0
    if not np.any(mass > 0):
        raise ValueError("no row clears the probability floor")
    pi = mass / mass.sum()
    rows = rng.choice(n, size=m, p=pi)
    return RowSketch(rows, 1.0 / np.sqrt(m * pi[rows]))


def _pad_pow2(count: int) -> int:
    return 1 << max(0, (count - 1).bit_length())


def l0_row_estimate(M, p: float, m: int, rng=None) -> float:
    """Unbiased estimate of sum |M_ij|^p from ``m`` uniform nonzero-row draws.

    The nonzero rows are padded with zero rows up to a power of two 2^i; a
    draw lands on a uniform slot and scores 2^i * ||row||_p^p.
    """
    rng = np.random.default_rng(rng)
    X = np.abs(_dense(M).astype(np.float64))
    norms = (X**p).sum(axis=1)
    norms = norms[norms > 0]
    if norms.size == 0:
        return 0.0
    slots = _pad_pow2(norms.size)
    picks = rng.integers(0, slots, size=m)
    vals = np.where(picks < norms.size, norms[np.minimum(picks, norms.size - 1)], 0.0)
    return float(slots * vals.mean())


def l0_sketch_size(k: int, r: int, epsilon: float, p: float) -> int:
    return int(math.ceil(k ** (p + 1) * math.log(max(r, 2)) / epsilon**2))


def l0_affine_sketch(Acand, B, epsilon: float, p: float, rng=None,
                     m: int | None = None) -> RowSketch:
    """Row sample for ||Acand X - B||_p^p over all binary X at once.

    Only rows where Acand or B is nonzero can carry residual; these are
    padded to a power of two 2^i and ``m`` slots drawn uniformly.  Slots that
    hit padding are dropped, the rest are scaled by (2^i / m)^(1/p), which
    keeps the sketched p-th power loss unbiased for every X.  With at most
    ``m`` rows the identity sketch is returned.
    """
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    rng = np.random.default_rng(rng)
    Ad, Bd = _dense(Acand), _dense(B)
    if Ad.shape[0] != Bd.shape[0]:
        raise ValueError("Acand and B need the same number of rows")
    n = Ad.shape[0]
    if m is None:
        m = l0_sketch_size(Ad.shape[1], Bd.shape[1], epsilon, p)
    if n <= m:
        return RowSketch.identity(n)
    active = np.flatnonzero(Ad.any(axis=1) | Bd.any(axis=1))
    if active.size == 0:
        return RowSketch(np.zeros(0, dtype=np.int64), np.zeros(0))
    slots = _pad_pow2(active.size)
    picks = rng.integers(0, slots, size=m)
    picks = picks[picks < active.size]
    scale = (slots / m) ** (1.0 / p)
    return RowSketch(active[picks], np.full(picks.size, scale))
