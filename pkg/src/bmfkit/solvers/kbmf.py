"""k-means based BMF: centers snapped to data rows, then U by assignment
(kbmf) or by exact per-row enumeration (kbmf_plus)."""

from __future__ import annotations

import numpy as np

from ..binmat import FROBENIUS, BinMatrix, LossSpec, Semiring
from ..clustering import _pairwise_cost, kmeans_pp_lloyd
from .conditional import DEFAULT_CAP, solve_u_given_v
from .factorization import Factorization


def snap_to_rows(centers: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Index of the nearest point to each center, ties to the lowest index."""
    return _pairwise_cost(np.asarray(centers, dtype=np.float64),
                          points.astype(np.float64)).argmin(axis=1)


def kbmf_factors(A: BinMatrix, k: int, rng=None, max_iters: int = 100, weights=None):
    """Snapped V and the one-hot U assigning every row to its nearest V row."""
    rng = np.random.default_rng(rng)
    dense = A.to_dense()
    km = kmeans_pp_lloyd(A, k, max_iters, rng, weights=weights)
    snapped = snap_to_rows(km.centers, dense)
    V = dense[snapped]
    hamming = _pairwise_cost(dense.astype(np.float64), V.astype(np.float64))
    assign = hamming.argmin(axis=1)
    U = np.zeros((A.n_rows, k), dtype=np.uint8)
    U[np.arange(A.n_rows), assign] = 1
    return BinMatrix.from_dense(U), BinMatrix.from_dense(V), snapped


def kbmf(A: BinMatrix, k: int, rng=None, semiring=Semiring.INTEGER,
         spec: LossSpec = FROBENIUS, max_iters: int = 100) -> Factorization:
    """Lloyd centers snapped to their closest rows; each row copies one of them."""
    U, V, snapped = kbmf_factors(A, k, rng, max_iters)
    return Factorization.build(A, U, V, semiring, spec, k, algorithm="kbmf",
                               snapped_rows=",".join(map(str, snapped)))


def kbmf_plus(A: BinMatrix, k: int, rng=None, semiring=Semiring.INTEGER,
              spec: LossSpec = FROBENIUS, max_iters: int = 100,
              cap: int = DEFAULT_CAP) -> Factorization:
    """kbmf's V with U re-solved exactly over all 2^k codes per row.

    Under the same rng this never does worse than :func:`kbmf`, since the
    one-hot rows are among the enumerated codes.
    """
    if k > cap:
        raise ValueError(f"k={k} exceeds the enumeration cap {cap}")
    _, V, snapped = kbmf_factors(A, k, rng, max_iters)
    U = solve_u_given_v(A, V, spec, semiring, cap)
    return Factorization.build(A, U, V, semiring, spec, k, algorithm="kbmf-plus",
                               snapped_rows=",".join(map(str, snapped)))
