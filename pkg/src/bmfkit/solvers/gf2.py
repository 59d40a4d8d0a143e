"""Bicriteria GF(2) pipeline: coreset rows grouped by weight, a rank-k L0
solve per group, then one k-block of U per row against the stacked V."""

from __future__ import annotations

import numpy as np

from ..binmat import L0, BinMatrix, Semiring
from .conditional import alternate, solve_u_blockwise
from .factorization import Factorization, GroupPartition
from .frobenius import canonical_rows, clamp_epsilon, coreset_rows
from .oracle import brute_force_bmf

GF2 = Semiring.GF2
EXACT_KD = 16


def gf2_l0_rank_k(A: BinMatrix, k: int, rng=None, restarts: int = 10,
                  max_iters: int = 50, exact_kd: int = EXACT_KD) -> BinMatrix:
    """Rank-k V for entrywise L0 over GF(2).

    Exact enumeration when k*d <= exact_kd; otherwise alternating exact row
    and column solves from ``restarts`` random starts, keeping the best.
    """
    if k * A.n_cols <= exact_kd:
        return brute_force_bmf(A, k, L0, GF2).V
    rng = np.random.default_rng(rng)
    dense = A.to_dense()
    best_val, best_V = np.inf, None
    for r in range(restarts):
        if r == 0 and A.n_rows >= k:
            start = dense[rng.choice(A.n_rows, size=k, replace=False)]
        else:
            start = rng.integers(0, 2, size=(k, A.n_cols), dtype=np.uint8)
        _, V, hist = alternate(A, BinMatrix.from_dense(start), L0, GF2, max_iters)
        if hist[-1] < best_val:
            best_val, best_V = hist[-1], V
    return best_V


def gf2_bicriteria_solver(A: BinMatrix, k: int, epsilon: float, rng=None,
                          t: int | None = None, restarts: int = 10,
                          exact_kd: int = EXACT_KD) -> Factorization:
    """Bicriteria rank-k GF(2) factorization with k_actual = (number of groups) * k."""
    rng = np.random.default_rng(rng)
    epsilon = clamp_epsilon(epsilon)
    X = canonical_rows(coreset_rows(A, k, epsilon, rng, t))
    groups = GroupPartition.by_weight(X.weights, epsilon)
    V_list = []
    for g in range(groups.n_groups):
        part = X.points.take(groups.members(g))
        V_list.append(gf2_l0_rank_k(part, k, rng, restarts, exact_kd=exact_kd))
    U = solve_u_blockwise(A, V_list, L0, GF2)
    return Factorization.build(A, U, BinMatrix.vstack(V_list), GF2, L0, k,
                               algorithm="gf2", groups=groups.n_groups,
                               coreset_distinct_rows=len(X))
