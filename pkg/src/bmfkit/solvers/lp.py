"""Bicriteria entrywise L_p pipeline.

Rows are reduced by a coreset, then the columns of that coreset are reduced
by a second coreset under the row-weighted metric.  Rows and columns are
grouped by weight, every (row group, column group) part gets its own rank-k
solve, and each row of A finally picks one row group and, inside it, an
independent code per column group.
"""

from __future__ import annotations

import math

import numpy as np

from ..binmat import BinMatrix, LossSpec, Lp, Semiring
from ..clustering import sensitivity_sample
from ..sketch import l0_affine_sketch
from .conditional import (DEFAULT_CAP, alternate, argmin_rows, codes, solve_u_given_v,
                          solve_v_given_u)
from .factorization import Factorization, GroupPartition
from .frobenius import canonical_rows, clamp_epsilon, cluster_count, coreset_rows
from .oracle import brute_force_bmf

PART_BRUTE_KD = 16


def lp_coreset_size(k: int, epsilon: float, n: int, p: float) -> int:
    """ceil(min(eps^-2 + eps^-p, k eps^-2) * k * ln n), capped at n."""
    size = min(epsilon**-2 + epsilon**-p, k * epsilon**-2) * k * math.log(max(n, 2))
    return int(min(n, math.ceil(size)))


def column_representatives(R: np.ndarray, row_w: np.ndarray, k: int, epsilon: float,
                           p: float, rng, t: int | None = None):
    """Weighted representative columns of R and the representative of every column.

    Returns ``(rep_cols, rep_weights, mapping)``: ``rep_cols`` are column
    indices of R, ``mapping[c]`` is the position in ``rep_cols`` nearest to
    column c under sum_i w_i |x_i - y_i|^p (ties to the lowest position).
    """
    cols = R.T.astype(np.float64)
    d = cols.shape[0]
    kc = cluster_count(k, d)
    if t is None:
        t = lp_coreset_size(kc, epsilon, d, p)
    if d <= t:
        draws, frac = np.arange(d), np.ones(d)
    else:
        draws, frac = sensitivity_sample(cols, np.ones(d), kc, t, rng, p, row_w)
    rep_cols, rep_w, seen = [], [], {}
    for c, wt in zip(draws, frac):
        key = R[:, c].tobytes()
        if key in seen:
            rep_w[seen[key]] += wt
        else:
            seen[key] = len(rep_cols)
            rep_cols.append(int(c))
            rep_w.append(float(wt))
    order = np.argsort([R[:, c].tobytes() for c in rep_cols], kind="stable")
    rep_cols = np.array(rep_cols, dtype=np.int64)[order]
    rep_w = np.maximum(1, np.rint(np.array(rep_w)[order])).astype(np.int64)
    diff = np.abs(cols[:, None, :] - cols[rep_cols][None, :, :]) ** p
    mapping = (diff * row_w).sum(axis=2).argmin(axis=1)
    return rep_cols, rep_w, mapping


def lp_part_solve(P: BinMatrix, k: int, spec: LossSpec, semiring, epsilon: float, rng,
                  restarts: int = 3, cap: int = DEFAULT_CAP) -> BinMatrix:
    """Rank-k V for one part: exhaustive when small, else sketched alternation.

    The alternation updates V on an L0 row sample of the residual system and
    then polishes with exact alternating solves.
    """
    if k * P.n_cols <= PART_BRUTE_KD:
        return brute_force_bmf(P, k, spec, semiring).V
    dense = P.to_dense()
    best_val, best_V = np.inf, None
    e = spec.exponent if spec.exponent is not None else 1
    for _ in range(restarts):
        start = dense[rng.choice(P.n_rows, size=k, replace=P.n_rows < k)]
        V = BinMatrix.from_dense(start)
        U = solve_u_given_v(P, V, spec, semiring, cap)
        S = l0_affine_sketch(U, P, epsilon, e, rng)
        if S.m:
            V = solve_v_given_u(P.take(S.rows), U.take(S.rows), spec, semiring,
                                S.row_weights(e), cap)
        U, V, hist = alternate(P, V, spec, semiring, cap=cap)
        if hist[-1] < best_val:
            best_val, best_V = hist[-1], V
    return best_V


def lp_bicriteria_solver(A: BinMatrix, k: int, p: float, epsilon: float, rng=None,
                         semiring=Semiring.INTEGER, t: int | None = None,
                         t_cols: int | None = None, restarts: int = 3) -> Factorization:
    """Bicriteria rank-k factorization under entrywise L_p loss.

    k_actual = (row groups) * (column groups) * k.  Every row of U has its
    nonzeros inside one row-group super-block.
    """
    semiring = Semiring(semiring)
    rng = np.random.default_rng(rng)
    epsilon = clamp_epsilon(epsilon)
    spec = Lp(p)
    kc = cluster_count(k, A.n_rows)
    if t is None:
        t = lp_coreset_size(kc, epsilon, A.n_rows, p)
    X = canonical_rows(coreset_rows(A, k, epsilon, rng, t, power=p))
    R = X.points.to_dense()
    row_w = X.weights.astype(np.float64)
    rep_cols, rep_w, mapping = column_representatives(R, row_w, k, epsilon, p, rng, t_cols)
    row_groups = GroupPartition.by_weight(X.weights, epsilon)
    col_groups = GroupPartition.by_weight(rep_w, epsilon)
    col_group_of = col_groups.labels[mapping]
    d = A.n_cols
    blocks: list[list[np.ndarray]] = []
    for i in range(row_groups.n_groups):
        rows = row_groups.members(i)
        row_blocks = []
        for j in range(col_groups.n_groups):
            reps = col_groups.members(j)
            part = BinMatrix.from_dense(R[np.ix_(rows, rep_cols[reps])])
            Vp = lp_part_solve(part, k, spec, semiring, epsilon, rng, restarts).to_dense()
            local = {int(r): q for q, r in enumerate(reps)}
            Vb = np.zeros((k, d), dtype=np.uint8)
            for c in np.flatnonzero(col_group_of == j):
                Vb[:, c] = Vp[:, local[int(mapping[c])]]
            row_blocks.append(Vb)
        blocks.append(row_blocks)
    U = assign_super_blocks(A, blocks, col_group_of, spec, semiring)
    V = BinMatrix.from_dense(np.vstack([Vb for row_blocks in blocks for Vb in row_blocks]))
    return Factorization.build(A, U, V, semiring, spec, k, algorithm="lp",
                               row_groups=row_groups.n_groups,
                               col_groups=col_groups.n_groups,
                               coreset_distinct_rows=len(X),
                               representative_columns=len(rep_cols))


def assign_super_blocks(A: BinMatrix, blocks, col_group_of: np.ndarray, spec: LossSpec,
                        semiring) -> BinMatrix:
    """Per row: best row group i, and within it the best code per column group.

    Ties go to the lowest row group and the lowest code.
    """
    semiring = Semiring(semiring)
    dense = A.to_dense()
    n = A.n_rows
    n_i, n_j = len(blocks), len(blocks[0])
    k = blocks[0][0].shape[0]
    B = codes(k)
    totals = np.zeros((n_i, n))
    picks = np.zeros((n_i, n_j, n), dtype=np.int64)
    for i in range(n_i):
        for j in range(n_j):
            cols = np.flatnonzero(col_group_of == j)
            cand = semiring.matmul(B, blocks[i][j][:, cols])
            idx, val = argmin_rows(dense[:, cols], cand, spec)
            picks[i, j] = idx
            totals[i] += val
    chosen = totals.argmin(axis=0)
    U = np.zeros((n, n_i * n_j * k), dtype=np.uint8)
    for i in range(n_i):
        rows = np.flatnonzero(chosen == i)
        for j in range(n_j):
            off = (i * n_j + j) * k
            U[rows, off:off + k] = B[picks[i, j, rows]]
    return BinMatrix.from_dense(U)
