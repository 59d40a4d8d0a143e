"""Exact conditional solves by enumeration over binary codes.

For a binary target entry a and a candidate value c the entrywise cost is
affine in a: cost = f0(c) + a * (f1(c) - f0(c)).  The cost of every
(target, candidate) pair is therefore one matrix product, which is how all
the 2^k enumerations here are evaluated.  Values are integer-valued floats
for integer exponents, so comparisons and ties are exact.
"""

from __future__ import annotations

import numpy as np

from ..binmat import FROBENIUS, BinMatrix, LossSpec, Semiring
from ..clustering import WeightedRows

DEFAULT_CAP = 20
_CELL_BUDGET = 1 << 22


def codes(k: int) -> np.ndarray:
    """All 2^k binary vectors, row c holding the little-endian bits of c."""
    c = np.arange(1 << k, dtype=np.int64)
    return ((c[:, None] >> np.arange(k)) & 1).astype(np.uint8)


def entry_tables(cand: np.ndarray, spec: LossSpec) -> tuple[np.ndarray, np.ndarray]:
    """(cost if target is 0, cost if target is 1) for candidate values."""
    c = np.asarray(cand, dtype=np.float64)
    e = spec.exponent
    if e is None:
        return (c != 0).astype(np.float64), (c != 1).astype(np.float64)
    return np.abs(c) ** e, np.abs(1.0 - c) ** e


def cost_terms(cand: np.ndarray, spec: LossSpec, dim_weights=None):
    """``base`` and ``delta`` with cost(target) = base + target @ delta.T."""
    f0, f1 = entry_tables(cand, spec)
    if dim_weights is not None:
        f0 = f0 * dim_weights
        f1 = f1 * dim_weights
    return f0.sum(axis=-1), f1 - f0


def argmin_rows(targets: np.ndarray, candidates: np.ndarray, spec: LossSpec,
                dim_weights=None) -> tuple[np.ndarray, np.ndarray]:
    """Best candidate index and cost for every target row.

    Ties resolve to the lowest candidate index.
    """
    T = np.asarray(targets, dtype=np.float64)
    n = T.shape[0]
    n_cand = candidates.shape[0]
    best_idx = np.zeros(n, dtype=np.int64)
    best_val = np.full(n, np.inf)
    step = max(1, _CELL_BUDGET // max(1, n))
    for start in range(0, n_cand, step):
        base, delta = cost_terms(candidates[start:start + step], spec, dim_weights)
        vals = base[None, :] + T @ delta.T
        idx = vals.argmin(axis=1)
        v = vals[np.arange(n), idx]
        better = v < best_val
        best_val[better] = v[better]
        best_idx[better] = idx[better] + start
    return best_idx, best_val


def _split(A, weights):
    if isinstance(A, WeightedRows):
        w = A.weights if weights is None else weights
        return A.points, np.asarray(w, dtype=np.float64)
    if weights is None:
        return A, None
    return A, np.asarray(weights, dtype=np.float64)


def _check_cap(k: int, cap: int) -> None:
    if k > cap:
        raise ValueError(f"k={k} exceeds the enumeration cap {cap}")


def solve_u_given_v(A, V: BinMatrix, spec: LossSpec = FROBENIUS,
                    semiring=Semiring.INTEGER, cap: int = DEFAULT_CAP) -> BinMatrix:
    """Optimal U for fixed V, one row at a time over all 2^k codes.

    Row weights do not change a per-row argmin, so weighted input is
    accepted and the weights ignored.
    """
    A, _ = _split(A, None)
    semiring = Semiring(semiring)
    if A.n_cols != V.n_cols:
        raise ValueError(f"A has {A.n_cols} columns but V has {V.n_cols}")
    _check_cap(V.n_rows, cap)
    B = codes(V.n_rows)
    cand = semiring.matmul(B, V.to_dense())
    idx, _ = argmin_rows(A.to_dense(), cand, spec)
    return BinMatrix.from_dense(B[idx])


def solve_v_given_u(A, U: BinMatrix, spec: LossSpec = FROBENIUS,
                    semiring=Semiring.INTEGER, weights=None,
                    cap: int = DEFAULT_CAP) -> BinMatrix:
    """Optimal V for fixed U, one column at a time over all 2^k codes.

    Row weights of ``A`` act as per-coordinate weights of each column
    problem.
    """
    A, w = _split(A, weights)
    semiring = Semiring(semiring)
    if A.n_rows != U.n_rows:
        raise ValueError(f"A has {A.n_rows} rows but U has {U.n_rows}")
    _check_cap(U.n_cols, cap)
    B = codes(U.n_cols)
    cand = semiring.matmul(U.to_dense(), B.T).T
    idx, _ = argmin_rows(A.to_dense().T, cand, spec, w)
    return BinMatrix.from_dense(B[idx].T)


def solve_u_blockwise(A, V_list, spec: LossSpec = FROBENIUS,
                      semiring=Semiring.INTEGER, cap: int = DEFAULT_CAP) -> BinMatrix:
    """Best (block j, code u) per row; the row of U is u placed in block j.

    Candidates are ordered by (j, u), so ties go to the smallest pair.
    """
    A, _ = _split(A, None)
    semiring = Semiring(semiring)
    if not V_list:
        raise ValueError("need at least one V block")
    k = V_list[0].n_rows
    if any(V.shape != V_list[0].shape for V in V_list):
        raise ValueError("all V blocks must share a shape")
    _check_cap(k, cap)
    B = codes(k)
    cand = np.vstack([semiring.matmul(B, V.to_dense()) for V in V_list])
    idx, _ = argmin_rows(A.to_dense(), cand, spec)
    block, code = np.divmod(idx, 1 << k)
    U = np.zeros((A.n_rows, k * len(V_list)), dtype=np.uint8)
    for j in range(len(V_list)):
        rows = np.flatnonzero(block == j)
        U[rows, j * k:(j + 1) * k] = B[code[rows]]
    return BinMatrix.from_dense(U)


def weighted_loss(A, U: BinMatrix, V: BinMatrix, spec: LossSpec = FROBENIUS,
                  semiring=Semiring.INTEGER, weights=None) -> float:
    """Sum over rows of weight * entrywise loss of U V against A."""
    A, w = _split(A, weights)
    M = Semiring(semiring).matmul(U.to_dense(), V.to_dense())
    f0, f1 = entry_tables(M, spec)
    per_row = np.where(A.to_dense() == 1, f1, f0).sum(axis=1)
    return float(per_row.sum() if w is None else w @ per_row)


def best_u_cost(A, V: BinMatrix, spec: LossSpec = FROBENIUS,
                semiring=Semiring.INTEGER, weights=None) -> float:
    """Weighted loss of V when each row picks its best code."""
    A, w = _split(A, weights)
    cand = Semiring(semiring).matmul(codes(V.n_rows), V.to_dense())
    _, vals = argmin_rows(A.to_dense(), cand, spec)
    return float(vals.sum() if w is None else w @ vals)


def alternate(A, V: BinMatrix, spec: LossSpec = FROBENIUS, semiring=Semiring.INTEGER,
              max_iters: int = 50, weights=None, cap: int = DEFAULT_CAP):
    """Alternate exact U and V solves from ``V`` until the loss stops falling.

    Returns ``(U, V, history)``; ``history`` is non-increasing.
    """
    U = solve_u_given_v(A, V, spec, semiring, cap)
    best = weighted_loss(A, U, V, spec, semiring, weights)
    history = [best]
    for _ in range(max_iters):
        V_new = solve_v_given_u(A, U, spec, semiring, weights, cap)
        U_new = solve_u_given_v(A, V_new, spec, semiring, cap)
        val = weighted_loss(A, U_new, V_new, spec, semiring, weights)
        if val >= best:
            break
        U, V, best = U_new, V_new, val
        history.append(val)
    return U, V, history
