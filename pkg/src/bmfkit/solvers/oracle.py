"""Exhaustive global optimum for tiny instances."""

from __future__ import annotations

import numpy as np

from ..binmat import FROBENIUS, BinMatrix, LossSpec, Semiring, distinct_rows
from .conditional import codes, cost_terms, solve_u_given_v
from .factorization import Factorization

MAX_KD = 24
_CELL_BUDGET = 1 << 22


def brute_force_bmf(A: BinMatrix, k: int, spec: LossSpec = FROBENIUS,
                    semiring=Semiring.INTEGER, weights=None,
                    max_kd: int = MAX_KD) -> Factorization:
    """Global optimum over all V in {0,1}^(k x d), U solved exactly per V.

    V is enumerated by the integer whose bit (i*d + l) is V[i, l]; the first
    V reaching the minimum wins.
    """
    semiring = Semiring(semiring)
    d = A.n_cols
    if k * d > max_kd:
        raise ValueError(f"k*d = {k * d} exceeds the brute-force guard {max_kd}")
    uniq, mult, index = distinct_rows(A)
    row_w = np.bincount(index, weights=weights, minlength=uniq.n_rows) if weights is not None \
        else mult.astype(np.float64)
    targets = uniq.to_dense().astype(np.float64)
    B = codes(k).astype(np.int64)
    total = 1 << (k * d)
    bits = np.arange(k * d, dtype=np.int64)
    best_val, best_code = np.inf, 0
    batch = max(1, _CELL_BUDGET // (max(uniq.n_rows, d) * B.shape[0]))
    for start in range(0, total, batch):
        z = np.arange(start, min(total, start + batch), dtype=np.int64)
        Vs = ((z[:, None] >> bits) & 1).reshape(-1, k, d)
        cand = semiring.reduce(np.matmul(B, Vs))
        base, delta = cost_terms(cand, spec)
        vals = base[:, None, :] + np.matmul(targets, delta.transpose(0, 2, 1))
        totals = vals.min(axis=2) @ row_w
        i = int(np.argmin(totals))
        if totals[i] < best_val:
            best_val, best_code = totals[i], int(z[i])
    V = BinMatrix.from_dense(((best_code >> bits) & 1).reshape(k, d).astype(np.uint8))
    U = solve_u_given_v(A, V, spec, semiring)
    return Factorization.build(A, U, V, semiring, spec, k, algorithm="brute")
