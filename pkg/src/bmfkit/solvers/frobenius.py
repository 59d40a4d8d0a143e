"""(1+eps) Frobenius pipeline: coreset, distinct-row solve, final U on A.

Two inner modes.  ``guess_enumeration`` tries every sketched system
(row multiset T, power-of-two scales D, binary S*U pattern) and keeps the
best resulting V; it is exponential and gated to toy sizes.
``sketch_sampled`` draws the sketch from leverage scores of the current U
iterate and alternates; it is a practical surrogate, not the certified
enumeration.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from ..binmat import FROBENIUS, BinMatrix, LossSpec, Semiring
from ..clustering import WeightedRows, default_coreset_size, sensitivity_coreset
from ..sketch import leverage_sample, leverage_scores
from .conditional import (DEFAULT_CAP, alternate, best_u_cost, codes, entry_tables,
                          solve_u_given_v, solve_v_given_u, weighted_loss)
from .factorization import Factorization
from .kbmf import kbmf_factors

MODES = ("guess_enumeration", "sketch_sampled")
GUESS_MAX_DISTINCT = 16
GUESS_MAX_M = 3


def clamp_epsilon(epsilon: float) -> float:
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    return min(epsilon, 0.999)


def cluster_count(k: int, n: int) -> int:
    return min(1 << k, n) if k < 62 else n


def canonical_rows(X: WeightedRows) -> WeightedRows:
    """Distinct rows with merged weights, in lexicographic row order.

    Downstream solves depend only on the multiset of rows, not their order.
    """
    dense = X.points.to_dense()
    uniq, inverse = np.unique(dense, axis=0, return_inverse=True)
    w = np.bincount(inverse.reshape(-1), weights=X.weights, minlength=uniq.shape[0])
    return WeightedRows(BinMatrix.from_dense(uniq), np.rint(w).astype(np.int64))


def coreset_rows(A: BinMatrix, k: int, epsilon: float, rng, t: int | None = None,
                 power: float = 2.0) -> WeightedRows:
    """Coreset for 2^k-means clustering of the rows of A."""
    kc = cluster_count(k, A.n_rows)
    if t is None:
        t = default_coreset_size(kc, epsilon, A.n_rows)
    return sensitivity_coreset(A, kc, epsilon, rng, t, power)


def guess_sketch_size(k: int, epsilon: float) -> int:
    return min(GUESS_MAX_M, math.ceil(k * max(1.0, math.log2(max(k, 1))) / epsilon**2))


def guess_enumeration(X: WeightedRows, k: int, spec: LossSpec, semiring,
                      m: int | None = None, epsilon: float = 0.5) -> BinMatrix:
    """Best V over all guesses of the sketched system (S*U, S*A).

    T ranges over multisets of m distinct rows, D over powers of two up to
    N^2 per sampled row, and S*U over all binary m x k patterns.  A scale D
    on a row is a weight D^e on its loss.
    """
    semiring = Semiring(semiring)
    t = len(X)
    if t > GUESS_MAX_DISTINCT:
        raise ValueError(f"guess enumeration needs <= {GUESS_MAX_DISTINCT} distinct rows, got {t}")
    if m is None:
        m = guess_sketch_size(k, epsilon)
    if m > GUESS_MAX_M:
        raise ValueError(f"guess enumeration needs m <= {GUESS_MAX_M}")
    e = spec.exponent if spec.exponent is not None else 1
    N = X.total_weight
    top = int(math.floor(math.log2(max(N, 1) ** 2)))
    scales = 2.0 ** np.arange(top + 1)
    grid = np.array(list(itertools.product(scales**e, repeat=m)))
    rows = X.points.to_dense().astype(np.float64)
    B = codes(k).astype(np.int64)
    patterns = codes(m * k).reshape(-1, m, k).astype(np.int64)
    seen: dict[bytes, np.ndarray] = {}
    for T in itertools.combinations_with_replacement(range(t), m):
        targets = rows[list(T)]
        for P in patterns:
            cand = semiring.reduce(P @ B.T).T
            f0, f1 = entry_tables(cand, spec)
            per = np.where(targets.T[:, None, :] == 1, f1[None], f0[None])
            cost = np.einsum("gj,lcj->glc", grid, per)
            for choice in np.unique(cost.argmin(axis=2), axis=0):
                V = B[choice].T.astype(np.uint8)
                seen.setdefault(V.tobytes(), V)
    best_val, best_V = np.inf, None
    for key in sorted(seen):
        V = BinMatrix.from_dense(seen[key])
        val = best_u_cost(X, V, spec, semiring)
        if val < best_val:
            best_val, best_V = val, V
    return best_V


def sketch_sampled(X: WeightedRows, k: int, spec: LossSpec, semiring, rng,
                   m: int | None = None, epsilon: float = 0.5, iters: int = 10,
                   restarts: int = 3, cap: int = DEFAULT_CAP) -> BinMatrix:
    """Leverage-sampled V solves alternated with exact U solves.

    Each restart seeds V from snapped weighted k-means++ centers, runs
    ``iters`` sampled rounds, then polishes with exact weighted alternation.
    The best V seen overall is returned.
    """
    semiring = Semiring(semiring)
    t = len(X)
    if m is None:
        m = max(4 * k, math.ceil(k * math.log(max(k, 2)) / epsilon**2))
    root_w = np.sqrt(X.weights.astype(np.float64))
    e = spec.exponent if spec.exponent is not None else 1
    best_val, best_V = np.inf, None
    for _ in range(max(1, restarts)):
        _, V, _ = kbmf_factors(X.points, min(k, t), rng, weights=X.weights)
        if V.n_rows < k:
            V = BinMatrix.vstack([V, BinMatrix.zeros(k - V.n_rows, V.n_cols)])
        U = solve_u_given_v(X, V, spec, semiring, cap)
        run_val, run_V = weighted_loss(X, U, V, spec, semiring), V
        for _ in range(iters):
            scores = leverage_scores(U.to_dense() * root_w[:, None])
            if not np.any(scores > 0):
                break
            S = leverage_sample(scores, m, rng, epsilon, k)
            sub = WeightedRows(X.points.take(S.rows), np.ones(S.m, dtype=np.int64))
            row_w = X.weights[S.rows] * S.scales**e
            V = solve_v_given_u(sub, U.take(S.rows), spec, semiring, row_w, cap)
            U = solve_u_given_v(X, V, spec, semiring, cap)
            val = weighted_loss(X, U, V, spec, semiring)
            if val < run_val:
                run_val, run_V = val, V
        _, V, hist = alternate(X, run_V, spec, semiring, cap=cap)
        if hist[-1] < best_val:
            best_val, best_V = hist[-1], V
    return best_V


def frobenius_coreset_solver(A: BinMatrix, k: int, epsilon: float,
                             mode: str = "sketch_sampled", rng=None, t: int | None = None,
                             m: int | None = None, semiring=Semiring.INTEGER,
                             spec: LossSpec = FROBENIUS, iters: int = 10,
                             restarts: int = 3) -> Factorization:
    """Coreset for 2^k-means, inner solve on its distinct rows, final U on A."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    semiring = Semiring(semiring)
    rng = np.random.default_rng(rng)
    epsilon = clamp_epsilon(epsilon)
    C = coreset_rows(A, k, epsilon, rng, t)
    V, meta = coreset_inner_v(C, k, epsilon, mode, rng, m, semiring, spec, iters, restarts)
    U = solve_u_given_v(A, V, spec, semiring)
    return Factorization.build(A, U, V, semiring, spec, k, algorithm="frobenius", **meta)


def coreset_inner_v(C: WeightedRows, k: int, epsilon: float, mode: str, rng,
                    m: int | None = None, semiring=Semiring.INTEGER,
                    spec: LossSpec = FROBENIUS, iters: int = 10,
                    restarts: int = 3):
    """V from a weighted coreset, plus metadata describing the solve."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    X = canonical_rows(C)
    if mode == "guess_enumeration":
        V = guess_enumeration(X, k, spec, semiring, m, epsilon)
    else:
        V = sketch_sampled(X, k, spec, semiring, rng, m, epsilon, iters, restarts)
    meta = {"mode": mode, "coreset_rows": len(C), "distinct_rows": len(X)}
    if mode == "sketch_sampled":
        meta["note"] = "sketch drawn from the realized U iterate; no guarantee certificate"
    return V, meta


def coreset_v(A: BinMatrix, X: WeightedRows, k: int, rng, semiring=Semiring.INTEGER,
              spec: LossSpec = FROBENIUS) -> Factorization:
    """kbmf_plus with V computed on a weighted coreset and U solved on A."""
    _, V, _ = kbmf_factors(X.points, min(k, len(X)), rng, weights=X.weights)
    if V.n_rows < k:
        V = BinMatrix.vstack([V, BinMatrix.zeros(k - V.n_rows, V.n_cols)])
    U = solve_u_given_v(A, V, spec, semiring)
    return Factorization.build(A, U, V, semiring, spec, k, algorithm="kbmf-plus-coreset")
