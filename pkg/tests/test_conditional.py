import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bmfkit.binmat import FROBENIUS, L0, BinMatrix, Lp, Semiring, loss, product
from bmfkit.clustering import WeightedRows
from bmfkit.solvers import (alternate, brute_force_bmf, solve_u_blockwise, solve_u_given_v,
                           solve_v_given_u, weighted_loss)

from conftest import all_binary, naive_loss, naive_product

SEMIRINGS = list(Semiring)
LOSSES = [FROBENIUS, Lp(1)]


def joint_best(A, make, shape, semiring, spec):
    """Minimum loss over every binary matrix of ``shape`` fed to ``make``."""
    kind = spec.kind
    return min(naive_loss(A, make(X), kind, spec.p) for X in all_binary(*shape))


def code_of(col):
    return sum(int(b) << i for i, b in enumerate(col))


def instance(seed, n, d, k):
    rng = np.random.default_rng(seed)
    return rng.integers(0, 2, (n, d)), rng.integers(0, 2, (n, k)), rng.integers(0, 2, (k, d))


@pytest.mark.parametrize("semiring", SEMIRINGS)
@pytest.mark.parametrize("spec", LOSSES)
def test_v_solve_matches_joint_enumeration(semiring, spec):
    for seed in range(8):
        A, U, _ = instance(seed, 6, 4, 2)
        V = solve_v_given_u(BinMatrix.from_dense(A), BinMatrix.from_dense(U), spec, semiring)
        got = naive_loss(A, naive_product(U, V.to_dense(), semiring.value), spec.kind, spec.p)
        best = joint_best(A, lambda X: naive_product(U, X, semiring.value), (2, 4), semiring, spec)
        assert got == best


@pytest.mark.parametrize("semiring", SEMIRINGS)
@pytest.mark.parametrize("spec", LOSSES)
def test_u_solve_matches_joint_enumeration(semiring, spec):
    for seed in range(4):
        A, _, V = instance(seed, 6, 4, 2)
        U = solve_u_given_v(BinMatrix.from_dense(A), BinMatrix.from_dense(V), spec, semiring)
        got = naive_loss(A, naive_product(U.to_dense(), V, semiring.value), spec.kind, spec.p)
        best = joint_best(A, lambda X: naive_product(X, V, semiring.value), (6, 2), semiring, spec)
        assert got == best


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(SEMIRINGS), st.sampled_from([FROBENIUS, L0, Lp(1), Lp(3)]))
def test_v_solve_tie_break_is_smallest_code(seed, semiring, spec):
    A, U, _ = instance(seed, 5, 3, 2)
    V = solve_v_given_u(BinMatrix.from_dense(A), BinMatrix.from_dense(U), spec, semiring).to_dense()
    for col in range(3):
        costs = {}
        for v in all_binary(2, 1):
            pred = naive_product(U, v, semiring.value)[:, 0]
            costs[code_of(v[:, 0])] = naive_loss(A[:, col], pred, spec.kind, spec.p)
        best = min(costs.values())
        assert code_of(V[:, col]) == min(c for c, v in costs.items() if v == best)


def test_zero_u_gives_zero_v():
    A = BinMatrix.from_dense(np.random.default_rng(0).integers(0, 2, (5, 4)))
    V = solve_v_given_u(A, BinMatrix.zeros(5, 3))
    assert V == BinMatrix.zeros(3, 4)
    assert weighted_loss(A, BinMatrix.zeros(5, 3), V) == loss(A, BinMatrix.zeros(5, 4))


@pytest.mark.parametrize("semiring", SEMIRINGS)
def test_exact_products_are_recovered(semiring):
    rng = np.random.default_rng(3)
    V0 = rng.integers(0, 2, (3, 5))
    U0 = rng.integers(0, 2, (8, 3))
    if semiring is Semiring.INTEGER:
        # keep the integer product binary: one-hot rows of U0
        U0 = np.eye(3, dtype=np.int64)[rng.integers(0, 3, 8)]
    U0, V0 = BinMatrix.from_dense(U0), BinMatrix.from_dense(V0)
    A = BinMatrix.from_dense(product(U0, V0, semiring).to_dense())
    V = solve_v_given_u(A, U0, FROBENIUS, semiring)
    assert weighted_loss(A, U0, V, FROBENIUS, semiring) == 0
    U = solve_u_given_v(A, V0, FROBENIUS, semiring)
    assert weighted_loss(A, U, V0, FROBENIUS, semiring) == 0


def test_single_row_equal_to_v_row():
    V = BinMatrix.from_dense([[1, 0, 1], [0, 1, 1]])
    U = solve_u_given_v(BinMatrix.from_dense([[0, 1, 1]]), V)
    assert weighted_loss(BinMatrix.from_dense([[0, 1, 1]]), U, V) == 0


def test_cap_is_enforced():
    A = BinMatrix.zeros(3, 2)
    with pytest.raises(ValueError):
        solve_u_given_v(A, BinMatrix.zeros(4, 2), cap=3)
    with pytest.raises(ValueError):
        solve_v_given_u(A, BinMatrix.zeros(3, 4), cap=3)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_weighted_v_solve_equals_expanded_rows(seed):
    rng = np.random.default_rng(seed)
    A = BinMatrix.from_dense(rng.integers(0, 2, (6, 4)))
    U = BinMatrix.from_dense(rng.integers(0, 2, (6, 2)))
    w = rng.integers(1, 4, 6)
    X = WeightedRows(A, w)
    reps = np.repeat(np.arange(6), w)
    assert solve_v_given_u(X, U) == solve_v_given_u(A.take(reps), U.take(reps))
    assert brute_force_bmf(A.take(reps), 1).V == brute_force_bmf(A, 1, weights=w).V


def independent_blockwise(A, V_list, semiring, spec):
    k = V_list[0].shape[0]
    out = []
    for a in A:
        best = None
        for j, V in enumerate(V_list):
            for c in range(1 << k):
                u = np.array([(c >> i) & 1 for i in range(k)])
                val = naive_loss(a, naive_product(u[None], V, semiring.value)[0], spec.kind, spec.p)
                if best is None or val < best[0]:
                    best = (val, j, u)
        row = np.zeros(k * len(V_list), dtype=np.uint8)
        row[best[1] * k:(best[1] + 1) * k] = best[2]
        out.append(row)
    return np.array(out)


@pytest.mark.parametrize("semiring", SEMIRINGS)
def test_blockwise_matches_independent_search(semiring):
    rng = np.random.default_rng(7)
    for _ in range(5):
        A = rng.integers(0, 2, (8, 5))
        V_list = [rng.integers(0, 2, (2, 5)) for _ in range(2)]
        U = solve_u_blockwise(BinMatrix.from_dense(A), [BinMatrix.from_dense(V) for V in V_list],
                              L0, semiring)
        assert np.array_equal(U.to_dense(), independent_blockwise(A, V_list, semiring, L0))


def test_blockwise_single_block_is_plain_u_solve():
    rng = np.random.default_rng(8)
    A = BinMatrix.from_dense(rng.integers(0, 2, (10, 5)))
    V = BinMatrix.from_dense(rng.integers(0, 2, (3, 5)))
    assert solve_u_blockwise(A, [V]) == solve_u_given_v(A, V)


def test_blockwise_picks_exact_block():
    V1 = BinMatrix.from_dense([[1, 1, 0, 0], [0, 0, 1, 1]])
    V2 = BinMatrix.from_dense([[1, 0, 1, 0], [0, 1, 0, 1]])
    U = solve_u_blockwise(BinMatrix.from_dense([[0, 1, 0, 1]]), [V1, V2]).to_dense()
    assert list(U[0]) == [0, 0, 0, 1]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(SEMIRINGS))
def test_alternation_never_increases_loss(seed, semiring):
    rng = np.random.default_rng(seed)
    A = BinMatrix.from_dense(rng.integers(0, 2, (20, 7)))
    V0 = BinMatrix.from_dense(rng.integers(0, 2, (3, 7)))
    _, _, hist = alternate(A, V0, FROBENIUS, semiring, 20)
    assert all(b <= a for a, b in zip(hist, hist[1:]))


def test_brute_force_identity_rank_one():
    f = brute_force_bmf(BinMatrix.from_dense(np.eye(2, dtype=np.uint8)), 1)
    assert f.achieved_loss == 1


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(SEMIRINGS))
def test_brute_force_is_global_optimum(seed, semiring):
    rng = np.random.default_rng(seed)
    A = rng.integers(0, 2, (4, 3))
    best = min(naive_loss(A, naive_product(U, V, semiring.value), "frobenius")
               for V in all_binary(1, 3) for U in all_binary(4, 1))
    assert brute_force_bmf(BinMatrix.from_dense(A), 1, FROBENIUS, semiring).achieved_loss == best


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_brute_force_improves_with_rank(seed):
    A = BinMatrix.from_dense(np.random.default_rng(seed).integers(0, 2, (5, 4)))
    losses = [brute_force_bmf(A, k).achieved_loss for k in (1, 2, 3)]
    assert losses[0] >= losses[1] >= losses[2]


def test_brute_force_guard():
    with pytest.raises(ValueError):
        brute_force_bmf(BinMatrix.zeros(3, 13), 2)
