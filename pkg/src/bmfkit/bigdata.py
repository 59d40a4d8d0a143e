"""Two-pass streaming and two-round distributed drivers with exact meters."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator

import numpy as np

from .binmat import FROBENIUS, BinMatrix, LossSpec, Semiring, read_csv
from .clustering import MergeReduceStream, WeightedRows, default_coreset_size, sensitivity_coreset
from .solvers.conditional import argmin_rows, codes
from .solvers.factorization import Factorization
from .solvers.frobenius import clamp_epsilon, cluster_count, coreset_inner_v

__all__ = [
    "ReplayableSource",
    "StreamStats",
    "streaming_two_pass",
    "Partition",
    "split_rows",
    "ProtocolTranscript",
    "distributed_two_round",
    "streaming_two_pass_columns",
    "distributed_two_round_columns",
]


class ReplayableSource:
    """A row stream that can be replayed; every full iteration counts as a pass."""

    def __init__(self, factory: Callable[[], Iterable], n_rows: int, n_cols: int):
        self._factory = factory
        self.n_rows = n_rows
        self.n_cols = n_cols
        self.passes = 0

    @classmethod
    def from_matrix(cls, A: BinMatrix) -> "ReplayableSource":
        return cls(lambda: iter(A.to_dense()), A.n_rows, A.n_cols)

    @classmethod
    def from_csv(cls, path: str | Path) -> "ReplayableSource":
        # shape is read up front; the rows themselves are streamed per pass
        A = read_csv(path)
        return cls(lambda: iter(read_csv(path).to_dense()), A.n_rows, A.n_cols)

    def __len__(self) -> int:
        return self.n_rows

    def __iter__(self) -> Iterator[np.ndarray]:
        self.passes += 1
        for row in self._factory():
            yield np.asarray(row, dtype=np.uint8)


@dataclass
class StreamStats:
    peak_buffered_rows: int = 0
    passes: int = 0
    rows_seen: int = 0
    budget_rows: int = 0


def _row_solver(V: BinMatrix, spec: LossSpec, semiring):
    B = codes(V.n_rows)
    cand = Semiring(semiring).matmul(B, V.to_dense())

    def solve(rows: np.ndarray) -> np.ndarray:
        idx, _ = argmin_rows(np.atleast_2d(rows), cand, spec)
        return B[idx]

    return solve


def streaming_two_pass(source: ReplayableSource, k: int, epsilon: float, rng=None,
                       block: int = 256, t: int | None = None, mode: str = "sketch_sampled",
                       semiring=Semiring.INTEGER, spec: LossSpec = FROBENIUS,
                       budget_factor: float = 2.0):
    """Pass 1 builds a merge-and-reduce coreset and solves V; pass 2 solves
    each row of U as it arrives.

    Tree nodes are reduced to ``t`` rows (default: ``block``).  With at most
    ``block`` rows the result equals :func:`frobenius_coreset_solver` under
    the same rng.  Returns ``(Factorization, StreamStats)``.
    """
    rng = np.random.default_rng(rng)
    epsilon = clamp_epsilon(epsilon)
    n = len(source)
    kc = cluster_count(k, n)
    one_block = n <= block
    node_t = t if t is not None else (None if one_block else block)
    stream = MergeReduceStream(kc, epsilon, block, n, rng, node_t)
    budget = int(budget_factor * block * max(1, math.ceil(math.log2(max(n, 2)))))
    stats = StreamStats(budget_rows=budget)
    for row in source:
        stream.push(row)
        if stream.held_rows() > budget:
            raise RuntimeError(f"stream holds {stream.held_rows()} rows, budget {budget}")
    if stream.rows_seen != n:
        raise RuntimeError(f"first pass yielded {stream.rows_seen} rows, expected {n}")
    C = stream.result()
    final_t = t if t is not None else default_coreset_size(kc, epsilon, n)
    if len(C) > final_t:
        C = sensitivity_coreset(C, kc, epsilon, rng, final_t)
    V, meta = coreset_inner_v(C, k, epsilon, mode, rng, semiring=semiring, spec=spec)
    solve = _row_solver(V, spec, semiring)
    U_rows, kept = [], []
    second = 0
    for row in source:
        U_rows.append(solve(row)[0])
        kept.append(row)
        second += 1
    if second != n:
        raise RuntimeError(f"second pass yielded {second} rows, expected {n}")
    stats.peak_buffered_rows = stream.peak_rows
    stats.passes = source.passes
    stats.rows_seen = stream.rows_seen
    # A is rebuilt only to report the loss; the factors above never used it
    A = BinMatrix.from_dense(np.vstack(kept))
    U = BinMatrix.from_dense(np.vstack(U_rows))
    fact = Factorization.build(A, U, V, semiring, spec, k, algorithm="streaming",
                               levels=stream.levels_needed, **meta)
    return fact, stats


@dataclass(frozen=True)
class Partition:
    """Rows held by one user and their positions in the global matrix."""

    rows: BinMatrix
    index: np.ndarray


def split_rows(A: BinMatrix, gamma: int, rng=None, shuffle: bool = False) -> list[Partition]:
    """Split A into ``gamma`` contiguous (or shuffled) disjoint row sets."""
    order = np.arange(A.n_rows)
    if shuffle:
        order = np.random.default_rng(rng).permutation(A.n_rows)
    return [Partition(A.take(part), part) for part in np.array_split(order, gamma)]


@dataclass
class ProtocolTranscript:
    gamma: int
    messages: list[tuple[int, str, str, int, int]] = field(default_factory=list)

    def log(self, round_no: int, user: str, direction: str, rows: int, bits: int) -> None:
        self.messages.append((round_no, user, direction, rows, bits))

    @property
    def rounds(self) -> int:
        return len({m[0] for m in self.messages})

    @property
    def total_bits(self) -> int:
        return sum(m[4] for m in self.messages)

    def bits(self, round_no: int | None = None, direction: str | None = None) -> int:
        return sum(m[4] for m in self.messages
                   if (round_no is None or m[0] == round_no)
                   and (direction is None or m[2] == direction))

    def to_tsv(self, path: str | Path | None = None) -> str:
        lines = ["round\tuser\tdirection\trows\tbits"]
        lines += ["\t".join(map(str, m)) for m in self.messages]
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text


class _User:
    def __init__(self, part: Partition, rng):
        self._part = part
        self._rng = rng

    def round_one(self, k_cluster: int, epsilon: float, t) -> WeightedRows:
        if self._part.rows.n_rows == 0:
            return None
        return sensitivity_coreset(self._part.rows, k_cluster, epsilon, self._rng, t)

    def round_two(self, solve) -> tuple[np.ndarray, np.ndarray]:
        if self._part.rows.n_rows == 0:
            return self._part.index, np.zeros((0, 0), dtype=np.uint8)
        return self._part.index, solve(self._part.rows.to_dense())


def distributed_two_round(partitions: list[Partition], k: int, epsilon: float, rng=None,
                          t: int | None = None, mode: str = "sketch_sampled",
                          semiring=Semiring.INTEGER, spec: LossSpec = FROBENIUS,
                          workers: int | None = None):
    """Round 1: users ship local coresets and the coordinator solves V.
    Round 2: V is broadcast and users return their U rows.

    With one user the result equals the centralized pipeline under the same
    rng.  Returns ``(Factorization, ProtocolTranscript)``.
    """
    rng = np.random.default_rng(rng)
    epsilon = clamp_epsilon(epsilon)
    gamma = len(partitions)
    n = sum(p.rows.n_rows for p in partitions)
    d = next(p.rows.n_cols for p in partitions)
    kc = cluster_count(k, n)
    if t is None:
        t = default_coreset_size(kc, epsilon, n)
    user_rngs = [rng] if gamma == 1 else rng.spawn(gamma)
    users = [_User(p, r) for p, r in zip(partitions, user_rngs)]
    transcript = ProtocolTranscript(gamma)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        shipped = list(pool.map(lambda u: u.round_one(min(kc, max(1, u._part.rows.n_rows)),
                                                      epsilon, t), users))
    for j, C in enumerate(shipped):
        rows = 0 if C is None else len(C)
        transcript.log(1, str(j), "up", rows, rows * d)
    merged = WeightedRows.concat([C for C in shipped if C is not None])
    if len(merged) > t:
        merged = sensitivity_coreset(merged, kc, epsilon, rng, t)
    V, meta = coreset_inner_v(merged, k, epsilon, mode, rng, semiring=semiring, spec=spec)

    transcript.log(2, "*", "down", V.n_rows, V.n_rows * d)
    solve = _row_solver(V, spec, semiring)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        replies = list(pool.map(lambda u: u.round_two(solve), users))
    U = np.zeros((n, V.n_rows), dtype=np.uint8)
    full = np.zeros((n, d), dtype=np.uint8)
    for j, ((index, U_part), part) in enumerate(zip(replies, partitions)):
        transcript.log(2, str(j), "up", len(index), len(index) * V.n_rows)
        if len(index):
            U[index] = U_part
            # evaluation only: the loss report needs A itself
            full[index] = part.rows.to_dense()
    fact = Factorization.build(BinMatrix.from_dense(full), BinMatrix.from_dense(U), V,
                               semiring, spec, k, algorithm="distributed", users=gamma, **meta)
    return fact, transcript


def _transpose(f: Factorization, A_T: BinMatrix) -> Factorization:
    return Factorization.build(A_T.transpose(), f.V.transpose(), f.U.transpose(), f.semiring,
                               f.loss_spec, f.k_nominal, **f.meta)


def streaming_two_pass_columns(A: BinMatrix, k: int, epsilon: float, rng=None, **kw):
    """Column-arrival variant: stream the columns and transpose the factors."""
    f, stats = streaming_two_pass(ReplayableSource.from_matrix(A.transpose()), k, epsilon, rng, **kw)
    return _transpose(f, A.transpose()), stats


def distributed_two_round_columns(A: BinMatrix, gamma: int, k: int, epsilon: float, rng=None, **kw):
    """Column-partitioned variant: users hold column sets of A."""
    At = A.transpose()
    f, tr = distributed_two_round(split_rows(At, gamma), k, epsilon, rng, **kw)
    return _transpose(f, At), tr
