"""k-means machinery and integer-weight coresets.

Coresets here are strong-coreset *substitutes*: sensitivity sampling driven
by a k-means++ bicriteria solution, and the lightweight (mean-based)
importance sampler.  Their guarantees are empirical; see the tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .binmat import BinMatrix

__all__ = [
    "WeightedRows",
    "KMeansResult",
    "kmeans_cost",
    "kmeans_pp_lloyd",
    "default_coreset_size",
    "sensitivity_coreset",
    "lightweight_coreset",
    "MergeReduceStream",
    "merge_reduce_stream",
]


@dataclass(frozen=True)
class WeightedRows:
    """Binary rows with positive integer weights.

    ``index`` records the position of each row in the source it was drawn
    from, when that is known.
    """

    points: BinMatrix
    weights: np.ndarray
    index: np.ndarray | None = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.int64).reshape(-1)
        if w.shape[0] != self.points.n_rows:
            raise ValueError("one weight per row required")
        if w.size and w.min() < 1:
            raise ValueError("weights must be positive integers")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if self.index is not None:
            idx = np.asarray(self.index, dtype=np.int64).reshape(-1)
            idx.setflags(write=False)
            object.__setattr__(self, "index", idx)

    @classmethod
    def unit(cls, points: BinMatrix) -> "WeightedRows":
        return cls(points, np.ones(points.n_rows, dtype=np.int64), np.arange(points.n_rows))

    def __len__(self) -> int:
        return self.points.n_rows

    @property
    def n_cols(self) -> int:
        return self.points.n_cols

    @property
    def total_weight(self) -> int:
        return int(self.weights.sum())

    def expand(self) -> BinMatrix:
        """Duplicate every row ``weight`` times."""
        return self.points.take(np.repeat(np.arange(len(self)), self.weights))

    def to_tsv(self, path: str | Path) -> None:
        dense = self.points.to_dense()
        with open(path, "w") as fh:
            for w, row in zip(self.weights, dense):
                fh.write("\t".join([str(int(w))] + [str(int(v)) for v in row]))
                fh.write("\n")

    @classmethod
    def from_tsv(cls, path: str | Path) -> "WeightedRows":
        weights, rows = [], []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                fields = [int(x) for x in line.split("\t")]
                weights.append(fields[0])
                rows.append(fields[1:])
        return cls(BinMatrix.from_dense(np.array(rows, dtype=np.uint8)), np.array(weights))

    @staticmethod
    def concat(parts: Iterable["WeightedRows"]) -> "WeightedRows":
        parts = [p for p in parts if len(p)]
        if not parts:
            raise ValueError("nothing to concatenate")
        idx = None
        if all(p.index is not None for p in parts):
            idx = np.concatenate([p.index for p in parts])
        return WeightedRows(
            BinMatrix.vstack([p.points for p in parts]),
            np.concatenate([p.weights for p in parts]),
            idx,
        )


@dataclass
class KMeansResult:
    centers: np.ndarray
    labels: np.ndarray
    cost_history: list[float] = field(default_factory=list)

    @property
    def cost(self) -> float:
        return self.cost_history[-1]


def _as_points(X) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(X, WeightedRows):
        return X.points.to_dense().astype(np.float64), X.weights.astype(np.float64)
    if isinstance(X, BinMatrix):
        pts = X.to_dense().astype(np.float64)
    else:
        pts = np.atleast_2d(np.asarray(X, dtype=np.float64))
    return pts, np.ones(pts.shape[0])


def _pairwise_cost(X: np.ndarray, S: np.ndarray, power: float = 2.0,
                   dim_weights: np.ndarray | None = None) -> np.ndarray:
    """(n, k) matrix of sum_l dim_w[l] * |x_l - s_l|^power, computed exactly."""
    n, k = X.shape[0], S.shape[0]
    out = np.empty((n, k), dtype=np.float64)
    step = max(1, (1 << 21) // max(1, k * X.shape[1]))
    for start in range(0, n, step):
        diff = np.abs(X[start:start + step, None, :] - S[None, :, :])
        term = diff * diff if power == 2 else diff**power
        if dim_weights is not None:
            term = term * dim_weights
        out[start:start + step] = term.sum(axis=2)
    return out


def kmeans_cost(X, S, weights=None) -> float:
    """Weighted sum of squared distances to the nearest center."""
    pts, w = _as_points(X)
    if weights is not None:
        w = np.asarray(weights, dtype=np.float64)
    centers = np.atleast_2d(np.asarray(S, dtype=np.float64))
    if centers.shape[0] == 0:
        raise ValueError("empty center set")
    if centers.shape[1] != pts.shape[1]:
        raise ValueError(f"dimension mismatch: points {pts.shape[1]}, centers {centers.shape[1]}")
    return float(w @ _pairwise_cost(pts, centers).min(axis=1))


def _kmeanspp_seed(X: np.ndarray, w: np.ndarray, k: int, rng: np.random.Generator,
                   power: float = 2.0, dim_weights=None, n_local_trials: int | None = None) -> np.ndarray:
    """Greedy k-means++ seeding, returns indices of the chosen points."""
    n = X.shape[0]
    if n_local_trials is None:
        n_local_trials = 2 + int(math.log(k))
    first = rng.choice(n, p=w / w.sum())
    chosen = [int(first)]
    closest = _pairwise_cost(X, X[[first]], power, dim_weights)[:, 0]
    for _ in range(1, k):
        pot = w * closest
        total = pot.sum()
        if total <= 0:
            cand = rng.choice(n, size=n_local_trials, p=w / w.sum())
        else:
            cand = rng.choice(n, size=n_local_trials, p=pot / total)
        dist = _pairwise_cost(X, X[cand], power, dim_weights)
        new_closest = np.minimum(closest[:, None], dist)
        best = int(np.argmin(w @ new_closest))
        chosen.append(int(cand[best]))
        closest = new_closest[:, best]
    return np.array(chosen, dtype=np.int64)


def kmeans_pp_lloyd(X, k: int, max_iters: int = 100, rng=None, weights=None,
                    n_local_trials: int | None = None) -> KMeansResult:
    """Lloyd's algorithm from a k-means++ seeding.

    Assignment ties go to the lowest center index.  A center left without
    points is moved onto the point with the largest cost contribution.
    ``cost_history[i]`` is the cost after the i-th assignment step and is
    non-increasing.
    """
    rng = np.random.default_rng(rng)
    pts, w = _as_points(X)
    if weights is not None:
        w = np.asarray(weights, dtype=np.float64)
    n = pts.shape[0]
    if k < 1 or k > n:
        raise ValueError(f"k={k} must lie in [1, {n}]")
    centers = pts[_kmeanspp_seed(pts, w, k, rng, n_local_trials=n_local_trials)].copy()
    labels = None
    history = []
    for _ in range(max(1, max_iters)):
        dist = _pairwise_cost(pts, centers)
        new_labels = dist.argmin(axis=1)
        history.append(float(w @ dist[np.arange(n), new_labels]))
        if labels is not None and np.array_equal(labels, new_labels):
            break
        labels = new_labels
        mass = np.bincount(labels, weights=w, minlength=k)
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, pts * w[:, None])
        filled = mass > 0
        centers[filled] = sums[filled] / mass[filled, None]
        for c in np.flatnonzero(~filled):
            contrib = w * _pairwise_cost(pts, centers).min(axis=1)
            centers[c] = pts[int(np.argmax(contrib))]
    return KMeansResult(centers, labels, history)


def default_coreset_size(k: int, epsilon: float, n: int) -> int:
    """ceil(k^3 log2(k)^2 / eps^4), capped at n (log2 floored at 1)."""
    lg = max(1.0, math.log2(max(k, 2)))
    return int(min(n, math.ceil(k**3 * lg * lg / epsilon**4)))


def _check_eps(epsilon: float) -> None:
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")


def _merge_identical(words: np.ndarray, frac_weights: np.ndarray, source: np.ndarray):
    """Sum weights of identical rows (first occurrence kept)."""
    keys: dict[bytes, int] = {}
    order, total = [], []
    for row_words, wt, src in zip(words, frac_weights, source):
        key = row_words.tobytes()
        j = keys.get(key)
        if j is None:
            keys[key] = len(order)
            order.append(int(src))
            total.append(float(wt))
        else:
            total[j] += float(wt)
    return np.array(order, dtype=np.int64), np.array(total)


def _round_weights(w: np.ndarray) -> np.ndarray:
    return np.maximum(1, np.rint(w)).astype(np.int64)


def sensitivity_sample(points: np.ndarray, weights: np.ndarray, k: int, t: int,
                       rng: np.random.Generator, power: float = 2.0,
                       dim_weights: np.ndarray | None = None, lloyd_iters: int = 10):
    """Importance sampling by sensitivity bounds from a bicriteria clustering.

    Returns ``(draw_indices, fractional_weights)`` for ``t`` i.i.d. draws;
    callers merge and round.
    """
    n = points.shape[0]
    k = min(k, n)
    seeds = _kmeanspp_seed(points, weights, k, rng, power, dim_weights)
    centers = points[seeds].astype(np.float64)
    if power == 2 and dim_weights is None and lloyd_iters:
        res = _lloyd_from(points, weights, centers, lloyd_iters)
        centers = res
    dist = _pairwise_cost(points, centers, power, dim_weights)
    labels = dist.argmin(axis=1)
    cost = dist[np.arange(n), labels]
    mass = np.bincount(labels, weights=weights, minlength=centers.shape[0])
    total_cost = float(weights @ cost)
    sens = 1.0 / mass[labels]
    if total_cost > 0:
        sens = sens + cost / total_cost
    q = weights * sens
    q = q / q.sum()
    draws = rng.choice(n, size=t, p=q)
    return draws, weights[draws] / (t * q[draws])


def _lloyd_from(pts, w, centers, iters):
    centers = centers.copy()
    k = centers.shape[0]
    for _ in range(iters):
        labels = _pairwise_cost(pts, centers).argmin(axis=1)
        mass = np.bincount(labels, weights=w, minlength=k)
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, pts * w[:, None])
        filled = mass > 0
        centers[filled] = sums[filled] / mass[filled, None]
    return centers


def _as_weighted(X) -> WeightedRows:
    if isinstance(X, WeightedRows):
        return X
    if isinstance(X, BinMatrix):
        return WeightedRows.unit(X)
    return WeightedRows.unit(BinMatrix.from_dense(np.asarray(X)))


def sensitivity_coreset(X, k: int, epsilon: float, rng=None, t: int | None = None,
                        power: float = 2.0) -> WeightedRows:
    """Sensitivity-sampling coreset with integer weights.

    ``t`` defaults to :func:`default_coreset_size`.  When the input has at
    most ``t`` rows it is returned unchanged and no randomness is consumed.
    Identical sampled rows are merged before rounding to the nearest
    positive integer.
    """
    _check_eps(epsilon)
    rng = np.random.default_rng(rng)
    X = _as_weighted(X)
    n = len(X)
    if t is None:
        t = default_coreset_size(k, epsilon, n)
    if n <= t:
        return X
    pts = X.points.to_dense().astype(np.float64)
    draws, frac = sensitivity_sample(pts, X.weights.astype(np.float64), k, t, rng, power)
    keep, w = _merge_identical(X.points.words[draws], frac, draws)
    src = X.index[keep] if X.index is not None else keep
    return WeightedRows(X.points.take(keep), _round_weights(w), src)


def lightweight_coreset(X, m: int, rng=None) -> WeightedRows:
    """Lightweight coreset: sample by 1/(2n) + dist(x, mean)^2 / (2 * total).

    Returns the input unchanged when ``m >= n``.
    """
    rng = np.random.default_rng(rng)
    X = _as_weighted(X)
    n = len(X)
    if m >= n:
        return X
    pts = X.points.to_dense().astype(np.float64)
    w = X.weights.astype(np.float64)
    mu = (w @ pts) / w.sum()
    d2 = ((pts - mu) ** 2).sum(axis=1)
    total = float(w @ d2)
    W = w.sum()
    if total > 0:
        q = w * (0.5 / W + 0.5 * d2 / total)
    else:
        q = w / W
    q = q / q.sum()
    draws = rng.choice(n, size=m, p=q)
    frac = w[draws] / (m * q[draws])
    keep, wt = _merge_identical(X.points.words[draws], frac, draws)
    src = X.index[keep] if X.index is not None else keep
    return WeightedRows(X.points.take(keep), _round_weights(wt), src)


class MergeReduceStream:
    """One-pass merge-and-reduce coreset tree over a row stream.

    Rows are buffered in blocks of ``block``; each full block becomes a
    level-0 coreset and two coresets on the same level are merged and
    reduced to one on the next level.  ``peak_rows`` is the largest number of
    rows held at once (buffer plus tree).
    """

    def __init__(self, k: int, epsilon: float, block: int, n_total: int,
                 rng=None, t: int | None = None, power: float = 2.0):
        _check_eps(epsilon)
        if block < 1:
            raise ValueError("block must be positive")
        self.k = k
        self.block = block
        self.n_total = n_total
        self.levels_needed = max(1, math.ceil(math.log2(max(n_total, 1) / block) + 1))
        self.epsilon_level = epsilon / self.levels_needed
        self.t = t
        self.power = power
        self.rng = np.random.default_rng(rng)
        self._buffer: list[np.ndarray] = []
        self._buffer_start = 0
        self._tree: dict[int, WeightedRows] = {}
        self.rows_seen = 0
        self.peak_rows = 0

    def _reduce(self, X: WeightedRows) -> WeightedRows:
        return sensitivity_coreset(X, self.k, self.epsilon_level, self.rng, self.t, self.power)

    def held_rows(self) -> int:
        return len(self._buffer) + sum(len(c) for c in self._tree.values())

    def _flush(self) -> None:
        if not self._buffer:
            return
        pts = BinMatrix.from_dense(np.vstack(self._buffer))
        idx = np.arange(self._buffer_start, self._buffer_start + len(self._buffer))
        node = self._reduce(WeightedRows(pts, np.ones(len(idx), dtype=np.int64), idx))
        self._buffer = []
        self._buffer_start = self.rows_seen
        level = 0
        while level in self._tree:
            node = self._reduce(WeightedRows.concat([self._tree.pop(level), node]))
            level += 1
        self._tree[level] = node

    def push(self, row) -> None:
        self._buffer.append(np.asarray(row, dtype=np.uint8).reshape(1, -1))
        self.rows_seen += 1
        self.peak_rows = max(self.peak_rows, self.held_rows())
        if len(self._buffer) >= self.block:
            self._flush()
            self.peak_rows = max(self.peak_rows, self.held_rows())

    def result(self) -> WeightedRows:
        """Union of all coresets still in the tree (the stream may continue)."""
        if self._buffer and not self._tree:
            self._flush()
        parts = [self._tree[lv] for lv in sorted(self._tree)]
        if self._buffer:
            pts = BinMatrix.from_dense(np.vstack(self._buffer))
            idx = np.arange(self._buffer_start, self._buffer_start + len(self._buffer))
            parts.append(self._reduce(WeightedRows(pts, np.ones(len(idx), dtype=np.int64), idx)))
        if len(parts) == 1:
            return parts[0]
        return WeightedRows.concat(parts)


def _iter_rows(source) -> Iterator[np.ndarray]:
    if isinstance(source, BinMatrix):
        yield from source.to_dense()
    else:
        for row in source:
            yield np.asarray(row, dtype=np.uint8)


def merge_reduce_stream(row_source, k: int, epsilon: float, block: int, rng=None,
                        t: int | None = None, n_total: int | None = None) -> WeightedRows:
    """Stream rows once through a :class:`MergeReduceStream`."""
    if n_total is None:
        n_total = row_source.n_rows if isinstance(row_source, BinMatrix) else len(row_source)
    stream = MergeReduceStream(k, epsilon, block, n_total, rng, t)
    for row in _iter_rows(row_source):
        stream.push(row)
    return stream.result()
