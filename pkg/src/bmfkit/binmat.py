"""Bit-packed binary matrices, semiring products and entrywise losses.

Rows are packed little-endian into 64-bit words: column ``j`` lives in word
``j // 64`` at bit ``j % 64``.  Boolean and GF(2) inner products are a
popcount of the AND of two packed rows; the integer product is the same
popcount without the final reduction.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

WORD_BITS = 64

__all__ = [
    "BinMatrix",
    "IntMatrix",
    "Semiring",
    "LossSpec",
    "FROBENIUS",
    "L0",
    "Lp",
    "product",
    "loss",
    "distinct_rows",
    "gf2_rank",
    "read_csv",
    "write_csv",
]


def _n_words(n_cols: int) -> int:
    return max(1, -(-n_cols // WORD_BITS))


def _pack(dense: np.ndarray) -> np.ndarray:
    n, d = dense.shape
    w = _n_words(d)
    padded = np.zeros((n, w * WORD_BITS), dtype=np.uint8)
    padded[:, :d] = dense
    packed = np.packbits(padded, axis=1, bitorder="little")
    return np.ascontiguousarray(packed).view("<u8").reshape(n, w).astype(np.uint64)


def _unpack(words: np.ndarray, n_cols: int) -> np.ndarray:
    n = words.shape[0]
    as_bytes = np.ascontiguousarray(words.astype("<u8")).view(np.uint8).reshape(n, -1)
    return np.unpackbits(as_bytes, axis=1, bitorder="little")[:, :n_cols]


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class BinMatrix:
    """Immutable n x d matrix over {0, 1} stored as packed row words."""

    __slots__ = ("n_rows", "n_cols", "words", "_dense")

    def __init__(self, words: np.ndarray, n_cols: int):
        words = np.asarray(words, dtype=np.uint64)
        if words.ndim != 2 or words.shape[1] != _n_words(n_cols):
            raise ValueError(f"expected (n, {_n_words(n_cols)}) word array, got {words.shape}")
        tail = n_cols % WORD_BITS
        if tail and words.shape[0] and np.any(words[:, -1] >> np.uint64(tail)):
            raise ValueError("padding bits beyond n_cols must be zero")
        self.n_rows = int(words.shape[0])
        self.n_cols = int(n_cols)
        self.words = _readonly(words.copy())
        self._dense = None

    # construction -------------------------------------------------------
    @classmethod
    def from_dense(cls, data) -> "BinMatrix":
        arr = np.asarray(data)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2:
            raise ValueError("BinMatrix needs a 2-d array")
        if arr.size and not np.isin(arr, (0, 1)).all():
            raise ValueError("BinMatrix entries must be 0 or 1")
        dense = arr.astype(np.uint8)
        out = cls(_pack(dense), dense.shape[1])
        out._dense = _readonly(dense.copy())
        return out

    @classmethod
    def zeros(cls, n_rows: int, n_cols: int) -> "BinMatrix":
        return cls.from_dense(np.zeros((n_rows, n_cols), dtype=np.uint8))

    @classmethod
    def vstack(cls, blocks: Sequence["BinMatrix"]) -> "BinMatrix":
        if not blocks:
            raise ValueError("nothing to stack")
        cols = {b.n_cols for b in blocks}
        if len(cols) != 1:
            raise ValueError(f"column counts differ: {sorted(cols)}")
        return cls(np.vstack([b.words for b in blocks]), blocks[0].n_cols)

    @classmethod
    def hstack(cls, blocks: Sequence["BinMatrix"]) -> "BinMatrix":
        return cls.from_dense(np.hstack([b.to_dense() for b in blocks]))

    # access ---------------------------------------------------------------
    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    def to_dense(self) -> np.ndarray:
        """Read-only uint8 view of the entries."""
        if self._dense is None:
            self._dense = _readonly(_unpack(self.words, self.n_cols))
        return self._dense

    def row(self, i: int) -> np.ndarray:
        return self.to_dense()[i]

    def take(self, rows) -> "BinMatrix":
        idx = np.asarray(rows, dtype=np.intp).reshape(-1)
        return BinMatrix(self.words[idx], self.n_cols)

    def take_cols(self, cols) -> "BinMatrix":
        idx = np.asarray(cols, dtype=np.intp).reshape(-1)
        return BinMatrix.from_dense(self.to_dense()[:, idx])

    def transpose(self) -> "BinMatrix":
        return BinMatrix.from_dense(self.to_dense().T)

    @property
    def T(self) -> "BinMatrix":
        return self.transpose()

    def popcount(self) -> int:
        return int(np.bitwise_count(self.words).sum())

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinMatrix):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.words, other.words)

    def __hash__(self) -> int:
        return hash((self.n_rows, self.n_cols, self.words.tobytes()))

    def __repr__(self) -> str:
        return f"BinMatrix({self.n_rows}x{self.n_cols}, ones={self.popcount()})"


class IntMatrix:
    """Small nonnegative integer matrix, the result of an integer product."""

    __slots__ = ("entries",)

    def __init__(self, entries):
        arr = np.asarray(entries, dtype=np.int64)
        if arr.ndim != 2:
            raise ValueError("IntMatrix needs a 2-d array")
        if arr.size and arr.min() < 0:
            raise ValueError("IntMatrix entries must be nonnegative")
        self.entries = _readonly(arr.copy())

    @property
    def n_rows(self) -> int:
        return self.entries.shape[0]

    @property
    def n_cols(self) -> int:
        return self.entries.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    def to_dense(self) -> np.ndarray:
        return self.entries

    def __eq__(self, other) -> bool:
        if not isinstance(other, IntMatrix):
            return NotImplemented
        return np.array_equal(self.entries, other.entries)

    def __repr__(self) -> str:
        return f"IntMatrix({self.n_rows}x{self.n_cols}, max={self.entries.max(initial=0)})"


class Semiring(str, enum.Enum):
    INTEGER = "integer"
    BOOLEAN = "boolean"
    GF2 = "gf2"

    def reduce(self, counts: np.ndarray) -> np.ndarray:
        """Map integer inner products (counts of AND terms) into the semiring."""
        if self is Semiring.INTEGER:
            return counts
        if self is Semiring.BOOLEAN:
            return (counts > 0).astype(counts.dtype)
        return counts & 1

    def matmul(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        """Dense 0/1 product ``X @ Y`` over this semiring, as int64."""
        counts = np.asarray(X, dtype=np.int64) @ np.asarray(Y, dtype=np.int64)
        return self.reduce(counts)


@dataclass(frozen=True)
class LossSpec:
    """Entrywise loss, always reported in power form.

    ``frobenius`` is the squared Frobenius norm, ``lp`` is the p-th power of
    the entrywise L_p norm and ``l0`` counts differing entries.
    """

    kind: str
    p: float = 2.0

    def __post_init__(self):
        if self.kind not in ("frobenius", "lp", "l0"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.kind == "lp" and not self.p >= 1:
            raise ValueError(f"p must be >= 1, got {self.p}")

    @property
    def exponent(self) -> float | None:
        if self.kind == "frobenius":
            return 2
        if self.kind == "lp":
            return int(self.p) if float(self.p).is_integer() else self.p
        return None

    def entry_cost(self, a, c) -> np.ndarray:
        """Cost of approximating entry ``a`` by ``c`` (broadcasting)."""
        diff = np.abs(np.asarray(a, dtype=np.int64) - np.asarray(c, dtype=np.int64))
        e = self.exponent
        if e is None:
            return (diff != 0).astype(np.int64)
        if isinstance(e, int):
            return diff**e
        return diff.astype(np.float64) ** e

    def __str__(self) -> str:
        if self.kind == "lp":
            return f"lp:{self.exponent}"
        return self.kind

    @classmethod
    def parse(cls, text: str) -> "LossSpec":
        text = text.strip().lower()
        if text in ("frobenius", "fro", "f"):
            return FROBENIUS
        if text in ("l0", "hamming"):
            return L0
        if text.startswith("lp:") or text.startswith("l"):
            return Lp(float(text.split(":", 1)[1] if ":" in text else text[1:]))
        raise ValueError(f"cannot parse loss spec {text!r}")


FROBENIUS = LossSpec("frobenius")
L0 = LossSpec("l0")


def Lp(p: float) -> LossSpec:
    return LossSpec("lp", float(p))


MatrixLike = Union[BinMatrix, IntMatrix, np.ndarray]


def _as_array(M: MatrixLike) -> np.ndarray:
    if isinstance(M, (BinMatrix, IntMatrix)):
        return M.to_dense()
    return np.asarray(M)


def product(U: BinMatrix, V: BinMatrix, semiring: Semiring = Semiring.INTEGER):
    """Semiring product of two binary matrices.

    Returns an :class:`IntMatrix` for the integer semiring and a
    :class:`BinMatrix` for the Boolean and GF(2) semirings.
    """
    if U.n_cols != V.n_rows:
        raise ValueError(f"dimension mismatch: {U.shape} x {V.shape}")
    semiring = Semiring(semiring)
    cols = V.transpose().words
    counts = np.empty((U.n_rows, V.n_cols), dtype=np.int64)
    step = max(1, (1 << 22) // max(1, V.n_cols * cols.shape[1]))
    for start in range(0, U.n_rows, step):
        block = U.words[start:start + step]
        counts[start:start + step] = np.bitwise_count(
            block[:, None, :] & cols[None, :, :]
        ).sum(axis=2)
    out = semiring.reduce(counts)
    if semiring is Semiring.INTEGER:
        return IntMatrix(out)
    return BinMatrix.from_dense(out)


def loss(A: MatrixLike, M: MatrixLike, spec: LossSpec = FROBENIUS):
    """Entrywise loss between ``A`` and ``M`` in power form.

    Integer inputs with an integer exponent give an exact Python ``int``.
    """
    a, m = _as_array(A), _as_array(M)
    if a.shape != m.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {m.shape}")
    total = spec.entry_cost(a, m).sum()
    if np.issubdtype(np.asarray(total).dtype, np.integer):
        return int(total)
    return float(total)


def distinct_rows(A: BinMatrix) -> tuple[BinMatrix, np.ndarray, np.ndarray]:
    """Unique rows in first-appearance order.

    Returns ``(uniques, multiplicity, index)`` where ``uniques.take(index)``
    reproduces ``A``.
    """
    seen: dict[bytes, int] = {}
    index = np.empty(A.n_rows, dtype=np.int64)
    first = []
    for i, w in enumerate(A.words):
        key = w.tobytes()
        j = seen.get(key)
        if j is None:
            j = seen[key] = len(first)
            first.append(i)
        index[i] = j
    counts = np.bincount(index, minlength=len(first)).astype(np.int64)
    return A.take(first), counts, index


def gf2_rank(M: BinMatrix) -> int:
    """Rank over GF(2) by Gaussian elimination on row bitsets."""
    rows = [int.from_bytes(w.astype("<u8").tobytes(), "little") for w in M.words]
    rank = 0
    for col in range(M.n_cols):
        bit = 1 << col
        pivot = next((r for r in range(rank, len(rows)) if rows[r] & bit), None)
        if pivot is None:
            continue
        rows[rank], rows[pivot] = rows[pivot], rows[rank]
        for r in range(len(rows)):
            if r != rank and rows[r] & bit:
                rows[r] ^= rows[rank]
        rank += 1
    return rank


def read_csv(path: str | Path) -> BinMatrix:
    """Read a 0/1 matrix: comma separated, '#' lines are headers/comments."""
    rows = []
    with open(path, newline="") as fh:
        for line_no, rec in enumerate(csv.reader(fh), start=1):
            if not rec or (rec[0].lstrip().startswith("#")):
                continue
            try:
                vals = [int(x) for x in rec]
            except ValueError:
                raise ValueError(f"{path}:{line_no}: non-binary cell in {rec!r}") from None
            if any(v not in (0, 1) for v in vals):
                raise ValueError(f"{path}:{line_no}: entries must be 0 or 1")
            if rows and len(vals) != len(rows[0]):
                raise ValueError(f"{path}:{line_no}: ragged row ({len(vals)} vs {len(rows[0])})")
            rows.append(vals)
    if not rows:
        return BinMatrix.zeros(0, 0)
    return BinMatrix.from_dense(np.array(rows, dtype=np.uint8))


def write_csv(M: BinMatrix, path: str | Path, header: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        for r in M.to_dense():
            fh.write(",".join("1" if v else "0" for v in r))
            fh.write("\n")


def as_binmatrix(data: Union[BinMatrix, Iterable]) -> BinMatrix:
    if isinstance(data, BinMatrix):
        return data
    return BinMatrix.from_dense(np.asarray(data))
