"""Synthetic binary matrices and a thresholding CSV loader."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from .binmat import BinMatrix, Semiring

KINDS = ("bernoulli", "lowrank", "noisy")


@dataclass(frozen=True)
class SynthSpec:
    kind: str
    n: int
    d: int
    p: float = 0.5
    r: int = 0
    p_e: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.n < 1 or self.d < 1:
            raise ValueError("n and d must be positive")
        if not 0 < self.p < 1:
            raise ValueError(f"p must lie in (0, 1), got {self.p}")
        if not 0 <= self.p_e < 1:
            raise ValueError(f"p_e must lie in [0, 1), got {self.p_e}")
        if self.kind != "bernoulli" and not 1 <= self.r <= min(self.n, self.d):
            raise ValueError(f"rank r={self.r} must lie in [1, min(n, d)]")

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> "SynthSpec":
        """Parse ``kind:n:d:p[:r[:pe]]``."""
        parts = text.split(":")
        if len(parts) < 4 or len(parts) > 6:
            raise ValueError(f"expected kind:n:d:p[:r[:pe]], got {text!r}")
        try:
            kw = dict(kind=parts[0], n=int(parts[1]), d=int(parts[2]), p=float(parts[3]), seed=seed)
            if len(parts) > 4:
                kw["r"] = int(parts[4])
            if len(parts) > 5:
                kw["p_e"] = float(parts[5])
        except ValueError as exc:
            raise ValueError(f"bad synthetic spec {text!r}: {exc}") from None
        return cls(**kw)

    def label(self) -> str:
        out = f"{self.kind}:{self.n}:{self.d}:{self.p:g}"
        if self.kind != "bernoulli":
            out += f":{self.r}"
        if self.kind == "noisy":
            out += f":{self.p_e:g}"
        return out

    def with_seed(self, seed: int) -> "SynthSpec":
        return replace(self, seed=seed)

    def to_manifest(self) -> str:
        """One TSV line of key=value pairs."""
        return "\t".join(f"{k}={v}" for k, v in asdict(self).items())

    @classmethod
    def from_manifest(cls, line: str) -> "SynthSpec":
        types = {f.name: f.type for f in fields(cls)}
        conv = {"str": str, "int": int, "float": float}
        kw = {}
        for item in line.strip().split("\t"):
            key, _, val = item.partition("=")
            if key not in types:
                raise ValueError(f"unknown manifest key {key!r}")
            kw[key] = conv[types[key]](val)
        return cls(**kw)


def _bits(rng: np.random.Generator, shape, p: float) -> np.ndarray:
    return (rng.random(shape) < p).astype(np.uint8)


def gen_bernoulli(spec: SynthSpec) -> BinMatrix:
    """Independent entries equal to 1 with probability p."""
    rng = np.random.default_rng(spec.seed)
    return BinMatrix.from_dense(_bits(rng, (spec.n, spec.d), spec.p))


def _lowrank(spec: SynthSpec, rng: np.random.Generator):
    U0 = _bits(rng, (spec.n, spec.r), spec.p)
    V0 = _bits(rng, (spec.r, spec.d), spec.p)
    A = Semiring.GF2.matmul(U0, V0).astype(np.uint8)
    return BinMatrix.from_dense(A), BinMatrix.from_dense(U0), BinMatrix.from_dense(V0)


def gen_lowrank(spec: SynthSpec):
    """``(A, U0, V0)`` with Bernoulli(p) factors and A = U0 V0 over GF(2)."""
    return _lowrank(spec, np.random.default_rng(spec.seed))


def gen_noisy(spec: SynthSpec) -> BinMatrix:
    """A low-rank matrix with every bit flipped independently with probability p_e."""
    rng = np.random.default_rng(spec.seed)
    A, _, _ = _lowrank(spec, rng)
    flips = _bits(rng, A.shape, spec.p_e) if spec.p_e > 0 else np.zeros(A.shape, np.uint8)
    return BinMatrix.from_dense(A.to_dense() ^ flips)


def generate(spec: SynthSpec) -> BinMatrix:
    if spec.kind == "bernoulli":
        return gen_bernoulli(spec)
    if spec.kind == "lowrank":
        return gen_lowrank(spec)[0]
    return gen_noisy(spec)


def load_binarized_csv(path: str | Path, threshold: float = 0.5) -> BinMatrix:
    """Read a numeric CSV; an entry becomes 1 iff its value is >= threshold.

    Lines starting with '#' are skipped.
    """
    rows = []
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), 1):
            if not rec or rec[0].lstrip().startswith("#"):
                continue
            try:
                rows.append([float(x) for x in rec])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric cell") from None
            if len(rows[-1]) != len(rows[0]):
                raise ValueError(f"{path}:{lineno}: expected {len(rows[0])} cells, got {len(rows[-1])}")
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return BinMatrix.from_dense((np.array(rows) >= threshold).astype(np.uint8))
