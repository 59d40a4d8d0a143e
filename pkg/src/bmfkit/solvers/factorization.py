"""Result container shared by every solver, plus weight grouping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..binmat import BinMatrix, LossSpec, Semiring, loss, product, read_csv, write_csv


@dataclass(frozen=True)
class Factorization:
    """Binary factors ``U`` (n x k') and ``V`` (k' x d) with their loss.

    Build through :meth:`build`, which recomputes ``achieved_loss`` from the
    data so the value can never drift from the factors.
    """

    U: BinMatrix
    V: BinMatrix
    semiring: Semiring
    loss_spec: LossSpec
    achieved_loss: float
    k_nominal: int
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def k_actual(self) -> int:
        return self.U.n_cols

    @classmethod
    def build(cls, A: BinMatrix, U: BinMatrix, V: BinMatrix, semiring, loss_spec: LossSpec,
              k_nominal: int, **meta) -> "Factorization":
        semiring = Semiring(semiring)
        if U.n_cols != V.n_rows:
            raise ValueError("inner dimensions of U and V differ")
        value = loss(A, product(U, V, semiring), loss_spec)
        return cls(U, V, semiring, loss_spec, value, k_nominal, dict(meta))

    def reconstruct(self):
        return product(self.U, self.V, self.semiring)

    def recompute_loss(self, A: BinMatrix):
        return loss(A, self.reconstruct(), self.loss_spec)

    def save(self, directory: str | Path) -> None:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(self.U, out / "U.csv")
        write_csv(self.V, out / "V.csv")
        rows = [
            ("semiring", self.semiring.value),
            ("loss_spec", str(self.loss_spec)),
            ("k_nominal", self.k_nominal),
            ("k_actual", self.k_actual),
            ("achieved_loss", self.achieved_loss),
        ]
        rows += [(key, val) for key, val in sorted(self.meta.items())]
        with open(out / "meta.tsv", "w") as fh:
            for key, val in rows:
                fh.write(f"{key}\t{val}\n")

    @classmethod
    def load(cls, directory: str | Path) -> "Factorization":
        src = Path(directory)
        meta = {}
        with open(src / "meta.tsv") as fh:
            for line in fh:
                key, _, val = line.rstrip("\n").partition("\t")
                meta[key] = val
        U, V = read_csv(src / "U.csv"), read_csv(src / "V.csv")
        achieved = float(meta.pop("achieved_loss"))
        if achieved.is_integer():
            achieved = int(achieved)
        semiring = Semiring(meta.pop("semiring"))
        spec = LossSpec.parse(meta.pop("loss_spec"))
        k_nominal = int(meta.pop("k_nominal"))
        meta.pop("k_actual", None)
        return cls(U, V, semiring, spec, achieved, k_nominal, meta)


@dataclass(frozen=True)
class GroupPartition:
    """Items grouped by weight: group j holds weights in [b^j, b^(j+1)), b = 1+eps.

    ``labels`` are dense group ids (0..n_groups-1, ordered by weight band);
    ``bands`` holds the exponent j of each dense group.
    """

    labels: np.ndarray
    bands: np.ndarray
    base: float

    @classmethod
    def by_weight(cls, weights, epsilon: float) -> "GroupPartition":
        w = np.asarray(weights, dtype=np.float64)
        if w.size and w.min() < 1:
            raise ValueError("weights must be >= 1")
        base = 1.0 + epsilon
        raw = np.floor(np.log(w) / math.log(base) + 1e-12).astype(np.int64)
        bands, labels = np.unique(raw, return_inverse=True)
        return cls(labels.astype(np.int64), bands, base)

    @property
    def n_groups(self) -> int:
        return int(self.bands.shape[0])

    def members(self, g: int) -> np.ndarray:
        return np.flatnonzero(self.labels == g)
