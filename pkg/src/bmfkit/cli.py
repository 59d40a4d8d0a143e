"""Command-line front end.

    bmfkit generate       --synth KIND:N:D:P[:R[:PE]] --out DIR
    bmfkit factorize      (--input CSV | --synth SPEC) --alg ALG --k K [--out DIR]
    bmfkit bench          (--input CSV | --synth SPEC)... --alg A,B --k 2,5 [--reps 10]
    bmfkit coreset-study  (--input CSV | --synth SPEC) --k K [--r-grid ...]

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import math
import os
import shlex
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .binmat import FROBENIUS, L0, BinMatrix, Lp, Semiring, loss, read_csv, write_csv
from .clustering import lightweight_coreset, sensitivity_coreset
from .datagen import SynthSpec, gen_lowrank, generate
from .solvers import (brute_force_bmf, frobenius_coreset_solver, gf2_bicriteria_solver, kbmf,
                      kbmf_plus, lp_bicriteria_solver)
from .solvers.frobenius import coreset_v

ALGORITHMS = ("kbmf", "kbmf-plus", "frobenius", "gf2", "lp", "brute")
DEFAULT_R_GRID = (0.001, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


@dataclass(frozen=True)
class Dataset:
    label: str
    spec: SynthSpec | None = None
    path: str | None = None

    def load(self, rep: int = 0) -> BinMatrix:
        """Matrix for repetition ``rep``; synthetic data is redrawn per rep."""
        if self.spec is not None:
            return generate(self.spec.with_seed(self.spec.seed + rep))
        return read_csv(self.path)


@dataclass(frozen=True)
class RunConfig:
    alg: str
    k: int
    epsilon: float = 0.5
    p_norm: float = 1.0
    semiring: Semiring = Semiring.INTEGER

    def loss_spec(self):
        if self.alg == "lp":
            return Lp(self.p_norm)
        if self.alg == "gf2":
            return L0
        return FROBENIUS


def resolve_semiring(alg: str, requested: str | None) -> Semiring:
    if alg == "gf2":
        if requested not in (None, "gf2"):
            raise ConfigError(f"--alg gf2 works over GF(2) only, not {requested}")
        return Semiring.GF2
    return Semiring(requested or "integer")


def run_algorithm(A: BinMatrix, cfg: RunConfig, seed: int):
    rng = np.random.default_rng(seed)
    if cfg.alg == "kbmf":
        return kbmf(A, cfg.k, rng, cfg.semiring)
    if cfg.alg == "kbmf-plus":
        return kbmf_plus(A, cfg.k, rng, cfg.semiring)
    if cfg.alg == "frobenius":
        return frobenius_coreset_solver(A, cfg.k, cfg.epsilon, "sketch_sampled", rng,
                                        semiring=cfg.semiring)
    if cfg.alg == "gf2":
        return gf2_bicriteria_solver(A, cfg.k, cfg.epsilon, rng)
    if cfg.alg == "lp":
        return lp_bicriteria_solver(A, cfg.k, cfg.p_norm, cfg.epsilon, rng, cfg.semiring)
    if cfg.alg == "brute":
        if cfg.k * A.n_cols > 24:
            raise ConfigError(f"brute force needs k*d <= 24, got {cfg.k * A.n_cols}")
        return brute_force_bmf(A, cfg.k, FROBENIUS, cfg.semiring)
    raise ConfigError(f"unknown algorithm {cfg.alg!r}")


def frobenius_error(A: BinMatrix, fact) -> float:
    """Frobenius norm (not squared) of the residual, for table output."""
    return math.sqrt(loss(A, fact.reconstruct(), FROBENIUS))


def timed_runs(dataset: Dataset, cfg: RunConfig, seed: int, reps: int):
    """Errors and wall-clock milliseconds for ``reps`` seeded repetitions."""
    errors, times, first = [], [], None
    for i in range(reps):
        A = dataset.load(i)
        start = time.perf_counter()
        fact = run_algorithm(A, cfg, seed + i)
        times.append((time.perf_counter() - start) * 1000.0)
        errors.append(frobenius_error(A, fact))
        if first is None:
            first = (A, fact)
    if reps > 3:
        times = times[1:]
    return errors, times, first


def _datasets(args, allow_many: bool) -> list[Dataset]:
    found = []
    for spec in args.synth or []:
        try:
            s = SynthSpec.parse(spec, seed=args.seed)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        found.append(Dataset(s.label(), spec=s))
    for path in args.input or []:
        if not Path(path).is_file():
            raise ConfigError(f"input file not found: {path}")
        found.append(Dataset(Path(path).stem, path=path))
    if not found:
        raise ConfigError("give --input or --synth")
    if not allow_many and len(found) > 1:
        raise ConfigError("exactly one of --input/--synth expected")
    return found


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _manifest(path: Path, args) -> None:
    items = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    lines = [f"{k}\t{v}" for k, v in items.items()]
    lines.append("argv\t" + shlex.join(sys.argv[1:]))
    path.write_text("\n".join(lines) + "\n")


def cmd_generate(args) -> int:
    if not args.synth or len(args.synth) != 1:
        raise ConfigError("generate needs exactly one --synth spec")
    if not args.out:
        raise ConfigError("generate needs --out DIR")
    try:
        spec = SynthSpec.parse(args.synth[0], seed=args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if spec.kind == "lowrank":
        A, U0, V0 = gen_lowrank(spec)
        write_csv(U0, out / "U0.csv")
        write_csv(V0, out / "V0.csv")
    else:
        A = generate(spec)
    write_csv(A, out / "A.csv")
    (out / "manifest.tsv").write_text(spec.to_manifest() + "\n")
    return EXIT_OK


def _run_config(args, alg: str, k: int) -> RunConfig:
    if alg not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {alg!r}; choose from {', '.join(ALGORITHMS)}")
    if k < 1:
        raise ConfigError("k must be positive")
    if not args.eps > 0:
        raise ConfigError("--eps must be positive")
    if args.p_norm < 1:
        raise ConfigError("--p-norm must be >= 1")
    return RunConfig(alg, k, args.eps, args.p_norm, resolve_semiring(alg, args.semiring))


def cmd_factorize(args) -> int:
    (dataset,) = _datasets(args, allow_many=False)
    cfg = _run_config(args, args.alg, args.k)
    errors, times, (A, fact) = timed_runs(dataset, cfg, args.seed, args.reps)
    if args.out:
        out = Path(args.out)
        fact.save(out)
        _manifest(out / "manifest.tsv", args)
    line = "\t".join([dataset.label, cfg.alg, str(cfg.k),
                      f"{float(np.mean(errors)):.6f}", f"{float(np.mean(times)):.3f}"])
    print("dataset\talg\tk\terror\ttime_ms")
    print(line)
    return EXIT_OK


def _parse_list(text: str, conv) -> list:
    try:
        return [conv(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse list {text!r}") from None


def bench_table(datasets, algs, ks, args) -> str:
    """TSV with one row per (dataset, k) and per-algorithm error/time columns."""
    cells = [(ds, k, alg) for ds in datasets for k in ks for alg in algs]
    configs = {(k, alg): _run_config(args, alg, k) for _, k, alg in cells}

    def work(cell):
        ds, k, alg = cell
        try:
            errors, times, _ = timed_runs(ds, configs[(k, alg)], args.seed, args.reps)
            return float(np.mean(errors)), float(np.mean(times))
        except Exception as exc:  # a failed cell is reported, the table still completes
            print(f"{ds.label} k={k} {alg}: {exc}", file=sys.stderr)
            return None

    with ThreadPoolExecutor(max_workers=args.workers) as pool:
        results = dict(zip(cells, pool.map(work, cells)))
    header = ["dataset", "k"] + [f"error_{a}" for a in algs] + [f"time_ms_{a}" for a in algs]
    lines = ["\t".join(header)]
    for ds in datasets:
        for k in ks:
            res = [results[(ds, k, a)] for a in algs]
            errs = ["NA" if r is None else f"{r[0]:.4f}" for r in res]
            tms = ["NA" if r is None else f"{r[1]:.3f}" for r in res]
            lines.append("\t".join([ds.label, str(k)] + errs + tms))
    return "\n".join(lines) + "\n"


def cmd_bench(args) -> int:
    datasets = _datasets(args, allow_many=True)
    algs = _parse_list(args.alg, str)
    ks = _parse_list(args.k_list, int)
    _emit(bench_table(datasets, algs, ks, args), args.out)
    return EXIT_OK


def coreset_study(A: BinMatrix, k: int, r_grid, reps: int, seed: int,
                  semiring=Semiring.INTEGER, epsilon: float = 0.5) -> dict:
    """Errors of kbmf-plus with V fit on coresets of size ceil(r*n).

    Returns ``{(r, construction): [error per coreset]}`` plus the full-data
    baseline under ``(1.0, "full")``.
    """
    n = A.n_rows
    out = {}
    out[(1.0, "full")] = [frobenius_error(A, kbmf_plus(A, k, np.random.default_rng(seed + i),
                                                       semiring)) for i in range(reps)]
    for r in r_grid:
        size = max(1, math.ceil(r * n))
        for name in ("sensitivity", "lightweight"):
            errs = []
            for i in range(reps):
                rng = np.random.default_rng([seed, i, int(round(r * 1e6))])
                if name == "sensitivity":
                    X = sensitivity_coreset(A, min(k, n), epsilon, rng, t=size)
                else:
                    X = lightweight_coreset(A, size, rng)
                if len(X) > size:
                    raise RuntimeError(f"{name} coreset has {len(X)} rows, budget {size}")
                errs.append(frobenius_error(A, coreset_v(A, X, k, rng, semiring)))
            out[(r, name)] = errs
    return out


def cmd_coreset_study(args) -> int:
    (dataset,) = _datasets(args, allow_many=False)
    if args.k < 1:
        raise ConfigError("k must be positive")
    grid = _parse_list(args.r_grid, float) if args.r_grid else list(DEFAULT_R_GRID)
    if any(not 0 < r <= 1 for r in grid):
        raise ConfigError("r values must lie in (0, 1]")
    A = dataset.load(0)
    semiring = Semiring(args.semiring or "integer")
    study = coreset_study(A, args.k, grid, args.reps, args.seed, semiring)
    lines = ["r\tconstruction\tmean_error\tstd_error"]
    for (r, name), errs in study.items():
        lines.append(f"{r:g}\t{name}\t{np.mean(errs):.4f}\t{np.std(errs):.4f}")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def _seed_default() -> int:
    raw = os.environ.get("BMF_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"BMF_SEED must be an integer, got {raw!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bmfkit", description="Binary matrix factorization toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, many=False):
        p.add_argument("--input", action="append", help="CSV matrix (0/1, comma separated)")
        p.add_argument("--synth", action="append", help="kind:n:d:p[:r[:pe]]")
        p.add_argument("--seed", type=int, default=None, help="defaults to $BMF_SEED or 0")
        p.add_argument("--semiring", choices=[s.value for s in Semiring])
        p.add_argument("--out", help="output path (directory for generate/factorize)")

    p = sub.add_parser("generate", help="write a synthetic matrix and its manifest")
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("factorize", help="run one algorithm and print a summary line")
    common(p)
    p.add_argument("--alg", required=True, choices=ALGORITHMS)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--p-norm", type=float, default=1.0)
    p.add_argument("--reps", type=int, default=1)
    p.set_defaults(func=cmd_factorize)

    p = sub.add_parser("bench", help="mean error/time table over datasets x k x algorithms")
    common(p)
    p.add_argument("--alg", required=True, help="comma-separated algorithm ids")
    p.add_argument("--k", dest="k_list", required=True, help="comma-separated ranks")
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--p-norm", type=float, default=1.0)
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("coreset-study", help="error of coreset-fitted V across sizes r*n")
    common(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--reps", type=int, default=10, help="coresets per size")
    p.add_argument("--r-grid", help="comma-separated fractions of n")
    p.set_defaults(func=cmd_coreset_study)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.seed is None:
            args.seed = _seed_default()
        if getattr(args, "reps", 1) < 1:
            raise ConfigError("--reps must be positive")
        return args.func(args)
    except ConfigError as exc:
        print(f"bmfkit: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"bmfkit: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
