"""Command-line entry point: ``stablekrylov <subcommand> [options]``."""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import bench, datasets
from .krylov import METHODS, SolveOptions, krylov_solve, make_preconditioner
from .matgen import RandomMatrixSpec, hilbert, random_rhs, random_symmetric_cond
from .mmio import read_matrix_market
from .plot import PlotSpec, emit_plot
from .stabilize import POLICIES, StepPolicy


def _csv_list(kind, allowed=None):
    def parse(text):
        items = [t.strip().lower() for t in text.split(",") if t.strip()]
        if not items:
            raise argparse.ArgumentTypeError(f"empty {kind} list")
        if allowed is not None:
            bad = [t for t in items if t not in allowed]
            if bad:
                raise argparse.ArgumentTypeError(f"unknown {kind}: {', '.join(bad)}")
        return tuple(items)
    return parse


def _int_list(text):
    return tuple(int(t) for t in text.split(",") if t.strip())


def _float_list(text):
    return tuple(float(t) for t in text.split(",") if t.strip())


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("common options")
    g.add_argument("--trials", type=int, default=10)
    g.add_argument("--seed", type=int, default=0, help="base seed")
    g.add_argument("--methods", type=_csv_list("method", METHODS), default=METHODS)
    g.add_argument("--policies", type=_csv_list("policy", POLICIES), default=POLICIES)
    g.add_argument("--rtol", type=float, default=1e-8)
    g.add_argument("--maxiter", type=int, default=None, help="default 10 n")
    g.add_argument("--out-dir", default="results")
    g.add_argument("--check-invariants", action="store_true",
                   help="assert monotonicity and residual drift inside the loop (slower)")
    g.add_argument("--preconditioner", choices=("none", "jacobi"), default="none")
    g.add_argument("--timing", action="store_true",
                   help="record wall-clock times (makes the CSV non-reproducible)")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="stablekrylov",
                                     description="Stabilised Krylov solver experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[common], help="solve one system and print a report")
    s.add_argument("matrix", help="Matrix Market path, hilbert:N, or random:N:COND")
    s.add_argument("--method", default="gmres", choices=METHODS)
    s.add_argument("--policy", default="classic", choices=POLICIES)

    h = sub.add_parser("hilbert", parents=[common], help="Hilbert matrix sweep")
    h.add_argument("--n", type=_int_list, default=bench.DEFAULT_HILBERT_N)
    h.add_argument("--lu", action="store_true", help="add the dense LU baseline")

    r = sub.add_parser("random", parents=[common], help="condition-number sweep")
    r.add_argument("--n", type=int, default=bench.DEFAULT_RANDOM_N)
    r.add_argument("--conds", type=_float_list, default=bench.DEFAULT_CONDS)
    r.add_argument("--definiteness", choices=("spd", "indefinite"), default="spd")
    r.add_argument("--spacing", choices=("log", "linear"), default="log")
    r.add_argument("--lu", action="store_true")

    f = sub.add_parser("files", parents=[common], help="run on Matrix Market files")
    f.add_argument("paths", nargs="+",
                   help="paths, or the names fixture / bcsstk20 / plat1919")
    f.add_argument("--lu", action="store_true")

    fe = sub.add_parser("fetch", help="download and checksum the real-world matrices")
    fe.add_argument("names", nargs="*", default=sorted(datasets.CATALOGUE))
    fe.add_argument("--dir", default=None, help=f"cache directory (default ${datasets.CACHE_ENV})")

    pl = sub.add_parser("plot", help="render a results CSV as SVG")
    pl.add_argument("csv")
    pl.add_argument("--metric", choices=("residual_norm", "solution_norm", "iterations"),
                    default="residual_norm")
    pl.add_argument("--x", choices=("n", "cond"), default="n")
    pl.add_argument("--x-log", action="store_true")
    pl.add_argument("--aggregate", choices=bench.AGGREGATES, default="mean")
    pl.add_argument("--methods", type=_csv_list("method"), default=None)
    pl.add_argument("--policies", type=_csv_list("policy"), default=None)
    pl.add_argument("--title", default="")
    pl.add_argument("-o", "--output", default=None, help="default: CSV path with .svg")
    return parser


def _config(args, family, **extra) -> bench.ExperimentConfig:
    return bench.ExperimentConfig(
        family, trials=args.trials, base_seed=args.seed, methods=args.methods,
        policies=args.policies, rtol=args.rtol, maxiter=args.maxiter,
        preconditioner=None if args.preconditioner == "none" else args.preconditioner,
        check_invariants=args.check_invariants, record_timing=args.timing,
        out_dir=args.out_dir, **extra)


def _write_outputs(rows, cfg, name, x="n", x_log=False) -> None:
    path = bench.write_results(rows, cfg.out_dir, name)
    print(f"wrote {path} ({len(rows)} rows)")
    for metric in ("residual_norm", "solution_norm"):
        svg = emit_plot(rows, PlotSpec(metric=metric, x=x, x_log=x_log, title=f"{name}: {metric}"))
        spath = os.path.join(cfg.out_dir, f"{name}_{metric}.svg")
        with open(spath, "w", encoding="utf-8") as fh:
            fh.write(svg)
        print(f"wrote {spath}")


def _summary(rows) -> None:
    for r in rows:
        if r.seed == "mean":
            print(f"{r.family:8s} n={r.n:<5d} cond={r.cond:<8.3g} {r.method:9s} {r.policy:10s} "
                  f"||x||={r.solution_norm:.3e} ||r||={r.residual_norm:.3e}")


def _resolve_matrix(spec: str, seed: int):
    if spec.startswith("hilbert:"):
        return hilbert(int(spec.split(":")[1]))
    if spec.startswith("random:"):
        _, n, c = spec.split(":")
        return random_symmetric_cond(RandomMatrixSpec(int(n), float(c), seed))
    if spec in datasets.CATALOGUE:
        return datasets.load(spec)
    if spec == "fixture":
        return read_matrix_market(datasets.fixture_path())
    return read_matrix_market(spec)


def _resolve_path(name: str) -> str:
    if name == "fixture":
        return datasets.fixture_path()
    if name in datasets.CATALOGUE:
        path = datasets.local_path(name)
        if path is None:
            raise FileNotFoundError(f"{name} has not been fetched; run 'stablekrylov fetch {name}'")
        return path
    return name


def cmd_solve(args) -> int:
    a = _resolve_matrix(args.matrix, args.seed)
    n = a.shape[0] if hasattr(a, "shape") else a.rows
    b = random_rhs(n, args.seed)
    opts = SolveOptions(rtol=args.rtol, maxiter=args.maxiter, policy=StepPolicy(args.policy),
                        invariant_checks=args.check_invariants,
                        preconditioner=make_preconditioner(
                            None if args.preconditioner == "none" else args.preconditioner, a))
    rep = krylov_solve(a, b, args.method, opts)
    bn = float(np.linalg.norm(b))
    print(f"method={rep.method} policy={rep.policy} n={n}")
    print(f"termination={rep.termination} iterations={rep.iterations} elapsed={rep.elapsed:.3f}s")
    print(f"||x||={rep.solution_norm:.6e} ||b-Ax||={rep.final_true_residual:.6e} "
          f"relative={rep.final_true_residual / bn:.3e}")
    if rep.breakdown_reason:
        print(f"breakdown: {rep.breakdown_reason}")
    if rep.invariant_violations:
        print(f"invariant violations: {len(rep.invariant_violations)}; first: {rep.invariant_violations[0]}")
        return 1
    return 0


def cmd_hilbert(args) -> int:
    cfg = _config(args, "hilbert", n_values=args.n, lu_baseline=args.lu)
    rows = bench.run_hilbert_sweep(cfg)
    _summary(rows)
    _write_outputs(rows, cfg, "hilbert")
    return 0


def cmd_random(args) -> int:
    cfg = _config(args, "random", cond_values=args.conds, random_n=args.n,
                  definiteness=args.definiteness, spacing=args.spacing, lu_baseline=args.lu)
    rows = bench.run_random_sweep(cfg)
    _summary(rows)
    _write_outputs(rows, cfg, "random", x="cond", x_log=True)
    return 0


def cmd_files(args) -> int:
    paths = tuple(_resolve_path(p) for p in args.paths)
    cfg = _config(args, "file", files=paths, lu_baseline=args.lu)
    rows = bench.run_file_experiment(cfg)
    _summary(rows)
    path = bench.write_results(rows, cfg.out_dir, "files")
    print(f"wrote {path} ({len(rows)} rows)")
    return 0


def cmd_fetch(args) -> int:
    for name in args.names:
        path = datasets.fetch(name, args.dir)
        print(f"{name}: {path}")
    return 0


def cmd_plot(args) -> int:
    with open(args.csv, newline="", encoding="ascii") as fh:
        rows = bench.read_csv(fh)
    spec = PlotSpec(metric=args.metric, x=args.x, x_log=args.x_log, aggregate=args.aggregate,
                    methods=args.methods, policies=args.policies, title=args.title)
    out = args.output or os.path.splitext(args.csv)[0] + f"_{args.metric}.svg"
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(emit_plot(rows, spec))
    print(f"wrote {out}")
    return 0


COMMANDS = {"solve": cmd_solve, "hilbert": cmd_hilbert, "random": cmd_random,
            "files": cmd_files, "fetch": cmd_fetch, "plot": cmd_plot}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except KeyboardInterrupt:
        print("error: interrupted", file=sys.stderr)
        return 130
    except Exception as exc:  # one-line reason, no traceback
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
