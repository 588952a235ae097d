"""Experiment harness: Hilbert sweeps, condition sweeps and file runs.

Every run is a pure function of the configuration.  The right-hand side for
trial ``t`` on matrix instance ``k`` comes from the stream
``split(base_seed, t, k)``, shared by all methods and policies so that their
results are paired.
"""

from __future__ import annotations

import csv
import io
import math
import os
import time
from dataclasses import dataclass, field, fields, replace
from typing import Iterable, Optional, Sequence, TextIO

import numpy as np

from .krylov import METHODS, SolveOptions, krylov_solve, make_preconditioner
from .linalg import SingularMatrixError, as_operator, dense_solve
from .matgen import RandomMatrixSpec, hilbert, random_rhs, random_symmetric_cond
from .mmio import read_matrix_market
from .stabilize import POLICIES, StepPolicy

FAMILIES = ("hilbert", "random", "file")
CSV_HEADER = ("family,n,cond,method,policy,seed,solution_norm,residual_norm,"
              "iterations,termination,elapsed_s,fallbacks")
LU_METHOD = "lu"
LU_POLICY = "direct"
AGGREGATES = ("mean", "median")

DEFAULT_HILBERT_N = tuple(range(1, 21)) + (50, 100, 200, 300, 500)
DEFAULT_RANDOM_N = 200
DEFAULT_CONDS = (1e2, 1e6, 1e10, 1e13)


def split(base_seed: int, trial: int, cell: int) -> int:
    """Seed for trial ``trial`` of matrix instance ``cell``.

    A 64-bit word drawn from ``SeedSequence([base_seed, trial, cell])``;
    distinct triples give distinct entropy pools.
    """
    ss = np.random.SeedSequence([int(base_seed), int(trial), int(cell)])
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class ExperimentConfig:
    family: str
    n_values: tuple = ()
    cond_values: tuple = ()
    files: tuple = ()
    random_n: int = DEFAULT_RANDOM_N
    definiteness: str = "spd"
    spacing: str = "log"
    trials: int = 10
    base_seed: int = 0
    methods: tuple = METHODS
    policies: tuple = POLICIES
    rtol: float = 1e-8
    atol: float = 0.0
    maxiter: Optional[int] = None
    preconditioner: Optional[str] = None
    check_invariants: bool = False
    lu_baseline: bool = False
    # wall-clock times make reruns differ; off by default
    record_timing: bool = False
    out_dir: str = "results"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.methods:
            raise ValueError("methods list is empty")
        if not self.policies:
            raise ValueError("policies list is empty")
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}")
        for p in self.policies:
            StepPolicy(p)
        if self.family == "hilbert" and not self.n_values:
            raise ValueError("hilbert sweep needs n_values")
        if self.family == "random" and not self.cond_values:
            raise ValueError("random sweep needs cond_values")
        if self.family == "file" and not self.files:
            raise ValueError("file experiment needs at least one path")

    def solve_options(self, policy: str) -> dict:
        return dict(rtol=self.rtol, atol=self.atol, maxiter=self.maxiter,
                    policy=StepPolicy(policy), invariant_checks=self.check_invariants)


@dataclass(frozen=True)
class ResultRow:
    family: str
    n: int
    cond: float
    method: str
    policy: str
    seed: str
    solution_norm: float
    residual_norm: float
    iterations: float
    termination: str
    elapsed_s: float
    fallbacks: float

    @property
    def is_aggregate(self) -> bool:
        return self.seed in AGGREGATES


def default_hilbert_config(**overrides) -> ExperimentConfig:
    return replace(ExperimentConfig("hilbert", n_values=DEFAULT_HILBERT_N), **overrides)


def default_random_config(**overrides) -> ExperimentConfig:
    return replace(ExperimentConfig("random", cond_values=DEFAULT_CONDS), **overrides)


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------


def _run_cell(cfg: ExperimentConfig, a, b, family: str, n: int, cond: float, seed: int) -> dict:
    """All method x policy runs for one (matrix, b); keyed by (method, policy)."""
    out = {}
    precond = make_preconditioner(cfg.preconditioner, a)
    for method in cfg.methods:
        for policy in cfg.policies:
            rep = krylov_solve(a, b, method, SolveOptions(preconditioner=precond,
                                                          **cfg.solve_options(policy)))
            if cfg.check_invariants and rep.invariant_violations:
                raise AssertionError(f"{method}/{policy} n={n} seed={seed}: "
                                     f"{rep.invariant_violations[0]}")
            out[(method, policy)] = ResultRow(
                family, n, cond, method, policy, str(seed),
                rep.solution_norm, rep.final_true_residual, rep.iterations,
                rep.termination, rep.elapsed if cfg.record_timing else math.nan,
                rep.fallbacks,
            )
    if cfg.lu_baseline:
        out[(LU_METHOD, LU_POLICY)] = _lu_row(a, b, family, n, cond, seed, cfg.record_timing)
    return out


def _lu_row(a, b, family, n, cond, seed, record_timing) -> ResultRow:
    op = as_operator(a)
    dense = op.to_dense()
    t0 = time.perf_counter()
    try:
        x = dense_solve(dense, b)
        res = float(np.linalg.norm(b - op.matvec(x)))
        xn = float(np.linalg.norm(x))
        term = "converged" if math.isfinite(res) and math.isfinite(xn) else "breakdown"
    except SingularMatrixError:
        xn = res = math.inf
        term = "breakdown"
    elapsed = time.perf_counter() - t0 if record_timing else math.nan
    return ResultRow(family, n, cond, LU_METHOD, LU_POLICY, str(seed), xn, res, 0, term, elapsed, 0)


def _keys(cfg: ExperimentConfig):
    keys = [(m, p) for m in cfg.methods for p in cfg.policies]
    if cfg.lu_baseline:
        keys.append((LU_METHOD, LU_POLICY))
    return keys


def _assemble(cfg, instances) -> list[ResultRow]:
    """Order rows as instance, method, policy, trial; append mean and median rows."""
    rows = []
    for cells in instances:
        for key in _keys(cfg):
            raw = [cell[key] for cell in cells]
            rows.extend(raw)
            rows.extend(aggregate(raw))
    return rows


def aggregate(raw: Sequence[ResultRow]) -> list[ResultRow]:
    """Mean and median rows over trials of one (instance, method, policy)."""
    first = raw[0]
    out = []
    for kind, fn in (("mean", np.mean), ("median", np.median)):
        def agg(attr):
            return float(fn(np.array([getattr(r, attr) for r in raw], dtype=np.float64)))
        out.append(ResultRow(
            first.family, first.n, first.cond, first.method, first.policy, kind,
            agg("solution_norm"), agg("residual_norm"), agg("iterations"), "aggregate",
            agg("elapsed_s"), agg("fallbacks"),
        ))
    return out


def run_hilbert_sweep(cfg: ExperimentConfig) -> list[ResultRow]:
    if cfg.family != "hilbert":
        raise ValueError("run_hilbert_sweep needs family='hilbert'")
    instances = []
    for k, n in enumerate(cfg.n_values):
        a = hilbert(n)
        cells = []
        for t in range(cfg.trials):
            seed = split(cfg.base_seed, t, k)
            cells.append(_run_cell(cfg, a, random_rhs(n, seed), "hilbert", n, math.nan, seed))
        instances.append(cells)
    return _assemble(cfg, instances)


def run_random_sweep(cfg: ExperimentConfig) -> list[ResultRow]:
    if cfg.family != "random":
        raise ValueError("run_random_sweep needs family='random'")
    n = cfg.random_n
    instances = []
    for k, c in enumerate(cfg.cond_values):
        cells = []
        for t in range(cfg.trials):
            seed = split(cfg.base_seed, t, k)
            spec = RandomMatrixSpec(n, float(c), seed, cfg.definiteness, cfg.spacing)
            a = random_symmetric_cond(spec)
            # b gets its own stream, distinct from the matrix's
            b = random_rhs(n, [seed, 1])
            cells.append(_run_cell(cfg, a, b, "random", n, float(c), seed))
        instances.append(cells)
    return _assemble(cfg, instances)


class FileExperimentError(RuntimeError):
    pass


def run_file_experiment(cfg: ExperimentConfig) -> list[ResultRow]:
    if cfg.family != "file":
        raise ValueError("run_file_experiment needs family='file'")
    instances = []
    for k, path in enumerate(cfg.files):
        try:
            a = read_matrix_market(str(path))
        except (OSError, ValueError) as exc:
            raise FileExperimentError(f"{path}: {exc}") from exc
        if a.rows != a.cols:
            raise FileExperimentError(f"{path}: matrix is {a.rows}x{a.cols}, not square")
        n = a.rows
        cells = []
        for t in range(cfg.trials):
            seed = split(cfg.base_seed, t, k)
            cells.append(_run_cell(cfg, a, random_rhs(n, seed), "file", n, math.nan, seed))
        instances.append(cells)
    return _assemble(cfg, instances)


def run_experiment(cfg: ExperimentConfig) -> list[ResultRow]:
    return {"hilbert": run_hilbert_sweep, "random": run_random_sweep,
            "file": run_file_experiment}[cfg.family](cfg)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if v.is_integer() and abs(v) < 2**53:
        return str(int(v))
    return f"{v:.17g}"


def emit_csv(rows: Iterable[ResultRow], sink: TextIO) -> None:
    """Write ``rows`` in the given order under the fixed header."""
    sink.write(CSV_HEADER + "\n")
    for r in rows:
        sink.write(",".join(_fmt(getattr(r, f.name)) for f in fields(ResultRow)) + "\n")


def csv_text(rows: Iterable[ResultRow]) -> str:
    buf = io.StringIO()
    emit_csv(rows, buf)
    return buf.getvalue()


def read_csv(source: TextIO) -> list[ResultRow]:
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None or ",".join(header) != CSV_HEADER:
        raise ValueError(f"unexpected CSV header {header!r}")
    rows = []
    for rec in reader:
        (family, n, cond, method, policy, seed, xn, rn, it, term, el, fb) = rec
        rows.append(ResultRow(family, int(n), float(cond), method, policy, seed, float(xn),
                              float(rn), float(it), term, float(el), float(fb)))
    return rows


def write_results(rows: Sequence[ResultRow], out_dir: str, name: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"{name}.csv")
    with open(path, "w", newline="", encoding="ascii") as fh:
        emit_csv(rows, fh)
    return path
