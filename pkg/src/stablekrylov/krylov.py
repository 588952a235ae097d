"""Krylov solvers written as step iterators.

Each method object proposes, per iteration, the update ``d`` that the
unmodified method would add to the current iterate.  :func:`krylov_solve`
hands ``d`` to a step policy (:mod:`stablekrylov.stabilize`).

Under the default ``shadow`` coupling the method runs its classical
recurrence untouched and the policy steps a separate stabilised iterate
toward each classical iterate.  Under ``feedback`` coupling the stabilised
``x``/``r`` are fed back into the method; auxiliary vectors (search
directions, shadow residuals, scalars) keep their classical recurrences.

For GMRES and LGMRES one iteration is a full restart cycle and ``d`` is the
cycle's correction.  BiCGSTAB, CGS and TFQMR return the sum of both half
steps.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .linalg import LinearOperator, as_operator, matvec, matvec_transpose, DimensionError
from .stabilize import CLASSIC, MONOTONE_SLACK, StepPolicy, Stepper, as_policy

BREAKDOWN_FLOOR = 1e-300
STAGNATION_WINDOW = 200
STAGNATION_RTOL = 1e-15
DRIFT_TOL = 1e-8

METHODS = ("cg", "bicg", "bicgstab", "cgs", "gmres", "lgmres", "tfqmr")
CYCLE_METHODS = ("gmres", "lgmres")


class Breakdown(ArithmeticError):
    """A method-internal divisor vanished or became non-finite."""


def _divisor(value: float, name: str) -> float:
    if not (abs(value) >= BREAKDOWN_FLOOR and math.isfinite(value)):
        raise Breakdown(f"{name} = {value!r}")
    return value


# ---------------------------------------------------------------------------
# Preconditioners
# ---------------------------------------------------------------------------


class Preconditioner:
    """Applies ``M^{-1}``. The base class is the identity."""

    description = "identity"

    def apply(self, v: np.ndarray) -> np.ndarray:
        return v

    def apply_transpose(self, v: np.ndarray) -> np.ndarray:
        return self.apply(v)

    def __call__(self, v):
        return self.apply(v)

    def __repr__(self):
        return f"<Preconditioner {self.description}>"


IDENTITY = Preconditioner()


class JacobiPreconditioner(Preconditioner):
    description = "jacobi"

    def __init__(self, diag: np.ndarray):
        d = np.array(diag, dtype=np.float64)
        d[d == 0.0] = 1.0
        self.inv_diag = 1.0 / d

    def apply(self, v):
        return v * self.inv_diag


def jacobi_preconditioner(a) -> JacobiPreconditioner:
    a = as_operator(a)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"Jacobi preconditioner needs a square operator, got {a.shape}")
    return JacobiPreconditioner(a.diagonal())


def make_preconditioner(name: Optional[str], a) -> Preconditioner:
    if name in (None, "none", "identity"):
        return IDENTITY
    if name == "jacobi":
        return jacobi_preconditioner(a)
    raise ValueError(f"unknown preconditioner {name!r}")


# ---------------------------------------------------------------------------
# Options and report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Method:
    name: str
    restart: int = 20
    inner: int = 30
    augment: int = 3

    def __post_init__(self):
        object.__setattr__(self, "name", self.name.lower())
        if self.name not in METHODS:
            raise ValueError(f"unknown method {self.name!r}; expected one of {METHODS}")
        if self.restart < 1 or self.inner < 1:
            raise ValueError("restart and inner lengths must be >= 1")
        if self.augment < 0:
            raise ValueError("augmentation count must be >= 0")

    def __str__(self):
        return self.name


def as_method(m) -> Method:
    return m if isinstance(m, Method) else Method(str(m))


@dataclass
class SolveOptions:
    rtol: float = 1e-8
    atol: float = 0.0
    maxiter: Optional[int] = None
    x0: Optional[np.ndarray] = None
    preconditioner: Optional[Preconditioner] = None
    policy: StepPolicy = CLASSIC
    residual_recompute_period: Optional[int] = 50
    invariant_checks: bool = False
    callback: Optional[Callable[[np.ndarray], None]] = None

    def validate(self):
        if self.rtol < 0 or self.atol < 0:
            raise ValueError("rtol and atol must be non-negative")
        if self.rtol == 0 and self.atol == 0:
            raise ValueError("rtol and atol cannot both be zero")
        if self.maxiter is not None and self.maxiter < 1:
            raise ValueError("maxiter must be >= 1")


TERMINATIONS = ("converged", "maxiter", "breakdown", "stagnation")


@dataclass
class SolveReport:
    x: np.ndarray
    residual_history: np.ndarray
    iterations: int
    termination: str
    elapsed: float
    final_true_residual: float
    method: str = ""
    policy: str = ""
    fallbacks: int = 0
    rejected_steps: int = 0
    breakdown_reason: str = ""
    invariant_violations: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.termination == "converged"

    @property
    def solution_norm(self) -> float:
        return float(np.linalg.norm(self.x))


# ---------------------------------------------------------------------------
# Methods
# ---------------------------------------------------------------------------


class _Iteration:
    """Workspace of one classical method.

    ``direction()`` advances the auxiliary recurrences and returns ``d``;
    ``classic_residual()`` gives the residual the unmodified method would
    carry for ``x + d``; ``accept(x, r)`` installs the iterate actually taken.
    """

    def __init__(self, a: LinearOperator, b, x, r, m: Preconditioner, method: Method, stop_tol: float):
        self.a, self.b, self.m, self.method = a, b, m, method
        self.x, self.r = x, r
        self.stop_tol = stop_tol
        self._r_classic = None

    def direction(self) -> np.ndarray:
        raise NotImplementedError

    def classic_residual(self) -> np.ndarray:
        return self._r_classic

    def accept(self, x, r) -> None:
        self.x, self.r = x, r


class _CG(_Iteration):
    def __init__(self, *args):
        super().__init__(*args)
        z = self.m.apply(self.r)
        self.p = z.copy()
        self.rho = float(self.r @ z)

    def direction(self):
        q = matvec(self.a, self.p)
        pq = _divisor(float(self.p @ q), "p.Ap")
        alpha = self.rho / pq
        self._r_classic = self.r - alpha * q
        return alpha * self.p

    def accept(self, x, r):
        super().accept(x, r)
        z = self.m.apply(r)
        rho = float(r @ z)
        beta = rho / _divisor(self.rho, "rho")
        self.p = z + beta * self.p
        self.rho = rho


class _BiCG(_Iteration):
    def __init__(self, *args):
        super().__init__(*args)
        self.rt = self.r.copy()
        self.p = self.pt = None
        self.rho_prev = None

    def direction(self):
        z = self.m.apply(self.r)
        zt = self.m.apply_transpose(self.rt)
        rho = _divisor(float(self.rt @ z), "rho")
        if self.p is None:
            self.p, self.pt = z.copy(), zt.copy()
        else:
            beta = rho / self.rho_prev
            self.p = z + beta * self.p
            self.pt = zt + beta * self.pt
        q = matvec(self.a, self.p)
        qt = matvec_transpose(self.a, self.pt)
        alpha = rho / _divisor(float(self.pt @ q), "pt.Ap")
        self.rho_prev = rho
        self._r_classic = self.r - alpha * q
        self._rt_next = self.rt - alpha * qt
        return alpha * self.p

    def accept(self, x, r):
        super().accept(x, r)
        self.rt = self._rt_next


class _CGS(_Iteration):
    def __init__(self, *args):
        super().__init__(*args)
        self.rt = self.r.copy()
        self.p = self.q = None
        self.rho_prev = None

    def direction(self):
        rho = _divisor(float(self.rt @ self.r), "rho")
        if self.p is None:
            u = self.r.copy()
            self.p = u.copy()
        else:
            beta = rho / self.rho_prev
            u = self.r + beta * self.q
            self.p = u + beta * (self.q + beta * self.p)
        phat = self.m.apply(self.p)
        vhat = matvec(self.a, phat)
        alpha = rho / _divisor(float(self.rt @ vhat), "rt.v")
        self.q = u - alpha * vhat
        uhat = self.m.apply(u + self.q)
        qhat = matvec(self.a, uhat)
        self.rho_prev = rho
        self._r_classic = self.r - alpha * qhat
        return alpha * uhat


class _BiCGSTAB(_Iteration):
    def __init__(self, *args):
        super().__init__(*args)
        self.rt = self.r.copy()
        self.p = self.v = None
        self.rho_prev = self.alpha = self.omega = None

    def direction(self):
        rho = _divisor(float(self.rt @ self.r), "rho")
        if self.p is None or self.omega is None:
            self.p = self.r.copy()
        else:
            beta = (rho / self.rho_prev) * (self.alpha / self.omega)
            self.p = self.r + beta * (self.p - self.omega * self.v)
        phat = self.m.apply(self.p)
        self.v = matvec(self.a, phat)
        alpha = rho / _divisor(float(self.rt @ self.v), "rt.v")
        s = self.r - alpha * self.v
        self.rho_prev, self.alpha = rho, alpha
        if float(np.linalg.norm(s)) <= self.stop_tol:
            # half step already meets the tolerance; restart the p recurrence
            # if the iteration has to continue
            self.omega = None
            self._r_classic = s
            return alpha * phat
        shat = self.m.apply(s)
        t = matvec(self.a, shat)
        tt = _divisor(float(t @ t), "t.t")
        self.omega = _divisor(float(t @ s) / tt, "omega")
        self._r_classic = s - self.omega * t
        return alpha * phat + self.omega * shat


class _TFQMR(_Iteration):
    """Right-preconditioned TFQMR; two quasi-minimal half steps per iteration.

    The recurrences never read ``x`` or ``r``, so the policy's choice only
    shapes the sequence of iterates.
    """

    def __init__(self, *args):
        super().__init__(*args)
        r0 = self.r
        self.u = r0.copy()
        self.w = r0.copy()
        self.rstar = r0.copy()
        self.v = matvec(self.a, self.m.apply(r0))
        self.uhat = self.v.copy()
        self.dv = np.zeros_like(r0)
        self.theta = self.eta = 0.0
        self.tau = float(np.linalg.norm(r0))
        self.rho = float(self.rstar @ r0)
        self.k = 0

    def _half_step(self):
        even = self.k % 2 == 0
        if even:
            self.alpha = self.rho / _divisor(float(self.rstar @ self.v), "rstar.v")
            self.u_next = self.u - self.alpha * self.v
        self.w = self.w - self.alpha * self.uhat
        self.dv = self.u + (self.theta ** 2 / self.alpha) * self.eta * self.dv
        self.theta = float(np.linalg.norm(self.w)) / _divisor(self.tau, "tau")
        c = 1.0 / math.sqrt(1.0 + self.theta ** 2)
        self.tau *= self.theta * c
        self.eta = c * c * self.alpha
        step = self.eta * self.dv
        if not even:
            rho = float(self.rstar @ self.w)
            beta = rho / _divisor(self.rho_last, "rho")
            self.u = self.w + beta * self.u
            self.v = beta * self.uhat + beta ** 2 * self.v
            self.uhat = matvec(self.a, self.m.apply(self.u))
            self.v = self.v + self.uhat
            self.rho = rho
        else:
            self.uhat = matvec(self.a, self.m.apply(self.u_next))
            self.u = self.u_next
            self.rho_last = self.rho
        self.k += 1
        return step

    def direction(self):
        y = self._half_step()
        # tau = 0 means the first half step was exact; a second would divide by it
        if self.tau != 0.0:
            y = y + self._half_step()
        d = self.m.apply(y)
        self._ad = matvec(self.a, d)
        return d

    def classic_residual(self):
        return self.r - self._ad


class _GMRES(_Iteration):
    """Restarted (flexible-form) GMRES, right preconditioned.

    Arnoldi with twice-iterated classical Gram-Schmidt builds ``A Z = V H``; Givens rotations
    track the least-squares residual so a cycle can stop early.  LGMRES
    reuses this with augmentation vectors appended to ``Z``.
    """

    def _columns(self):
        for _ in range(self.method.restart):
            yield None

    def _cycle(self, r):
        beta = float(np.linalg.norm(r))
        cols = list(self._columns())
        m = len(cols)
        V = np.zeros((m + 1, r.shape[0]))
        Z = []
        R = []  # rotated Hessenberg columns, upper triangular
        cs, sn = [], []
        g = [beta]
        V[0] = r / _divisor(beta, "||r||")
        for j, aug in enumerate(cols):
            if aug is None:
                z = self.m.apply(V[j])
                w = matvec(self.a, z)
            else:
                z, w = aug
            Z.append(z)
            # classical Gram-Schmidt applied twice
            basis = V[: j + 1]
            h = basis @ w
            w = w - h @ basis
            h2 = basis @ w
            w -= h2 @ basis
            col = (h + h2).tolist()
            h_next = float(np.linalg.norm(w))
            for i in range(j):
                hi, hi1 = col[i], col[i + 1]
                col[i] = cs[i] * hi + sn[i] * hi1
                col[i + 1] = -sn[i] * hi + cs[i] * hi1
            denom = math.hypot(col[j], h_next)
            if not math.isfinite(denom):
                raise Breakdown("non-finite Hessenberg entry")
            if denom == 0.0:
                Z.pop()
                break
            cs.append(col[j] / denom)
            sn.append(h_next / denom)
            col[j] = denom
            R.append(col)
            g.append(-sn[j] * g[j])
            g[j] = cs[j] * g[j]
            if abs(g[j + 1]) <= self.stop_tol or h_next <= BREAKDOWN_FLOOR:
                break
            V[j + 1] = w / h_next
        k = len(R)
        if k == 0:
            raise Breakdown("empty Krylov basis")
        y = [0.0] * k
        for i in range(k - 1, -1, -1):
            acc = g[i]
            for c in range(i + 1, k):
                acc -= R[c][i] * y[c]
            y[i] = acc / _divisor(R[i][i], "R diagonal")
        d = np.asarray(y) @ np.asarray(Z)
        return d, V[: k + 1], y, k

    def direction(self):
        d, *_ = self._cycle(self.r)
        self._d = d
        return d

    def classic_residual(self):
        return self.b - matvec(self.a, self.x + self._d)


class _LGMRES(_GMRES):
    def __init__(self, *args):
        super().__init__(*args)
        self.aug = []  # (z, A z) pairs, newest first

    def _columns(self):
        for _ in range(self.method.inner):
            yield None
        yield from self.aug

    def direction(self):
        d, V, _, _ = self._cycle(self.r)
        self._d = d
        dn = float(np.linalg.norm(d))
        if self.method.augment and dn > 0 and math.isfinite(dn):
            ad = matvec(self.a, d)
            self.aug.insert(0, (d / dn, ad / dn))
            del self.aug[self.method.augment:]
        return d


_ITERATIONS = {
    "cg": _CG,
    "bicg": _BiCG,
    "cgs": _CGS,
    "bicgstab": _BiCGSTAB,
    "tfqmr": _TFQMR,
    "gmres": _GMRES,
    "lgmres": _LGMRES,
}


def start_iteration(a, b, method, x0=None, preconditioner=None, stop_tol: float = 0.0) -> _Iteration:
    """Initialise a method's workspace at ``x0`` (zero by default)."""
    a = as_operator(a)
    b = np.asarray(b, dtype=np.float64)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64)
    r = b - matvec(a, x)
    method = as_method(method)
    return _ITERATIONS[method.name](a, b, x, r, preconditioner or IDENTITY, method, stop_tol)


def next_direction(it: _Iteration) -> np.ndarray:
    """Advance ``it`` one iteration and return the classical update ``d``."""
    return it.direction()


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------


def krylov_solve(a, b, method="gmres", opts: Optional[SolveOptions] = None, **kwargs) -> SolveReport:
    """Solve ``A x = b`` with ``method`` under ``opts.policy``.

    Stops when the tracked residual drops to ``max(rtol ||b||, atol)``, after
    ``maxiter`` iterations (default ``10 n``), on breakdown, or, under a
    stabilised policy, when the residual norm has been flat for 200 steps.
    In shadow coupling the tracked residual is the classical recurrence, so
    the solve stops at the same iteration as the classical method.
    """
    if opts is None:
        opts = SolveOptions(**kwargs)
    elif kwargs:
        raise TypeError("pass either opts or keyword options, not both")
    opts.validate()
    a = as_operator(a)
    b = np.asarray(b, dtype=np.float64)
    n = a.shape[0]
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"operator must be square, got {a.shape}")
    if b.shape != (n,):
        raise DimensionError(f"operator is {n}x{n} but b has shape {b.shape}")
    method = as_method(method)
    policy = as_policy(opts.policy)
    period = policy.recompute_period if policy.recompute_period is not None else opts.residual_recompute_period
    if policy.stabilized and period and method.name in CYCLE_METHODS:
        # a cycle costs restart matvecs, so checking the true residual every
        # cycle is cheap and keeps very long corrections honest
        period = 1
    maxiter = opts.maxiter if opts.maxiter is not None else 10 * n
    m = opts.preconditioner or IDENTITY

    t0 = time.perf_counter()
    b_norm = float(np.linalg.norm(b))
    stop_tol = max(opts.rtol * b_norm, opts.atol)
    x = np.zeros(n) if opts.x0 is None else np.array(opts.x0, dtype=np.float64)
    stepper = Stepper(policy, a, b, x, period)
    r = stepper.initial_residual(x)
    r_norm = float(np.linalg.norm(r))
    shadow = policy.stabilized and policy.coupling == "shadow"
    history = [r_norm]
    violations = []
    termination = "maxiter"
    reason = ""
    flat = 0
    iterations = 0

    if r_norm <= stop_tol:
        termination = "converged"
    else:
        it = _ITERATIONS[method.name](a, b, x, r, m, method, stop_tol)
        classic_ok = False
        x_c = None
        for i in range(maxiter):
            try:
                d = it.direction()
                if shadow:
                    x_c = it.x + d
                    r_c = it.classic_residual()
                    d = x_c - x
                    classic_ok = float(np.linalg.norm(r_c)) <= stop_tol
                out = stepper.step(x, r, d, it.classic_residual, i, x_classic=x_c if shadow else None)
            except Breakdown as exc:
                termination, reason = "breakdown", str(exc)
                break
            if not (np.all(np.isfinite(out.x_next)) and np.all(np.isfinite(out.r_next))):
                termination, reason = "breakdown", "non-finite iterate"
                break
            prev_norm = history[-1]
            x, r = out.x_next, out.r_next
            iterations = i + 1
            history.append(out.report_norm)
            if opts.callback is not None:
                opts.callback(x)
            if opts.invariant_checks:
                _check_step(violations, i, policy, out, prev_norm, b_norm)
            if not np.all(np.isfinite(d)):
                termination, reason = "breakdown", "non-finite direction"
                break
            r_norm = float(np.linalg.norm(r))
            # a shadowed solve stops exactly when the classical recurrence
            # does; the classical iterate is always a candidate, so the result
            # is never worse than the classical one
            if classic_ok if shadow else r_norm <= stop_tol:
                termination = "converged"
                break
            if policy.stabilized:
                flat = flat + 1 if abs(prev_norm - out.report_norm) < STAGNATION_RTOL * prev_norm else 0
                if flat >= STAGNATION_WINDOW:
                    termination = "stagnation"
                    break
            try:
                if shadow:
                    it.accept(x_c, r_c)
                else:
                    it.accept(x, r)
            except Breakdown as exc:
                termination, reason = "breakdown", str(exc)
                break
        if termination != "converged" and policy.stabilized and r_norm <= stop_tol:
            termination = "converged"

    final = float(np.linalg.norm(b - matvec(a, x)))
    return SolveReport(
        x=x,
        residual_history=np.asarray(history),
        iterations=iterations,
        termination=termination,
        elapsed=time.perf_counter() - t0,
        final_true_residual=final,
        method=method.name,
        policy=policy.kind,
        fallbacks=stepper.fallbacks,
        rejected_steps=stepper.rejected,
        breakdown_reason=reason,
        invariant_violations=violations,
    )


def _check_step(violations, i, policy, out, prev_norm, b_norm):
    if policy.stabilized and out.report_norm > prev_norm * (1.0 + MONOTONE_SLACK):
        violations.append(f"iter {i}: residual rose from {prev_norm:.17g} to {out.report_norm:.17g}")
    if out.drift > DRIFT_TOL * b_norm:
        violations.append(f"iter {i}: residual drift {out.drift:.3g} exceeds {DRIFT_TOL:g}*||b||")
