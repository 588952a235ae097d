"""Step policies turning a proposed update ``d`` into the next iterate.

``classic``
    ``x + d`` with the method's own residual recurrence.
``linesearch``
    ``x + alpha d`` with ``alpha = r.w / ||w||^2`` and ``w = A d``, the
    minimiser of ``||r - alpha w||``.
``twodim``
    the minimiser of ``||b - A y||`` over ``y`` in ``span{x, d}``, found from
    the 2x2 normal equations with a truncated least-squares solve.

Both stabilised policies keep the residual norm non-increasing.  In the
default ``shadow`` coupling the candidate is also compared against the
classical iterate by true residual, so the result is never worse than the
classical method's.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .linalg import EPS, LinearOperator, matvec, solve_ls_2x2

MONOTONE_SLACK = 64 * EPS

POLICIES = ("classic", "linesearch", "twodim")
COUPLINGS = ("shadow", "feedback")


@dataclass(frozen=True)
class StepPolicy:
    """Which update rule governs ``x``/``r``.

    ``recompute_period`` of ``None`` defers to
    :attr:`SolveOptions.residual_recompute_period`; ``0`` disables periodic
    recomputation.

    ``coupling`` decides what the Krylov method sees after a stabilised step.
    With ``"shadow"`` the method keeps its own classical iterate and the
    policy is applied to ``d = x_classic_next - x``, so ``alpha = 1``
    reproduces the classical iterate and no step is worse than it.  With
    ``"feedback"`` the stabilised ``x`` and ``r`` replace the method's own,
    while search directions and scalars keep their classical recurrences.
    """

    kind: str = "classic"
    recompute_period: Optional[int] = None
    ls_rel_tol: float = 1e-14
    coupling: str = "shadow"

    def __post_init__(self):
        if self.kind not in POLICIES:
            raise ValueError(f"unknown step policy {self.kind!r}; expected one of {POLICIES}")
        if self.recompute_period is not None and self.recompute_period < 0:
            raise ValueError("recompute_period must be >= 0")
        if not 0.0 < self.ls_rel_tol < 1.0:
            raise ValueError("ls_rel_tol must lie in (0, 1)")
        if self.coupling not in COUPLINGS:
            raise ValueError(f"unknown coupling {self.coupling!r}; expected one of {COUPLINGS}")

    @property
    def stabilized(self) -> bool:
        return self.kind != "classic"

    def __str__(self) -> str:
        return self.kind


CLASSIC = StepPolicy("classic")
LINESEARCH = StepPolicy("linesearch")
TWODIM = StepPolicy("twodim")


def as_policy(p) -> StepPolicy:
    if isinstance(p, StepPolicy):
        return p
    return StepPolicy(str(p).lower())


@dataclass
class StepOutcome:
    x_next: np.ndarray
    r_next: np.ndarray
    coef: object
    fallback_taken: bool = False
    recomputed: bool = False
    # the true residual at a recomputation point rose, so x and r were kept
    rejected: bool = False
    # A @ x_next as maintained by the two-dimensional policy
    ax_next: Optional[np.ndarray] = None
    # ||(b - A x_next) - r_recurrence|| measured when the true residual was formed
    drift: float = math.nan
    # norm recorded in the residual history; differs from ||r_next|| only for
    # classic steps on recomputation iterations
    report_norm: float = math.nan


def is_due(iteration: int, period: Optional[int]) -> bool:
    return bool(period) and (iteration + 1) % period == 0


def _finite(v: np.ndarray) -> bool:
    return bool(np.all(np.isfinite(v)))


def linesearch_alpha(r: np.ndarray, w: np.ndarray) -> float:
    """``r.w / ||w||^2``, or 0 when ``||w||^2`` is zero or not finite."""
    ww = float(w @ w)
    if not (ww > 0.0 and math.isfinite(ww)):
        return 0.0
    alpha = float(r @ w) / ww
    return alpha if math.isfinite(alpha) else 0.0


def _refresh(out: StepOutcome, x, r, ax_prev, r_prev_norm: float, a: LinearOperator, b: np.ndarray) -> None:
    """Replace the recurrence residual by ``b - A x_next``.

    If the true residual exceeds ``||r_prev|| (1 + 64 eps)`` the step is
    rejected and ``x``/``r`` are kept.  Without this, rounding in ``A d`` for
    very long updates lets the true residual climb while the recurrence keeps
    falling, and the norm guarantee would hold only on paper.
    """
    ax = matvec(a, out.x_next)
    r_true = b - ax
    out.drift = float(np.linalg.norm(r_true - out.r_next))
    out.recomputed = True
    if _finite(r_true) and float(np.linalg.norm(r_true)) <= r_prev_norm * (1.0 + MONOTONE_SLACK):
        out.r_next = r_true
        out.ax_next = ax
    else:
        out.x_next, out.r_next, out.ax_next = x, r, ax_prev
        out.rejected = True


def apply_classic_step(x, r, d, r_classic, a: LinearOperator, b, iteration: int, period) -> StepOutcome:
    """``x + d`` with the method's residual.

    On recomputation iterations the true residual norm goes into the history;
    the recurrence handed back to the method is left alone so the classical
    behaviour, divergence included, is reproduced exactly.
    """
    x_next = x + d
    out = StepOutcome(x_next, r_classic, 1.0)
    if is_due(iteration, period) and _finite(x_next):
        r_true = b - matvec(a, x_next)
        out.recomputed = True
        out.drift = float(np.linalg.norm(r_true - r_classic))
        out.report_norm = float(np.linalg.norm(r_true))
    else:
        out.report_norm = float(np.linalg.norm(r_classic))
    return out


def apply_linesearch_step(x, r, d, a: LinearOperator, b, iteration: int, period,
                          w: Optional[np.ndarray] = None) -> StepOutcome:
    """One safeguarded step along ``d``.

    ``r_next = r - alpha w``; on recomputation iterations, and whenever alpha
    was zeroed, ``b - A x_next`` is used instead and the step is rejected if
    that residual is larger than ``r`` (see :func:`_refresh`).
    A non-finite ``d`` leaves ``x`` and ``r`` untouched.
    """
    r_norm = float(np.linalg.norm(r))
    if not _finite(d):
        return StepOutcome(x, r, 0.0, fallback_taken=True, report_norm=r_norm)
    if w is None:
        w = matvec(a, d)
    alpha = linesearch_alpha(r, w)
    if alpha == 0.0:
        # 0 * inf would poison the update; the step is skipped outright
        out = StepOutcome(x.copy(), r, 0.0)
    else:
        out = StepOutcome(x + alpha * d, r - alpha * w, alpha)
    if alpha == 0.0 or is_due(iteration, period):
        _refresh(out, x, r, None, r_norm, a, b)
    out.report_norm = float(np.linalg.norm(out.r_next))
    return out


def twodim_coeffs(a: LinearOperator, x, d, b, ls_rel_tol: float = 1e-14,
                  ax: Optional[np.ndarray] = None, w: Optional[np.ndarray] = None) -> np.ndarray:
    """Coefficients ``c`` minimising ``||b - A (c0 x + c1 d)||``.

    ``ax`` and ``w`` may carry precomputed ``A x`` and ``A d``.
    """
    u = matvec(a, x) if ax is None else ax
    w = matvec(a, d) if w is None else w
    uw = float(u @ w)
    g = np.array([[float(u @ u), uw], [uw, float(w @ w)]])
    h = np.array([float(u @ b), float(w @ b)])
    return solve_ls_2x2(g, h, ls_rel_tol)


def apply_twodim_step(x, r, d, a: LinearOperator, b, iteration: int, period,
                      ls_rel_tol: float = 1e-14, ax: Optional[np.ndarray] = None) -> StepOutcome:
    """Two-dimensional minimisation over ``span{x, d}``.

    ``r`` must equal ``b - ax``. The candidate is rejected in favour of the
    plain line search whenever it would raise the residual norm.
    """
    r_norm = float(np.linalg.norm(r))
    if ax is None:
        ax = b - r
    if not _finite(d):
        return StepOutcome(x, r, np.zeros(2), fallback_taken=True, ax_next=ax, report_norm=r_norm)
    w = matvec(a, d)
    if not _finite(w):
        out = apply_linesearch_step(x, r, d, a, b, iteration, period, w=w)
        out.fallback_taken = True
        out.ax_next = ax  # alpha is 0, so x is unchanged
        out.coef = np.array([1.0, out.coef])
        return out
    c = twodim_coeffs(a, x, d, b, ls_rel_tol, ax=ax, w=w)
    ax_c = c[0] * ax + c[1] * w
    r_c = b - ax_c
    if _finite(r_c) and float(np.linalg.norm(r_c)) <= r_norm * (1.0 + MONOTONE_SLACK):
        out = StepOutcome(c[0] * x + c[1] * d, r_c, c, ax_next=ax_c)
    else:
        alpha = linesearch_alpha(r, w)
        out = StepOutcome(x + alpha * d, r - alpha * w, np.array([1.0, alpha]),
                          fallback_taken=True, ax_next=ax + alpha * w)
    if is_due(iteration, period):
        _refresh(out, x, r, ax, r_norm, a, b)
    out.report_norm = float(np.linalg.norm(out.r_next))
    return out


def apply_shadow_step(x, r, d, x_classic, a: LinearOperator, b, kind: str,
                      ls_rel_tol: float = 1e-14, ax: Optional[np.ndarray] = None) -> StepOutcome:
    """Stabilised step against a classical iterate running alongside.

    ``d = x_classic - x``.  The policy's candidate (``x + alpha d`` or the
    two-dimensional minimiser) and ``x_classic`` itself are both scored by
    their true residuals ``b - A y``; the smallest wins, and if neither beats
    ``r`` the step is rejected.  The recorded residual is therefore exact,
    non-increasing, and never above the classical method's own.
    """
    r_norm = float(np.linalg.norm(r))
    if ax is None:
        ax = matvec(a, x)
    keep = StepOutcome(x, r, 0.0, ax_next=ax, rejected=True, report_norm=r_norm)
    best, best_norm = keep, r_norm
    if _finite(d):
        w = matvec(a, d)
        if kind == "twodim":
            c = twodim_coeffs(a, x, d, b, ls_rel_tol, ax=ax, w=w)
            x_p, coef = c[0] * x + c[1] * d, c
        else:
            alpha = linesearch_alpha(r, w)
            x_p, coef = x + alpha * d, alpha
        candidates = [(x_p, coef, False)]
        if _finite(x_classic):
            candidates.append((x_classic, 1.0, True))
        for y, coef, is_classic in candidates:
            ay = matvec(a, y)
            ry = b - ay
            norm = float(np.linalg.norm(ry))
            if _finite(ry) and norm < best_norm:
                best = StepOutcome(y, ry, coef, fallback_taken=is_classic, recomputed=True,
                                   ax_next=ay, drift=0.0, report_norm=norm)
                best_norm = norm
    return best


class Stepper:
    """Per-solve driver holding the state a policy carries between steps."""

    def __init__(self, policy: StepPolicy, a: LinearOperator, b: np.ndarray, x0: np.ndarray, period):
        self.policy = policy
        self.a = a
        self.b = b
        self.period = period
        self.ax = matvec(a, x0) if policy.stabilized else None
        self.fallbacks = 0
        self.rejected = 0

    def initial_residual(self, x0: np.ndarray) -> np.ndarray:
        if self.ax is not None:
            return self.b - self.ax
        return self.b - matvec(self.a, x0)

    def step(self, x, r, d, classic_residual, iteration: int, x_classic=None) -> StepOutcome:
        """``x_classic`` is given in shadow coupling; ``d`` is then ``x_classic - x``."""
        kind = self.policy.kind
        if x_classic is not None:
            out = apply_shadow_step(x, r, d, x_classic, self.a, self.b, kind,
                                    self.policy.ls_rel_tol, ax=self.ax)
            self.ax = out.ax_next
        elif kind == "classic":
            return apply_classic_step(x, r, d, classic_residual(), self.a, self.b, iteration, self.period)
        elif kind == "linesearch":
            out = apply_linesearch_step(x, r, d, self.a, self.b, iteration, self.period)
        else:
            out = apply_twodim_step(x, r, d, self.a, self.b, iteration, self.period,
                                    self.policy.ls_rel_tol, ax=self.ax)
            self.ax = out.ax_next
        self.rejected += out.rejected
        self.fallbacks += out.fallback_taken
        return out
