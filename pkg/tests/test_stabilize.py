import math

import numpy as np
import pytest

from stablekrylov.linalg import LinearOperator
from stablekrylov.krylov import krylov_solve
from stablekrylov.matgen import hilbert, random_rhs
from stablekrylov.stabilize import (
    CLASSIC,
    LINESEARCH,
    MONOTONE_SLACK,
    TWODIM,
    StepPolicy,
    Stepper,
    apply_classic_step,
    apply_linesearch_step,
    apply_shadow_step,
    apply_twodim_step,
    as_policy,
    is_due,
    linesearch_alpha,
    twodim_coeffs,
)

I2 = LinearOperator(np.eye(2))


def op(a):
    return LinearOperator(np.asarray(a, dtype=float))


# --- policy -----------------------------------------------------------------

def test_policy_validation():
    for bad in [dict(kind="newton"), dict(recompute_period=-1), dict(ls_rel_tol=0.0),
                dict(ls_rel_tol=1.0), dict(coupling="loose")]:
        with pytest.raises(ValueError):
            StepPolicy(**bad)
    assert not CLASSIC.stabilized and LINESEARCH.stabilized and TWODIM.stabilized
    assert as_policy("twodim") == TWODIM
    assert as_policy(LINESEARCH) is LINESEARCH


def test_is_due():
    assert [is_due(i, 3) for i in range(6)] == [False, False, True, False, False, True]
    assert not any(is_due(i, None) for i in range(10))
    assert not any(is_due(i, 0) for i in range(10))


# --- alpha ------------------------------------------------------------------

def test_alpha_examples():
    w = np.array([1.0, -2.0, 0.5])
    assert linesearch_alpha(w, w) == 1.0
    assert linesearch_alpha(np.array([1.0, 0.0]), np.array([0.0, 3.0])) == 0.0
    r, w = np.array([3.0, 4.0]), np.array([0.0, 5.0])
    alpha = linesearch_alpha(r, w)
    assert alpha == pytest.approx(0.8, abs=1e-15)
    np.testing.assert_allclose(r - alpha * w, [3.0, 0.0], atol=1e-15)


def test_alpha_example_against_grid_search():
    r, w = np.array([3.0, 4.0]), np.array([0.0, 5.0])
    ts = np.linspace(-2, 2, 400_001)
    best = ts[np.argmin([np.hypot(3.0, 4.0 - 5.0 * t) for t in ts[::100]]) * 100]
    assert abs(best - linesearch_alpha(r, w)) < 1e-3


@pytest.mark.parametrize("w", [np.zeros(3), np.array([1e-200, 0, 0]), np.array([np.inf, 0, 0]),
                               np.array([np.nan, 1.0, 0])])
def test_alpha_degenerate(w):
    assert linesearch_alpha(np.ones(3), w) == 0.0


def test_alpha_optimality_probes():
    rng = np.random.default_rng(0)
    for _ in range(100):
        r, w = rng.standard_normal(8), rng.standard_normal(8) * 10.0 ** rng.uniform(-3, 3)
        alpha = linesearch_alpha(r, w)
        best = np.linalg.norm(r - alpha * w)
        span = 10 * abs(alpha) + 1
        t = rng.uniform(-span, span, 1000)
        probes = np.linalg.norm(r[None, :] - t[:, None] * w[None, :], axis=1)
        assert np.all(best <= probes * (1 + 1e-14))


# --- line search ------------------------------------------------------------

def test_linesearch_exact_error_direction():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((5, 5)) + 5 * np.eye(5)
    b = rng.standard_normal(5)
    x = rng.standard_normal(5)
    r = b - a @ x
    d = np.linalg.solve(a, b) - x
    out = apply_linesearch_step(x, r, d, op(a), b, 0, None)
    assert out.coef == pytest.approx(1.0, rel=1e-12)
    assert np.linalg.norm(out.r_next) <= 1e-12 * np.linalg.norm(b)


def test_linesearch_zero_direction_keeps_state():
    x, b = np.array([1.0, 2.0]), np.array([3.0, 1.0])
    r = b - x
    out = apply_linesearch_step(x, r, np.zeros(2), I2, b, 0, None)
    assert out.coef == 0.0
    np.testing.assert_array_equal(out.x_next, x)
    np.testing.assert_array_equal(out.r_next, r)


def test_linesearch_nonfinite_direction():
    x, r = np.zeros(2), np.ones(2)
    out = apply_linesearch_step(x, r, np.array([np.nan, 1.0]), I2, r, 0, None)
    assert out.fallback_taken
    np.testing.assert_array_equal(out.x_next, x)
    np.testing.assert_array_equal(out.r_next, r)


def test_linesearch_recomputes_on_period():
    a = op(hilbert(4))
    b = np.ones(4)
    x, r = np.zeros(4), b.copy()
    d = np.array([1.0, -1.0, 0.5, 2.0])
    plain = apply_linesearch_step(x, r, d, a, b, 0, 2)
    due = apply_linesearch_step(x, r, d, a, b, 1, 2)
    assert not plain.recomputed and due.recomputed
    np.testing.assert_array_equal(due.r_next, b - a.matvec(due.x_next))


def test_linesearch_huge_direction_stays_monotone():
    b = np.array([1.0, 0.0])
    x, r = np.zeros(2), b.copy()
    out = apply_linesearch_step(x, r, np.array([1e20, 1.0]), I2, b, 0, 1)
    assert out.recomputed
    assert float(np.linalg.norm(out.r_next)) <= float(np.linalg.norm(r)) * (1 + MONOTONE_SLACK)


def test_linesearch_monotone_on_hilbert50_cg_stream():
    a = hilbert(50)
    b = random_rhs(50, 11)
    rep = krylov_solve(a, b, "cg", policy=LINESEARCH, maxiter=400, invariant_checks=True)
    h = rep.residual_history
    assert np.all(h[1:] <= h[:-1] * (1 + MONOTONE_SLACK))
    assert not rep.invariant_violations


def test_linesearch_feedback_monotone_on_hilbert50_cg_stream():
    a = hilbert(50)
    b = random_rhs(50, 11)
    rep = krylov_solve(a, b, "cg", policy=StepPolicy("linesearch", coupling="feedback"),
                       maxiter=400, invariant_checks=True)
    h = rep.residual_history
    assert np.all(h[1:] <= h[:-1] * (1 + MONOTONE_SLACK))


# --- two-dimensional --------------------------------------------------------

def test_twodim_orthonormal_columns():
    b = np.array([2.0, 3.0])
    x, d = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    c = twodim_coeffs(I2, x, d, b)
    np.testing.assert_allclose(c, [2.0, 3.0], atol=1e-15)
    out = apply_twodim_step(x, b - x, d, I2, b, 0, None)
    np.testing.assert_allclose(out.x_next, b, atol=1e-15)
    assert np.linalg.norm(out.r_next) <= 1e-15


def test_twodim_zero_direction():
    a = op([[2.0, 1.0], [1.0, 3.0]])
    x, b = np.array([1.0, 2.0]), np.array([1.0, -1.0])
    u = a.matvec(x)
    c = twodim_coeffs(a, x, np.zeros(2), b)
    np.testing.assert_allclose(c, [(u @ b) / (u @ u), 0.0], rtol=1e-14, atol=1e-300)


def test_twodim_parallel_columns():
    x = d = np.array([1.0, 1.0])
    b = np.array([4.0, 0.0])
    c = twodim_coeffs(I2, x, d, b)
    np.testing.assert_allclose(c[0] * x + c[1] * d, [2.0, 2.0], rtol=1e-14)
    assert np.linalg.norm(b - (c[0] * x + c[1] * d)) == pytest.approx(2 * math.sqrt(2), rel=1e-14)


def test_twodim_zero_gram():
    np.testing.assert_array_equal(twodim_coeffs(I2, np.zeros(2), np.zeros(2), np.ones(2)), [0.0, 0.0])


def test_twodim_from_zero_along_b():
    b = np.array([0.3, -1.7])
    out = apply_twodim_step(np.zeros(2), b.copy(), b.copy(), I2, b, 0, None)
    assert out.coef[1] == pytest.approx(1.0, rel=1e-15)
    assert np.linalg.norm(out.r_next) <= 1e-16


def test_twodim_keep_x():
    # b lies along A x and d adds nothing: the Gram forces c = [1, 0]
    x = np.array([1.0, 0.0])
    b = x.copy()
    out = apply_twodim_step(x, b - x, np.array([0.0, 0.0]), I2, b, 0, None)
    np.testing.assert_allclose(out.x_next, x)
    assert np.linalg.norm(out.r_next) <= np.linalg.norm(b - x) * (1 + MONOTONE_SLACK)


def test_twodim_nonfinite_direction():
    x, b = np.zeros(2), np.ones(2)
    out = apply_twodim_step(x, b.copy(), np.array([np.inf, 0.0]), I2, b, 0, None)
    assert out.fallback_taken
    np.testing.assert_array_equal(out.x_next, x)


def _random_state(rng, n=6):
    a = rng.standard_normal((n, n)) * 10.0 ** rng.uniform(-2, 2)
    x, d, b = rng.standard_normal(n), rng.standard_normal(n), rng.standard_normal(n)
    return op(a), x, d, b


def test_dominance_over_linesearch():
    rng = np.random.default_rng(5)
    for _ in range(100):
        a, x, d, b = _random_state(rng)
        r = b - a.matvec(x)
        ls = apply_linesearch_step(x, r, d, a, b, 0, None)
        td = apply_twodim_step(x, r, d, a, b, 0, None)
        ls_true = np.linalg.norm(b - a.matvec(ls.x_next))
        td_true = np.linalg.norm(b - a.matvec(td.x_next))
        assert td_true <= ls_true + 1e-12 * np.linalg.norm(b)


def test_single_steps_are_monotone():
    rng = np.random.default_rng(6)
    for _ in range(200):
        a, x, d, b = _random_state(rng)
        r = b - a.matvec(x)
        prev = np.linalg.norm(r)
        for out in (apply_linesearch_step(x, r, d, a, b, 0, 1), apply_twodim_step(x, r, d, a, b, 0, 1)):
            assert np.linalg.norm(out.r_next) <= prev * (1 + MONOTONE_SLACK)


@pytest.mark.parametrize("d", [np.zeros(3), np.array([np.nan, 0, 0]), np.array([np.inf, -np.inf, 1]),
                               np.array([1e308, 1e308, 1e308])])
@pytest.mark.parametrize("kind", ["linesearch", "twodim"])
@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_degenerate_safety(d, kind):
    a = op(np.diag([1.0, 2.0, 3.0]))
    b = np.array([1.0, 1.0, 1.0])
    x = np.array([0.5, 0.0, 0.1])
    r = b - a.matvec(x)
    step = apply_linesearch_step if kind == "linesearch" else apply_twodim_step
    out = step(x, r, d, a, b, 0, None)
    assert np.all(np.isfinite(out.x_next)) and np.all(np.isfinite(out.r_next))
    out = apply_shadow_step(x, r, d, x + d, a, b, kind)
    assert np.all(np.isfinite(out.x_next)) and np.all(np.isfinite(out.r_next))


def test_degenerate_safety_zero_operator():
    a = op(np.zeros((3, 3)))
    b, x = np.ones(3), np.zeros(3)
    for kind in ("linesearch", "twodim"):
        step = apply_linesearch_step if kind == "linesearch" else apply_twodim_step
        out = step(x, b.copy(), np.ones(3), a, b, 0, None)
        assert np.all(np.isfinite(out.x_next)) and np.all(np.isfinite(out.r_next))


# --- classic ----------------------------------------------------------------

def test_classic_examples():
    b = np.array([1.0, 2.0])
    x = np.array([0.5, 0.5])
    out = apply_classic_step(x, b - x, np.zeros(2), b - x, I2, b, 0, None)
    np.testing.assert_array_equal(out.x_next, x)
    out = apply_classic_step(np.zeros(2), b, b, np.zeros(2), I2, b, 0, None)
    np.testing.assert_array_equal(out.x_next, b)
    assert np.linalg.norm(out.r_next) == 0.0


def test_classic_recompute_is_reporting_only():
    b = np.array([1.0, 2.0])
    fake = np.array([5.0, 5.0])
    out = apply_classic_step(np.zeros(2), b, b, fake, I2, b, 0, 1)
    assert out.r_next is fake
    assert out.recomputed and out.report_norm == 0.0
    assert out.drift == pytest.approx(np.linalg.norm(fake))


def test_classic_cgs_diverges_on_hilbert300():
    b = random_rhs(300, 0)
    rep = krylov_solve(hilbert(300), b, "cgs", policy=CLASSIC, maxiter=300)
    assert np.nanmax(np.where(np.isfinite(rep.residual_history), rep.residual_history, np.inf)) \
        > 10 * np.linalg.norm(b)


# --- shadow -----------------------------------------------------------------

def test_shadow_takes_best_candidate():
    a = op(np.diag([1.0, 4.0]))
    b = np.array([1.0, 1.0])
    x = np.zeros(2)
    r = b.copy()
    x_exact = np.array([1.0, 0.25])
    for kind in ("linesearch", "twodim"):
        out = apply_shadow_step(x, r, x_exact - x, x_exact, a, b, kind)
        assert np.linalg.norm(out.r_next) <= 1e-15
        np.testing.assert_array_equal(out.r_next, b - a.matvec(out.x_next))


def test_shadow_prefers_classic_when_better():
    a = op(np.diag([1.0, 100.0]))
    b = np.array([1.0, 1.0])
    x = np.array([0.0, 0.0])
    x_c = np.array([1.0, 0.01])
    d = np.array([1.0, 0.02])
    out = apply_shadow_step(x, b.copy(), d, x_c, a, b, "linesearch")
    assert out.fallback_taken
    np.testing.assert_array_equal(out.x_next, x_c)


def test_shadow_rejects_when_nothing_improves():
    b = np.array([1.0, 0.0])
    x = b.copy()
    r = b - x
    x_c = np.array([2.0, 1.0])
    out = apply_shadow_step(x, r, x_c - x, x_c, I2, b, "twodim")
    assert out.rejected
    np.testing.assert_array_equal(out.x_next, x)


def test_stepper_counts():
    a = op(np.diag([1.0, 100.0]))
    b = np.ones(2)
    st = Stepper(LINESEARCH, a, b, np.zeros(2), None)
    r = st.initial_residual(np.zeros(2))
    np.testing.assert_array_equal(r, b)
    x_c = np.array([1.0, 0.01])
    st.step(np.zeros(2), r, x_c, None, 0, x_classic=x_c)
    assert st.fallbacks == 0 and st.rejected == 0
    st.step(np.array([1.0, 0.01]), np.zeros(2), np.ones(2), None, 1, x_classic=np.array([9.0, 9.0]))
    assert st.rejected == 1
