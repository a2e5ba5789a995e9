from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maxlab.grid import GridFunction
from maxlab.principle import (ComparisonFunction, PreconditionError, StandardSetup, alpha_bar,
                              comparison_bands_check, comparison_operator_lower_bound, contact_locator,
                              contradiction_report, derive_constants, fabricated_gap_instance, hess_constant,
                              lw_value, plane_vs_hyperboloid_instance, sample_standard_setups, scaled_comparison,
                              support_paraboloid, validate_setup)
from maxlab.quasilinear import Jet2, laplacian


def test_ledger_closed_forms():
    # independent recomputation of the ledger formulas for several inputs
    for m, CE, CS in [(2, 1, 0), (3, Fraction(3, 2), 1), (1, 2, Fraction(1, 4))]:
        CH = 2 * (Fraction(CE) ** 2 * ((m - 1) * (Fraction(CS) + 1) + 2) + 1)
        assert hess_constant(m, CE, CS) == CH
        assert alpha_bar(m, CE, CS) == -2 + Fraction(CE) * (1 + m * Fraction(CE) + m**3 * Fraction(CE) * (CH + 1))


def test_ledger_flat_case_and_string_inputs():
    led = derive_constants(2, "1", "0", "1/3")
    assert (led.C_H, led.alpha_bar) == (8, 73)
    assert led.delta_bar_exact(1) == Fraction(1, 27)
    assert led.delta_bar_exact() == Fraction(1, 3) ** 75 / 73
    assert mpmath.almosteq(led.delta_bar, mpmath.mpf(1) / 3**75 / 73, rel_eps=1e-14)


@pytest.mark.parametrize("bad", [dict(m=0), dict(C_E=0.5), dict(C_S=-1), dict(r0=Fraction(1, 2))])
def test_ledger_rejects_out_of_range(bad):
    args = dict(m=2, C_E=1, C_S=0, r0=Fraction(1, 3)) | bad
    with pytest.raises(ValueError):
        derive_constants(**args)


@settings(max_examples=40, deadline=None)
@given(alpha=st.floats(0.5, 60), r0=st.floats(0.05, 1 / 3), seed=st.integers(0, 10**6))
def test_comparison_bands_hold_on_annulus(alpha, r0, seed):
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((50, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    pts = u * rng.uniform(r0, 3 * r0, (50, 1))
    assert comparison_bands_check(alpha, r0, pts).passed


def test_comparison_derivatives_against_fd():
    cf = ComparisonFunction(3.0)
    x = np.array([0.4, -0.2])
    h = 1e-5
    g = np.array([(cf.value(x + e) - cf.value(x - e)) / (2 * h) for e in np.eye(2) * h])
    H = np.array([(cf.grad(x + e) - cf.grad(x - e)) / (2 * h) for e in np.eye(2) * h])
    assert np.allclose(cf.grad(x), g, rtol=1e-8)
    assert np.allclose(cf.hess(x), H, rtol=0, atol=1e-7 * np.abs(H).max())


def test_scaled_comparison_survives_huge_exponents():
    val, grad, hess = scaled_comparison(1128, mpmath.mpf("1e-540"), np.array([0.5, 0.0]))
    assert np.all(np.isfinite(grad)) and np.all(np.isfinite(hess))
    # delta * alpha * |x|^-(alpha+2) computed by hand
    s = float(mpmath.mpf("1e-540") * 1128 * mpmath.mpf(0.5) ** -1130)
    assert -grad[0] == pytest.approx(s * 0.5, rel=1e-12)


def test_lw_value_formula_matches_direct_contraction():
    rng = np.random.default_rng(0)
    x = np.array([0.3, 0.2])
    A = np.array([[1.2, 0.1], [0.1, 0.8]])
    B = rng.standard_normal(2)
    cf = ComparisonFunction(2.5)
    direct = np.sum(A * cf.hess(x)) + B @ cf.grad(x)
    assert float(lw_value(2.5, x, A, B)) == pytest.approx(direct, rel=1e-12)


def test_sampled_setups_are_valid_and_bound_holds():
    op = laplacian(2)
    led = derive_constants(2, 1, 0, Fraction(1, 3))
    for setup, ledger in sample_standard_setups(op, led, np.random.default_rng(1), 20, 0.5):
        assert all(ok for ok, _ in validate_setup(setup, op, ledger).values())
        A, B = np.eye(2), np.zeros(2)
        assert comparison_operator_lower_bound(setup, ledger, (A, B, 0.0), op) >= 1


def test_lower_bound_rejects_wrong_alpha():
    led = derive_constants(2, 1, 0, Fraction(1, 3))
    x1 = np.array([2 / 3, 0.0])
    j = Jet2(x1, 0.0, np.zeros(2), np.zeros((2, 2)))
    setup = StandardSetup(x1, x1, led.r0, led.r1, 5, led.delta_bar, j, j)
    with pytest.raises(PreconditionError, match="alpha=alpha_bar"):
        comparison_operator_lower_bound(setup, led, (np.eye(2), np.zeros(2), 0.0))


def test_contact_locator_single_touch():
    f = lambda P: np.zeros(len(P))  # noqa: E731
    u0 = GridFunction.from_function(f, [-1, -1], [1, 1], (21, 21))
    u1 = GridFunction.from_function(lambda P: -np.sum(P**2, axis=1), [-1, -1], [1, 1], (21, 21))
    c = contact_locator(u0, u1)
    assert c.status == "ok"
    assert np.allclose(c.x1, 0)
    assert np.linalg.norm(c.x0 - c.x1) == pytest.approx(2 * c.r0)
    assert 3 * c.r0 <= 1 + 1e-12
    assert contact_locator(u0, u0).status == "identical"
    with pytest.raises(ValueError):
        contact_locator(u1, u0)


def test_support_paraboloid_convex_vs_concave_cone():
    lo, hi, shape = [-1, -1], [1, 1], (21, 21)
    up = GridFunction.from_function(lambda P: np.linalg.norm(P, axis=1), lo, hi, shape)
    down = GridFunction.from_function(lambda P: -np.linalg.norm(P, axis=1), lo, hi, shape)
    assert support_paraboloid(up, [0, 0], 0.0)[1].passed
    assert not support_paraboloid(down, [0, 0], 0.0)[1].passed


def test_pipeline_outcomes_and_determinism():
    a = contradiction_report(plane_vs_hyperboloid_instance(), seed=3)
    assert a.outcome == "EMPTY-H0-WINDOW" and a.verdict.value == "hypothesis-failure"
    b1 = contradiction_report(fabricated_gap_instance(), seed=3)
    b2 = contradiction_report(fabricated_gap_instance(), seed=3)
    assert b1.outcome == "INCONSISTENT-HYPOTHESES"
    assert b1.to_json() == b2.to_json()
