import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from maxlab.quasilinear import (AdmissibilityError, AdmissibleRegion, Jet2, builtin_operator, certify_ellipticity,
                                coefficient_bounds_check, evaluate, flat_mean_curvature, laplacian,
                                linearization_coefficients, linearization_residual, tabulated_operator)


def jet(x, r, p, H):
    H = np.asarray(H, float)
    return Jet2(x, r, p, 0.5 * (H + H.T))


def test_jet_validation():
    with pytest.raises(ValueError):
        Jet2([0, 0], 0, [0, 0, 0], np.eye(2))
    with pytest.raises(ValueError):
        Jet2([0, 0], 0, [0, 0], [[1, 2], [3, 4]])


def test_flat_operator_on_hyperboloid_gives_one():
    op = flat_mean_curvature(2)
    x = np.array([0.3, -0.4])
    s = np.sqrt(1 + x @ x)
    j = Jet2(x, s, x / s, np.eye(2) / s - np.outer(x, x) / s**3)
    assert evaluate(op, j) == pytest.approx(1.0, abs=1e-13)


def test_flat_operator_rejects_timelike_gradient():
    with pytest.raises(AdmissibilityError):
        evaluate(flat_mean_curvature(2), Jet2([0, 0], 0, [1.0, 0.2], np.zeros((2, 2))))


def test_laplacian_linearization_is_trivial():
    rng = np.random.default_rng(0)
    j0 = jet([0, 0], 0.1, rng.standard_normal(2), rng.standard_normal((2, 2)))
    j1 = jet([0, 0], -0.3, rng.standard_normal(2), rng.standard_normal((2, 2)))
    A, B, C = linearization_coefficients(laplacian(2), j0, j1)
    assert np.array_equal(A, np.eye(2)) and np.all(B == 0) and C == 0


def test_linearization_coefficients_against_adaptive_quadrature():
    op = flat_mean_curvature(2)
    j0 = jet([0.1, 0.2], 0.0, [0.3, -0.1], [[1.0, 0.2], [0.2, -0.5]])
    j1 = jet([0.1, 0.2], 0.4, [-0.2, 0.25], [[0.3, -0.1], [-0.1, 0.8]])
    A, B, _ = linearization_coefficients(op, j0, j1, 16)

    def a_t(t, i, k):
        jt = j0.blend(j1, t)
        return op.coeff_a(jt.x, jt.r, jt.p)[i, k]

    def b_t(t, i):
        jt = j0.blend(j1, t)
        return np.einsum("ijk,jk->i", op.d_a_dp(jt.x, jt.r, jt.p), jt.hess)[i]

    for i in range(2):
        assert B[i] == pytest.approx(quad(b_t, 0, 1, args=(i,), epsabs=1e-13)[0], abs=1e-11)
        for k in range(2):
            assert A[i, k] == pytest.approx(quad(a_t, 0, 1, args=(i, k), epsabs=1e-13)[0], abs=1e-12)


def test_analytic_da_dp_matches_finite_differences():
    op = flat_mean_curvature(3)
    x, r, p = np.zeros(3), 0.0, np.array([0.2, -0.3, 0.1])
    fd = op.__class__(3, op.a, op.b, name="fd")
    assert np.allclose(op.d_a_dp(x, r, p), fd.d_a_dp(x, r, p), atol=1e-8)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10**6), scale=st.floats(0.1, 3.0))
def test_linearization_identity_property(seed, scale):
    rng = np.random.default_rng(seed)
    op = flat_mean_curvature(2)
    p = rng.standard_normal((2, 2))
    p *= 0.6 * rng.random((2, 1)) / np.linalg.norm(p, axis=1, keepdims=True)
    x = rng.standard_normal(2)
    j0 = jet(x, rng.standard_normal(), p[0], scale * rng.standard_normal((2, 2)))
    j1 = jet(x, rng.standard_normal(), p[1], scale * rng.standard_normal((2, 2)))
    assert linearization_residual(op, j0, j1, 16) <= 1e-9 * (1 + scale)


def test_region_enforced_along_segment():
    region = AdmissibleRegion(1, lambda x, r, p: abs(p[0]) < 0.5 or abs(p[0]) > 0.7)
    op = laplacian(1).with_region(region)
    j0, j1 = Jet2([0], 0, [0.0], [[0]]), Jet2([0], 0, [1.0], [[0]])
    with pytest.raises(AdmissibilityError, match="t="):
        linearization_coefficients(op, j0, j1)


def test_ellipticity_certificate_monotone():
    op = flat_mean_curvature(2)
    samples = [(np.zeros(2), 0.0, np.array([s, 0.0])) for s in np.linspace(0, 0.6, 13)]
    lo = certify_ellipticity(op, None, samples, 1.5)
    hi = certify_ellipticity(op, None, samples, 3.0)
    assert not lo.valid and hi.valid
    assert lo.worst_ratio == hi.worst_ratio == pytest.approx(2.0)


def test_coefficient_bounds_check_flags_large_B():
    rep = coefficient_bounds_check(np.eye(2), np.array([1e6, 0]), 0.0, 1.0, np.eye(2), np.eye(2))
    assert not rep.passed


def test_tabulated_operator_reproduces_laplacian():
    r = np.linspace(-1, 1, 5)
    p = [np.linspace(-1, 1, 5)] * 2
    a = np.broadcast_to(np.eye(2), (5, 5, 5, 2, 2)).copy()
    op = tabulated_operator({"m": 2, "r": r, "p": p, "a": a, "b": np.zeros((5, 5, 5))})
    j = Jet2([0, 0], 0.1, [0.2, -0.3], [[1, 0], [0, 2]])
    assert evaluate(op, j) == pytest.approx(3.0)
    with pytest.raises(ValueError, match="shape"):
        tabulated_operator({"m": 2, "r": r, "p": p, "a": a[..., :1], "b": np.zeros((5, 5, 5))})


def test_builtin_operator_unknown():
    with pytest.raises(ValueError, match="unknown operator"):
        builtin_operator("nope", 2)
