import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maxlab.curvature import (CurvatureError, MetricField, bianchi_residuals, builtin_metric,
                              conformal_transform_check, curvature, fiber_field, lemma_tensor, lorentz_frame,
                              minkowski_field, product_field, product_norm_decomposition, schur_residual,
                              sectional_curvature, strip_conformal_check, warped_field, weyl_coefficients,
                              weyl_norm_sq)

X4 = np.array([0.1, -0.2, 0.15, 0.3])


def round_sphere():
    """d theta^2 + sin^2 theta d phi^2 with no derivatives supplied."""
    return MetricField(2, lambda x: np.diag([1.0, math.sin(x[0]) ** 2]), name="S2")


def test_minkowski_is_flat():
    b = curvature(minkowski_field(4), np.zeros(4))
    assert np.all(b.riemann == 0) and b.scalar == 0


def test_round_sphere_by_finite_differences():
    b = curvature(round_sphere(), np.array([1.0, 0.3]))
    assert sectional_curvature(b, [1, 0], [0, 1]) == pytest.approx(1.0, abs=1e-8)
    assert b.scalar == pytest.approx(2.0, abs=1e-8)


@pytest.mark.parametrize("name", ["ads-strip", "strip-flat"])
@pytest.mark.parametrize("n", [3, 4, 5])
def test_warped_ricci_tt(name, n):
    x = np.append(np.full(n - 1, 0.1), 0.4)
    assert curvature(builtin_metric(name, n), x).ricci[-1, -1] == pytest.approx(n - 1, abs=1e-9)


def test_ads_strip_has_constant_curvature_minus_one():
    b = curvature(builtin_metric("ads-strip", 4), X4)
    G = b.metric
    expected = -(np.einsum("ac,bd->abcd", G, G) - np.einsum("ad,bc->abcd", G, G))
    assert np.allclose(b.riemann, expected, atol=1e-10)
    assert abs(weyl_norm_sq(b)) < 1e-20


def test_fd_and_analytic_riemann_agree():
    m = builtin_metric("ads-strip", 4)
    fd = MetricField(4, m.g, name="fd")
    assert np.allclose(curvature(m, X4).riemann, curvature(fd, X4).riemann, atol=1e-7)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10**4), eps=st.floats(0.01, 0.3))
def test_symmetries_and_weyl_trace_free(seed, eps):
    metric = product_field(fiber_field("perturbed", 3, eps=eps, seed=seed))
    b = curvature(metric, X4)
    assert max(v for k, v in b.residuals.items() if not k.startswith("weyl")) < 1e-12
    assert max(v for k, v in b.residuals.items() if k.startswith("weyl")) < 1e-10


def test_second_bianchi_identity():
    metric = product_field(fiber_field("perturbed", 3, eps=0.2, seed=1))
    res = bianchi_residuals(metric, X4)
    assert res["first"] < 1e-12 and res["second"] < 1e-5


def test_weyl_conformal_scaling_constant_and_variable():
    metric = builtin_metric("product-perturbed", 4)
    rep = conformal_transform_check(metric, 2.0, X4)
    assert rep.passed and rep.witness["norm_ratio"] == pytest.approx(1 / 16, abs=1e-12)
    lam = lambda x: 1.0 + 0.2 * math.sin(x[0] + 2 * x[3])  # noqa: E731
    rep = conformal_transform_check(metric, lam, X4, tol=1e-6)
    assert rep.passed


def test_strip_conformal_to_product():
    assert strip_conformal_check(fiber_field("perturbed", 3, eps=0.1), X4[:3], 0.4).passed


def test_lorentz_frame_is_orthonormal_with_time_last():
    G = builtin_metric("product-perturbed", 4).metric(X4)
    E = lorentz_frame(G)
    assert np.allclose(E.T @ G @ E, np.diag([1, 1, 1, -1]), atol=1e-12)
    assert np.allclose(E[:, -1], [0, 0, 0, 1])


@pytest.mark.parametrize("name", ["product-flat", "product-hyperbolic", "product-perturbed"])
def test_norm_decomposition_only_for_bS_reading(name):
    a, b = weyl_coefficients(4)
    rep = product_norm_decomposition(builtin_metric(name, 4), X4, a, b)
    assert rep.passed
    if abs(rep.witness["scalar"]) > 1e-6:
        assert rep.witness["satisfied_by"] == ["bS"]


@settings(max_examples=15, deadline=None)
@given(a=st.floats(-2, 2), b=st.floats(-2, 2), seed=st.integers(0, 100))
def test_norm_decomposition_any_coefficients(a, b, seed):
    metric = product_field(fiber_field("perturbed", 3, eps=0.2, seed=seed))
    assert product_norm_decomposition(metric, X4, a, b).residual <= 1e-8


def test_weyl_coefficients_reproduce_weyl():
    b = curvature(builtin_metric("product-perturbed", 4), X4)
    a, c = weyl_coefficients(4)
    assert np.allclose(lemma_tensor(b, a, c, "bS"), b.weyl, atol=1e-13)


def test_decomposition_rejects_non_product():
    with pytest.raises(CurvatureError):
        product_norm_decomposition(builtin_metric("ads-strip", 4), X4, -0.5, 1 / 6)


def test_schur_residual():
    assert schur_residual(fiber_field("hyperbolic", 3), X4[:3]) < 1e-10
    assert schur_residual(fiber_field("perturbed", 3, eps=0.2), X4[:3]) > 1e-3


def test_weyl_norm_rejects_low_dimension():
    with pytest.raises(CurvatureError):
        weyl_norm_sq(curvature(warped_field("hyperbolic", 2), np.array([0.1, 0.1, 0.2])))


def test_bundle_json_has_index_metadata():
    import json

    d = json.loads(curvature(builtin_metric("ads-strip", 4), X4).to_json())
    assert d["riemann"]["indices"] == "_ABCD" and len(d["riemann"]["data"]) == 4
