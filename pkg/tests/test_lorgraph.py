import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maxlab.grid import GridFunction
from maxlab.lorgraph import (ChartError, GraphHypersurface, MetricChart, NotSpacelikeError, admissible_set,
                             christoffels, graph_geometry, hessian_roundtrip, minkowski, parse_chart,
                             second_fundamental_form_direct, warped)


def hyperboloid(m):
    return (lambda x: math.sqrt(1 + x @ x), lambda x: x / math.sqrt(1 + x @ x),
            lambda x: np.eye(m) / math.sqrt(1 + x @ x) - np.outer(x, x) / (1 + x @ x) ** 1.5)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_hyperboloid_has_unit_mean_curvature(n):
    chart = minkowski(n)
    surf = GraphHypersurface(chart, *hyperboloid(n - 1))
    rng = np.random.default_rng(n)
    for x in rng.uniform(-2, 2, (20, n - 1)):
        assert graph_geometry(chart, surf, x).H == pytest.approx(1.0, abs=1e-12)


def test_hyperboloid_from_grid_nodes():
    chart = minkowski(3)
    f = lambda P: np.sqrt(1 + np.sum(P**2, axis=1))  # noqa: E731
    grid = GridFunction.from_function(f, [-1, -1], [1, 1], (201, 201))
    surf = GraphHypersurface.from_grid(chart, grid)
    rng = np.random.default_rng(0)
    nodes = grid.points()[grid.interior_mask().ravel()]
    for x in nodes[rng.choice(len(nodes), 100, replace=False)]:
        assert abs(graph_geometry(chart, surf, x).H - 1) < 1e-4


def test_time_slices_of_the_strip():
    # t = t0 has second fundamental form Gamma^t_ij, so H = -tan(t0)
    chart = warped("hyperbolic", 2)
    for t0 in (-0.7, 0.0, 0.4, 1.1):
        s = GraphHypersurface(chart, lambda x: t0, lambda x: np.zeros(2), lambda x: np.zeros((2, 2)))
        assert graph_geometry(chart, s, np.array([0.2, -0.1])).H == pytest.approx(-math.tan(t0), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), fiber=st.sampled_from(["hyperbolic", "flat"]))
def test_second_fundamental_form_two_routes(seed, fiber):
    rng = np.random.default_rng(seed)
    chart = warped(fiber, 2)
    c = rng.uniform(-0.3, 0.3, 6)
    f = lambda x: c[0] + c[1] * x[0] + c[2] * x[1] + c[3] * x[0] ** 2 + c[4] * x[0] * x[1] + c[5] * x[1] ** 2  # noqa
    grad = lambda x: np.array([c[1] + 2 * c[3] * x[0] + c[4] * x[1], c[2] + c[4] * x[0] + 2 * c[5] * x[1]])  # noqa
    hess = lambda x: np.array([[2 * c[3], c[4]], [c[4], 2 * c[5]]])  # noqa
    surf = GraphHypersurface(chart, f, grad, hess)
    x = rng.uniform(-0.4, 0.4, 2)
    geo = graph_geometry(chart, surf, x)
    assert np.allclose(geo.h, second_fundamental_form_direct(chart, surf, x), atol=1e-11)
    assert np.allclose(hessian_roundtrip(geo), hess(x), atol=1e-12)
    # H = a:D^2 f + b
    assert geo.H == pytest.approx(float(np.sum(geo.a * hess(x)) + geo.b), abs=1e-12)


def test_fd_christoffels_match_analytic():
    chart = warped("hyperbolic", 2)
    fd = MetricChart(chart.n, chart.g_space, name="fd", domain=chart.domain, h_fd=1e-5)
    P = np.array([0.2, -0.3, 0.5])
    assert np.allclose(christoffels(chart, P), christoffels(fd, P), atol=1e-8)


def test_timelike_graph_is_rejected():
    chart = minkowski(3)
    surf = GraphHypersurface(chart, lambda x: 2 * x[0], lambda x: np.array([2.0, 0]), lambda x: np.zeros((2, 2)))
    with pytest.raises(NotSpacelikeError):
        graph_geometry(chart, surf, np.zeros(2))


@pytest.mark.parametrize("spec", ["", "sphere", "minkowski m=3", "warped fiber", "ads-strip dim=x"])
def test_parse_chart_errors(spec):
    with pytest.raises(ChartError):
        parse_chart(spec)


def test_parse_chart_and_domain():
    assert parse_chart("minkowski n=4").n == 4
    c = parse_chart("warped fiber=flat dim=1")
    with pytest.raises(ChartError):
        c.metric([0.0, 2.0])


def test_admissible_set_constant_monotone_in_rho():
    chart = minkowski(3)
    K = (-0.5 * np.ones(2), 0.5 * np.ones(2))
    ces = [admissible_set(rho, 1.0, K, chart).params["C_E"] for rho in (0.3, 0.6, 0.9)]
    assert ces[0] >= ces[1] >= ces[2] >= 1
    region = admissible_set(0.6, 1.0, K, chart)
    for x, r, p in region.sample(np.random.default_rng(0), 50):
        assert region.contains(x, r, p)
