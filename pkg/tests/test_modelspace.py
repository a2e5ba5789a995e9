import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from maxlab.modelspace import (BusemannEvaluator, Minkowski, ShootingError, WarpedStrip, aitken,
                               busemann_inequality_suite, busemann_table_csv, causal_relation, conformal_time,
                               cosmological_time, cosmological_time_estimate, exp_map, from_conformal_time,
                               geodesic_sphere, lorentz_distance, named_line, normal_flow, parse_model,
                               read_points_csv, splitting_map_check, strip_grid, vertical_limit_distance)

STRIP = WarpedStrip("hyperbolic", 2)


def closed_form(model, p, q):
    """cos d = sin t0 sin t1 + cos t0 cos t1 cosh D (any fiber, D = fiber distance)."""
    D = model.fiber_distance(p[:-1], q[:-1])
    c = math.sin(p[-1]) * math.sin(q[-1]) + math.cos(p[-1]) * math.cos(q[-1]) * math.cosh(D)
    return math.acos(min(1.0, c))


def strip_point(draw_x, draw_y, t):
    r = 0.7 * math.sqrt(draw_x)
    return np.array([r * math.cos(draw_y), r * math.sin(draw_y), t])


def test_conformal_time_roundtrip():
    t = np.linspace(-1.5, 1.5, 31)
    assert np.allclose(from_conformal_time(conformal_time(t)), t, atol=1e-14)


def test_parse_model():
    assert parse_model("minkowski n=4").n == 4
    assert parse_model("strip fiber=flat dim=1").name == "strip fiber=flat dim=1"
    for bad in ("", "torus", "strip genus=2", "strip fiber=sphere"):
        with pytest.raises(ValueError):
            parse_model(bad)


def test_minkowski_distance_closed_form():
    M = Minkowski(3)
    assert lorentz_distance(M, [0, 0, 0], [0.3, 0.4, 2.0]) == pytest.approx(math.sqrt(4 - 0.25))
    assert lorentz_distance(M, [0, 0, 0], [1, 0, 0.5]) == 0.0
    assert lorentz_distance(M, [0, 0, 1], [0, 0, 0]) == 0.0


@settings(max_examples=60, deadline=None)
@given(a=st.floats(0, 1), b=st.floats(0, 6.28), c=st.floats(0, 1), d=st.floats(0, 6.28),
       t0=st.floats(-1.5, 1.0), dt=st.floats(0.01, 2.0))
def test_strip_distance_against_closed_form(a, b, c, d, t0, dt):
    t1 = min(t0 + dt, 1.55)
    p, q = strip_point(a, b, t0), strip_point(c, d, t1)
    if causal_relation(STRIP, p, q) <= 0:
        assert lorentz_distance(STRIP, p, q) == 0.0
        return
    assert lorentz_distance(STRIP, p, q) == pytest.approx(closed_form(STRIP, p, q), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_reverse_triangle_inequality(seed):
    rng = np.random.default_rng(seed)
    ts = np.sort(rng.uniform(-1.4, 1.4, 3))
    # small fiber offsets around a common foot keep most triples chronological
    pts = [np.append(0.1 * rng.uniform(-1, 1, 2), t) for t in ts]
    p, q, r = pts
    assume(causal_relation(STRIP, p, q) > 0 and causal_relation(STRIP, q, r) > 0)
    assert lorentz_distance(STRIP, p, r) >= lorentz_distance(STRIP, p, q) + lorentz_distance(STRIP, q, r) - 1e-9


def test_distance_is_bounded_by_pi():
    p, q = np.array([0, 0, -1.5]), np.array([0, 0, 1.5])
    assert lorentz_distance(STRIP, p, q) == pytest.approx(3.0, abs=1e-12)
    with pytest.raises(ValueError):
        lorentz_distance(STRIP, p, [0, 0, 1.6])


def test_geodesic_flow_reaches_closed_form_distance():
    # unit timelike vector at the base; the ball metric is 4 delta at the origin
    v = np.array([0.3, 0.0, math.sqrt(1 + 4 * 0.09)])
    q = exp_map(STRIP, np.zeros(3), 0.8 * v)
    assert lorentz_distance(STRIP, np.zeros(3), q) == pytest.approx(0.8, abs=1e-8)


def test_aitken():
    seq = [1 + 0.5**k for k in range(5, 9)]
    assert aitken(seq) == pytest.approx(1.0, abs=1e-12)
    assert aitken([1.0, 2.0, 3.0]) == 3.0  # no geometric tail: last term


def test_busemann_on_strip_grid_properties():
    line = named_line(STRIP, "center")
    pts = strip_grid(STRIP, 6, 6)
    bp = BusemannEvaluator(STRIP, line, 1).evaluate(pts)
    bm = BusemannEvaluator(STRIP, line, -1).evaluate(pts)
    assert np.allclose(bp, pts[:, -1], atol=1e-8)
    assert np.allclose(bp + bm, 0, atol=1e-8)
    assert busemann_inequality_suite(STRIP, line, pts, 300).passed


def test_busemann_monotone_sequences():
    line = named_line(STRIP, "center")
    ev = BusemannEvaluator(STRIP, line, 1)
    _, B = ev.sequences(strip_grid(STRIP, 4, 4))
    for row in B:
        vals = row[np.isfinite(row)]
        assert np.all(np.diff(vals) <= 1e-12)


def test_minkowski_busemann_is_time():
    M = Minkowski(3)
    x = np.array([0.4, -0.3, 0.7])
    assert BusemannEvaluator(M, named_line(M, "center"), 1)(x) == pytest.approx(0.7, abs=1e-6)


def test_busemann_table_csv_header():
    ev = BusemannEvaluator(STRIP, named_line(STRIP, "center"), 1)
    text = busemann_table_csv(ev, np.array([[0.1, 0.0, 0.2]]))
    header = text.splitlines()[0].split(",")
    assert header[:3] == ["x1", "x2", "t"] and header[-1] == "b"


def test_vertical_limit_is_independent_of_feet():
    # cos d -> sin(tau) as the far endpoint approaches the boundary
    for s2 in ([0.0, 0.0], [0.3, 0.2]):
        assert vertical_limit_distance(STRIP, [0, 0], s2, 0.4) == pytest.approx(math.pi / 2 - 0.4, abs=1e-8)


def test_read_points_csv_diagnostics(tmp_path):
    pts = read_points_csv("x1,x2,t\n0.1,0.2,0.3\n0,0,0\n", STRIP)
    assert pts.shape == (2, 3)
    with pytest.raises(ValueError, match="line 2"):
        read_points_csv("x1,x2,t\n0.1,0.2\n", STRIP)
    with pytest.raises(ValueError, match="outside"):
        read_points_csv("0.1,0.2,1.7\n", STRIP)
    f = tmp_path / "p.csv"
    f.write_text("0.0,0.0,0.1\n")
    assert read_points_csv(f, STRIP).shape == (1, 3)


@settings(max_examples=8, deadline=None)
@given(r=st.floats(0.15, 1.3), t=st.floats(-0.8, 0.2))
def test_sphere_mean_curvature_bound(r, t):
    assume(t + r < 1.5)
    res = geodesic_sphere(STRIP, np.array([0, 0, 1.0]), r, np.array([0.0, 0.0, t]))
    assert res.H >= -1 / math.tan(r) - 1e-6
    assert res.H == pytest.approx(-1 / math.tan(r), abs=1e-4)


def test_minkowski_sphere():
    res = geodesic_sphere(Minkowski(3), np.array([0, 0, 1.0]), 1.0)
    assert res.H == pytest.approx(-1.0, abs=1e-6)


def test_sphere_input_validation():
    with pytest.raises(ValueError):
        geodesic_sphere(STRIP, np.array([0, 0, 2.0]), 0.5)
    with pytest.raises(ValueError):
        geodesic_sphere(STRIP, np.array([0, 0, 1.0]), 1.5, np.array([0, 0, 0.3]))


def test_normal_flow_stays_orthogonal_to_slices():
    Y = normal_flow(0.4, np.linspace(-1, 1, 5))
    # along a normal geodesic the fiber coordinate is constant
    assert np.allclose(Y[:, 0], 0.4, atol=1e-12)
    assert np.allclose(from_conformal_time(Y[:, 1]), np.linspace(-1, 1, 5), atol=1e-10)


def test_splitting_check():
    rep = splitting_map_check(WarpedStrip("flat", 1), np.linspace(-1, 1, 3), np.linspace(-1, 1, 5))
    assert rep.passed and rep.witness["second_order"] and rep.witness["injective"]
    with pytest.raises(ValueError):
        splitting_map_check(STRIP, [0.0], [0.0])


def test_cosmological_time():
    q = np.array([0.0, 0.0, 0.5])
    assert cosmological_time(STRIP, q) == 0.5 + math.pi / 2
    assert cosmological_time_estimate(STRIP, q) == pytest.approx(0.5 + math.pi / 2, abs=1e-3)
    with pytest.raises(ValueError):
        cosmological_time(Minkowski(3), [0, 0, 0])


def test_shooting_error_type():
    assert issubclass(ShootingError, RuntimeError)
