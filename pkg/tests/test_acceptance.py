"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines inline; they
are also collected into the terminal summary.
"""

import math
import time
from fractions import Fraction

import numpy as np
import pytest

from maxlab.curvature import (builtin_metric, conformal_transform_check, curvature, product_norm_decomposition,
                              weyl_coefficients, weyl_norm_sq)
from maxlab.lorgraph import GraphHypersurface, admissible_set, graph_geometry, minkowski
from maxlab.modelspace import (BusemannEvaluator, WarpedStrip, busemann_monotone_report, cosmological_time,
                               cosmological_time_estimate, geodesic_sphere, named_line, splitting_map_check,
                               strip_grid)
from maxlab.principle import (contradiction_report, derive_constants, fabricated_gap_instance,
                              linearization_coefficients, lower_bound_report, plane_vs_hyperboloid_instance,
                              sample_standard_setups)
from maxlab.quasilinear import (AdmissibleRegion, certify_ellipticity, flat_mean_curvature, linearization_residual,
                                sample_jet_pairs)
from maxlab.symkernel import sample_trace_bound_instances, trace_bound_sweep


def _hyperboloid(m):
    def f(x):
        return math.sqrt(1 + x @ x)

    def grad(x):
        return x / math.sqrt(1 + x @ x)

    def hess(x):
        s = 1 + x @ x
        return np.eye(m) / math.sqrt(s) - np.outer(x, x) / s**1.5

    return f, grad, hess


def _ball_points(rng, count, m, radius):
    u = rng.standard_normal((count, m))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return u * (radius * rng.random(count) ** (1 / m))[:, None]


def test_c01_flat_graph_oracle(record):
    rng = np.random.default_rng(1)
    worst = {"analytic": 0.0, "fd": 0.0}
    elapsed = 0.0
    for n in (3, 4):
        m = n - 1
        chart = minkowski(n)
        f, grad, hess = _hyperboloid(m)
        pts = _ball_points(rng, 100, m, 2.0)
        exact = GraphHypersurface(chart, f, grad, hess)
        fd = GraphHypersurface(chart, f)
        t0 = time.perf_counter()
        worst["analytic"] = max(worst["analytic"], max(abs(graph_geometry(chart, exact, x).H - 1) for x in pts))
        worst["fd"] = max(worst["fd"], max(abs(graph_geometry(chart, fd, x).H - 1) for x in pts))
        elapsed += time.perf_counter() - t0
    ok = worst["analytic"] <= 1e-8 and worst["fd"] <= 1e-4 and elapsed < 1.0
    record("C1 flat-graph oracle", ok,
           f"analytic={worst['analytic']:.2e} fd={worst['fd']:.2e} time={elapsed:.2f}s")
    assert ok


def test_c02_matrix_lemma(record):
    t0 = time.perf_counter()
    inst = sample_trace_bound_instances(np.random.default_rng(2), 10_000, dims=(2, 5))
    rep = trace_bound_sweep(inst)
    elapsed = time.perf_counter() - t0
    w = rep.witness
    ok = w["samples"] == 10_000 and w["hypothesis_failures"] == 0 and w["conclusion_failures"] == 0 and elapsed < 5
    record("C2 matrix lemma", ok, f"samples={w['samples']} failures={w['conclusion_failures']} "
                                  f"worst_gap={w['worst_relative_gap']:.3e} time={elapsed:.2f}s")
    assert ok


def test_c03_constant_ledger(record):
    led = derive_constants(2, 1, 0, Fraction(1, 3))
    d1 = led.delta_bar_exact(1)
    ok = led.C_H == 8 and led.alpha_bar == 73 and d1 == Fraction(1, 27)
    record("C3 constant ledger", ok, f"C_H={led.C_H} alpha_bar={led.alpha_bar} delta_bar(1)={d1}")
    assert ok


def test_c04_operator_lower_bound(record):
    m, p_max = 2, 0.5
    region = AdmissibleRegion(m, lambda x, r, p: float(p @ p) < p_max**2, describe="|p| < 0.5")
    op = flat_mean_curvature(m).with_region(region)
    # the ledger's C_E must dominate the operator on the region
    ring = [(np.zeros(m), 0.0, s * np.array([math.cos(a), math.sin(a)]))
            for s in np.linspace(0, 0.999 * p_max, 40) for a in np.linspace(0, 2 * math.pi, 24)]
    C_E = 2
    assert certify_ellipticity(op, region, ring, C_E).valid
    led = derive_constants(m, C_E, 1, Fraction(1, 3))
    t0 = time.perf_counter()
    setups = sample_standard_setups(op, led, np.random.default_rng(4), 1000, 0.9 * p_max)
    worst_log10 = math.inf
    bad = 0
    for setup, ledger in setups:
        rep = lower_bound_report(setup, ledger, linearization_coefficients(op, setup.jet0, setup.jet1, 16), op)
        bad += not rep.passed
        if rep.residual is not None:
            worst_log10 = min(worst_log10, rep.residual)
    elapsed = time.perf_counter() - t0
    ok = len(setups) == 1000 and bad == 0 and elapsed < 30
    record("C4 operator lower bound", ok,
           f"setups={len(setups)} failures={bad} min_log10_Lw={worst_log10:.1f} time={elapsed:.2f}s")
    assert ok


def test_c05_linearization_identity(record):
    chart = minkowski(3)
    region = admissible_set(0.7, 1.0, (-0.5 * np.ones(2), 0.5 * np.ones(2)), chart, seed=5)
    op = flat_mean_curvature(2).with_region(region)
    pairs = sample_jet_pairs(region, np.random.default_rng(5), 1000)
    worst = max(linearization_residual(op, j0, j1, 16) for j0, j1 in pairs)
    ok = len(pairs) == 1000 and worst <= 1e-8
    record("C5 linearization identity", ok, f"pairs={len(pairs)} worst_residual={worst:.2e}")
    assert ok


def test_c06_contradiction_pipeline(record):
    plane = contradiction_report(plane_vs_hyperboloid_instance(), seed=6)
    fab = contradiction_report(fabricated_gap_instance(), seed=6)
    deterministic = (plane.to_json() == contradiction_report(plane_vs_hyperboloid_instance(), seed=6).to_json()
                     and fab.to_json() == contradiction_report(fabricated_gap_instance(), seed=6).to_json())
    ok = (plane.verdict.value == "hypothesis-failure" and plane.outcome == "EMPTY-H0-WINDOW"
          and fab.outcome == "INCONSISTENT-HYPOTHESES" and deterministic)
    record("C6 contradiction pipeline", ok,
           f"plane={plane.verdict.value}/{plane.outcome} fabricated={fab.outcome} deterministic={deterministic}")
    assert ok


def test_c07_strip_busemann(record):
    model = WarpedStrip()
    line = named_line(model, "center")
    pts = strip_grid(model, 20, 20)
    t0 = time.perf_counter()
    plus, minus = BusemannEvaluator(model, line, 1), BusemannEvaluator(model, line, -1)
    mono = [busemann_monotone_report(ev, pts) for ev in (plus, minus)]
    bp, bm = plus.evaluate(pts), minus.evaluate(pts)
    elapsed = time.perf_counter() - t0
    err_t = float(np.abs(bp - pts[:, -1]).max())
    err_sum = float(np.abs(bp + bm).max())
    monotone = all(r.passed for r in mono)
    ok = len(pts) == 400 and err_t < 1e-3 and err_sum < 2e-3 and monotone and elapsed < 60
    record("C7 strip Busemann", ok,
           f"|b+ - t|={err_t:.2e} |b+ + b-|={err_sum:.2e} monotone={monotone} time={elapsed:.2f}s")
    assert ok


def test_c08_geodesic_spheres(record):
    model = WarpedStrip()
    eta = np.array([0.0, 0.0, 1.0])
    worst = 0.0
    for r in (math.pi / 6, math.pi / 4, math.pi / 3):
        worst = max(worst, abs(geodesic_sphere(model, eta, r).H + 1 / math.tan(r)))
    # the lower bound across more radii and base points
    violations = 0
    checked = 0
    for base_t in (-0.6, 0.0, 0.4):
        for r in np.linspace(0.2, 1.5, 6):
            if base_t + r >= math.pi / 2 - 1e-3:
                continue
            res = geodesic_sphere(model, eta, float(r), np.array([0.1, -0.2, base_t]))
            checked += 1
            violations += res.H < -1 / math.tan(r) - 1e-6
    ok = worst <= 1e-4 and violations == 0
    record("C8 geodesic spheres", ok, f"max|H + cot r|={worst:.2e} bound_checks={checked} violations={violations}")
    assert ok


def test_c09_splitting_pullback(record):
    rep = splitting_map_check(WarpedStrip("flat", 1), np.linspace(-1, 1, 5), np.linspace(-1.2, 1.2, 9))
    w = rep.witness
    ok = rep.passed and w["analytic_max_error"] <= 1e-6 and w["second_order"]
    orders = ", ".join(f"{o:.2f}" for o in w["fd_orders"])
    record("C9 splitting pullback", ok, f"analytic={w['analytic_max_error']:.2e} fd_orders=[{orders}]")
    assert ok


def test_c10_curvature_suite(record):
    x = np.array([0.1, -0.2, 0.15, 0.3])
    ric_err = 0.0
    for name in ("ads-strip", "strip-flat"):
        b = curvature(builtin_metric(name, 4), x)
        ric_err = max(ric_err, abs(b.ricci[-1, -1] - 3))
    weyl = max(abs(weyl_norm_sq(curvature(builtin_metric(name, 4), x))) for name in ("ads-strip",
                                                                                     "product-hyperbolic"))
    conf = conformal_transform_check(builtin_metric("product-perturbed", 4), 2.0, x)
    ratio_err = abs(conf.witness["norm_ratio"] - 1 / 16)
    a, bcoef = weyl_coefficients(4)
    dec = max(product_norm_decomposition(builtin_metric(name, 4), x, a, bcoef).residual
              for name in ("product-hyperbolic", "product-perturbed", "product-flat"))
    ok = ric_err <= 1e-6 and weyl <= 1e-6 and ratio_err <= 1e-8 and dec <= 1e-8
    record("C10 curvature suite", ok, f"ric_tt_err={ric_err:.2e} weyl_norm={weyl:.2e} "
                                      f"ratio_err={ratio_err:.2e} decomposition={dec:.2e}")
    assert ok


def test_c11_cosmological_time(record):
    exact_err = 0.0
    est_err = 0.0
    for fiber, dim in (("hyperbolic", 2), ("flat", 1)):
        model = WarpedStrip(fiber, dim)
        for t in (-1.0, 0.0, 0.7, 1.3):
            q = np.append(np.zeros(dim), t)
            exact_err = max(exact_err, abs(cosmological_time(model, q) - (t + math.pi / 2)))
            est_err = max(est_err, abs(cosmological_time_estimate(model, q) - (t + math.pi / 2)))
    ok = exact_err == 0.0 and est_err <= 1e-3
    record("C11 cosmological time", ok, f"exact_err={exact_err:.1e} estimate_err={est_err:.2e}")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-s", "-q"]))
