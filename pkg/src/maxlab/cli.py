"""Command-line scenario runner.

Every subcommand builds an :class:`~maxlab.config.ExperimentConfig` from its
flags (``run`` reads one from a file), executes it and prints a JSON report.
Exit status: 0 when nothing failed, 1 on a conclusion failure, 2 on
configuration or usage errors, 3 on a numerical-quality failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .config import ConfigError, ExperimentConfig
from .report import SCHEMA, VerificationReport, Verdict, dumps, worst

EXIT_OK, EXIT_CONCLUSION, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3

FLAG_NAMES = {"C_E": "ce", "C_S": "cs", "Bd": "bd", "K": "k", "H0_window": "h0-window"}


def _default_point(n: int):
    return [0.1, -0.2, 0.15, 0.05, -0.1, 0.12][: n - 1] + [0.3]


# Scenario runners: each returns (reports, data, ledger or None) ---------------------------------


def run_constants(cfg: ExperimentConfig):
    from .principle import derive_constants

    p = cfg.params
    led = derive_constants(p["m"], p["C_E"], p["C_S"], p["r0"], p["alpha"])
    witness = led.to_dict()
    if led.alpha.denominator == 1:
        q = led.delta_bar_exact()
        text = f"{q.numerator}/{q.denominator}" if q.denominator != 1 else str(q.numerator)
        witness["delta_bar_exact"] = text if len(text) <= 200 else f"omitted ({len(text)} characters)"
    return [VerificationReport("constants", Verdict.PASS, None, witness, dict(p), cfg.seed)], {}, led


def run_verify_operator(cfg: ExperimentConfig):
    from .lorgraph import admissible_set, minkowski, parse_chart
    from .principle import derive_constants
    from .quasilinear import (builtin_operator, certify_ellipticity, coefficient_bounds_check,
                              linearization_coefficients, linearization_residual, sample_jet_pairs)

    p = cfg.params
    rng = np.random.default_rng(cfg.seed)
    if p["chart"] is not None:
        chart = parse_chart(p["chart"])
        region = admissible_set(p["rho"], p["Bd"], (-p["K"] * np.ones(chart.n - 1), p["K"] * np.ones(chart.n - 1)),
                                chart, seed=cfg.seed)
        from .lorgraph import chart_operator

        op = chart_operator(chart).with_region(region)
    else:
        op = builtin_operator(p["operator"], p["m"])
        chart = minkowski(p["m"] + 1)
        region = admissible_set(p["rho"], p["Bd"], (-p["K"] * np.ones(p["m"]), p["K"] * np.ones(p["m"])), chart,
                                seed=cfg.seed)
        op = op.with_region(region)
    samples = region.sample(rng, p["samples"])
    probe = certify_ellipticity(op, region, samples, math.inf)
    C_E = p["C_E"] if p["C_E"] is not None else max(1.0, probe.worst_ratio, probe.worst_derivative_bound)
    cert = certify_ellipticity(op, region, samples, C_E)
    reports = [VerificationReport("ellipticity", Verdict.PASS if cert.valid else Verdict.HYPOTHESIS_FAILURE,
                                  max(cert.worst_ratio, cert.worst_derivative_bound) - C_E, cert.to_dict(),
                                  {"operator": op.name, "region": region.describe}, cfg.seed)]
    worst_lin = 0.0
    bound_fail = None
    for j0, j1 in sample_jet_pairs(region, rng, p["pairs"]):
        worst_lin = max(worst_lin, linearization_residual(op, j0, j1, p["quad_order"]))
        A, B, C = linearization_coefficients(op, j0, j1, p["quad_order"])
        rep = coefficient_bounds_check(A, B, C, C_E, j0.hess, j1.hess)
        if not rep.passed and bound_fail is None:
            bound_fail = rep
    reports.append(VerificationReport("linearization_identity",
                                      Verdict.PASS if worst_lin <= 1e-8 else Verdict.NUMERICAL_QUALITY, worst_lin,
                                      {"pairs": p["pairs"]}, {"quad_order": p["quad_order"], "tol": 1e-8}, cfg.seed))
    reports.append(bound_fail or VerificationReport("coefficient_bounds", Verdict.PASS, None,
                                                    {"pairs": p["pairs"]}, {"C_E": C_E}, cfg.seed))
    led = derive_constants(op.m, _ceil_frac(C_E), cfg.ledger["C_S"], cfg.ledger["r0"])
    return reports, {}, led


def _ceil_frac(v: float):
    """Certificates are floats; the ledger wants an exact, slightly generous value."""
    from fractions import Fraction

    return max(Fraction(1), Fraction(math.ceil(v * 1000), 1000))


def run_max_principle(cfg: ExperimentConfig):
    from .grid import GridFunction
    from .principle import (MaxPrincipleInstance, contradiction_report, fabricated_gap_instance, fd_supplier,
                            plane_vs_hyperboloid_instance)
    from .quasilinear import builtin_operator

    p = cfg.params
    if p["instance"] == "plane-vs-hyperboloid":
        inst = plane_vs_hyperboloid_instance()
    elif p["instance"] == "fabricated-gap":
        inst = fabricated_gap_instance()
    else:
        try:
            u0 = GridFunction.from_csv(Path(p["u0"]))
            u1 = GridFunction.from_csv(Path(p["u1"]))
        except (OSError, ValueError) as exc:
            raise ConfigError(str(exc), field="params.u0") from None
        if not u0.same_grid(u1):
            raise ConfigError("u0 and u1 live on different grids", field="params.u1")
        inst = MaxPrincipleInstance(builtin_operator(p["operator"], u0.dim), u0, u1, fd_supplier(u0), fd_supplier(u1),
                                    p["C_E"], p["C_S"], tuple(p["H0_window"]), name="grids")
    rep = contradiction_report(inst, seed=cfg.seed)
    return [rep], {}, rep.params.get("ledger")


def run_graph_geometry(cfg: ExperimentConfig):
    from .grid import GridFunction
    from .lorgraph import GraphHypersurface, graph_geometry, parse_chart

    p = cfg.params
    chart = parse_chart(p["chart"])
    m = chart.n - 1
    rng = np.random.default_rng(cfg.seed)
    expected = None
    if p["surface"] == "grid":
        if p["grid"] is None:
            raise ConfigError("surface 'grid' needs params.grid", field="params.grid")
        grid = GridFunction.from_csv(Path(p["grid"]))
        surf = GraphHypersurface.from_grid(chart, grid)
        pts = grid.points()[grid.interior_mask().ravel()]
    else:
        if p["surface"] == "hyperboloid":
            f = lambda x: math.sqrt(1 + x @ x)  # noqa: E731
            grad = lambda x: x / math.sqrt(1 + x @ x)  # noqa: E731
            hess = lambda x: (np.eye(m) / math.sqrt(1 + x @ x)  # noqa: E731
                              - np.outer(x, x) / (1 + x @ x) ** 1.5)
            if chart.params.get("kind") == "minkowski":
                expected = 1.0
        else:
            f, grad, hess = (lambda x: 0.0), (lambda x: np.zeros(m)), (lambda x: np.zeros((m, m)))
        surf = GraphHypersurface(chart, f, None if p["fd"] else grad, None if p["fd"] else hess)
        u = rng.standard_normal((p["points"], m))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        pts = u * (p["radius"] * rng.random(p["points"]) ** (1 / m))[:, None]
    Hs = np.array([graph_geometry(chart, surf, x).H for x in pts])
    err = float(np.abs(Hs - expected).max()) if expected is not None else None
    tol = 1e-4 if (p["fd"] or p["surface"] == "grid") else 1e-8
    verdict = Verdict.PASS if err is None or err <= tol else Verdict.CONCLUSION_FAILURE
    rep = VerificationReport("graph_mean_curvature", verdict, err,
                             {"points": len(pts), "H_min": float(Hs.min()), "H_max": float(Hs.max()),
                              "expected_H": expected}, {**p, "tol": tol}, cfg.seed)
    return [rep], {"H": Hs}, None


def run_busemann(cfg: ExperimentConfig):
    from .modelspace import (BusemannEvaluator, busemann_inequality_suite, busemann_monotone_report,
                             named_line, parse_model, read_points_csv, strip_grid)

    p = cfg.params
    model = parse_model(p["model"])
    line = named_line(model, p["line"])
    if p["points"] is not None:
        try:
            pts = read_points_csv(Path(p["points"]), model)
        except (OSError, ValueError) as exc:
            raise ConfigError(str(exc), field="params.points") from None
    else:
        if model.is_strip and p["t_max"] >= math.pi / 2:
            raise ConfigError("t_max must stay below pi/2 on the strip", field="params.t_max")
        pts = strip_grid(model, p["n_x"], p["n_t"], p["x_max"], p["t_max"])
    plus = BusemannEvaluator(model, line, 1)
    minus = BusemannEvaluator(model, line, -1)
    reports = [busemann_monotone_report(plus, pts), busemann_monotone_report(minus, pts)]
    if not all(r.verdict is Verdict.PASS for r in reports):
        return reports, {}, None
    bp, bm = plus.evaluate(pts), minus.evaluate(pts)
    t = pts[:, -1]
    err_t = float(np.abs(bp - t).max())
    err_sum = float(np.abs(bp + bm).max())
    ok = err_t < p["tol"] and err_sum < 2 * p["tol"]
    reports.append(VerificationReport("busemann_table", Verdict.PASS if ok else Verdict.CONCLUSION_FAILURE, err_t,
                                      {"max_abs_b_plus_minus_t": err_t, "max_abs_b_plus_plus_b_minus": err_sum,
                                       "points": len(pts)}, {"model": model.name, "line": p["line"], "tol": p["tol"]},
                                      cfg.seed))
    reports.append(busemann_inequality_suite(model, line, pts, p["pairs"], cfg.seed))
    table = {"columns": [f"x{k}" for k in range(1, model.n)] + ["t", "b_plus", "b_minus"],
             "rows": np.column_stack([pts, bp, bm])}
    if "table" in cfg.output:
        lines = [",".join(table["columns"])]
        lines += [",".join(repr(float(v)) for v in row) for row in table["rows"]]
        Path(cfg.output["table"]).write_text("\n".join(lines) + "\n")
    return reports, {"table": table}, None


def run_spheres(cfg: ExperimentConfig):
    from .modelspace import geodesic_sphere, parse_model

    p = cfg.params
    model = parse_model(p["model"])
    base = np.zeros(model.n) if p["base"] is None else np.asarray(p["base"], float)
    if base.shape != (model.n,):
        raise ConfigError(f"base needs {model.n} coordinates", field="params.base")
    eta = np.zeros(model.n)
    eta[-1] = 1.0
    reports = []
    for r in p["radii"]:
        try:
            res = geodesic_sphere(model, eta, float(r), base, p["h_fd"])
        except ValueError as exc:
            raise ConfigError(str(exc), field="params.radii") from None
        reports.append(res.report(p["tol"]))
    return reports, {}, None


def run_splitting(cfg: ExperimentConfig):
    from .modelspace import WarpedStrip, splitting_map_check

    p = cfg.params
    xs = np.linspace(-p["x_max"], p["x_max"], p["n_x"])
    ts = np.linspace(-p["t_max"], p["t_max"], p["n_t"])
    return [splitting_map_check(WarpedStrip("flat", 1), xs, ts, tol=p["tol"])], {}, None


def _metric_and_point(p):
    from .curvature import builtin_metric

    metric = builtin_metric(p["metric"], p["n"])
    point = np.asarray(p["point"] if p["point"] is not None else _default_point(p["n"]), float)
    if point.shape != (p["n"],):
        raise ConfigError(f"point needs {p['n']} coordinates", field="params.point")
    return metric, point


def run_curvature(cfg: ExperimentConfig):
    from .curvature import bianchi_residuals, curvature

    p = cfg.params
    metric, x = _metric_and_point(p)
    b = curvature(metric, x)
    bian = bianchi_residuals(metric, x)
    witness = {"ricci_tt": float(b.ricci[-1, -1]), "scalar": b.scalar, "residuals": b.residuals, "bianchi": bian}
    verdict = Verdict.PASS
    residual = None
    if p["metric"] in ("ads-strip", "strip-flat"):
        residual = abs(b.ricci[-1, -1] - (p["n"] - 1))
        witness["expected_ricci_tt"] = p["n"] - 1
        verdict = Verdict.PASS if residual <= 1e-6 else Verdict.CONCLUSION_FAILURE
    rep = VerificationReport("curvature", verdict, residual, witness, {"metric": metric.name, "x": x}, cfg.seed)
    if "tensors" in cfg.output:
        Path(cfg.output["tensors"]).write_text(b.to_json() + "\n")
    return [rep], {"tensors": b.to_dict()}, None


def run_weyl(cfg: ExperimentConfig):
    from .curvature import (CurvatureError, conformal_transform_check, curvature, product_norm_decomposition,
                            weyl_coefficients, weyl_norm_sq)

    p = cfg.params
    metric, x = _metric_and_point(p)
    b = curvature(metric, x)
    nrm = weyl_norm_sq(b)
    reports = [VerificationReport("weyl_norm", Verdict.PASS, nrm, {"weyl_norm_sq": nrm}, {"metric": metric.name,
                                                                                        "x": x}, cfg.seed)]
    reports.append(conformal_transform_check(metric, float(p["lambda"]), x, tol=p["tol"]))
    a, bb = weyl_coefficients(p["n"])
    a = a if p["a"] is None else p["a"]
    bb = bb if p["b"] is None else p["b"]
    try:
        reports.append(product_norm_decomposition(metric, x, a, bb, p["tol"]))
    except CurvatureError as exc:
        reports.append(VerificationReport("product_norm_decomposition", Verdict.PASS, None, {"skipped": str(exc)},
                                          {"metric": metric.name}, cfg.seed))
    return reports, {}, None


RUNNERS = {
    "constants": run_constants,
    "verify-operator": run_verify_operator,
    "max-principle": run_max_principle,
    "graph-geometry": run_graph_geometry,
    "busemann": run_busemann,
    "spheres": run_spheres,
    "splitting": run_splitting,
    "curvature": run_curvature,
    "weyl": run_weyl,
}


# Execution ------------------------------------------------------------------------------------


def execute(cfg: ExperimentConfig):
    """Run a scenario; returns ``(envelope, exit_code)``."""
    from .principle import derive_constants

    reports, data, ledger = RUNNERS[cfg.scenario](cfg)
    if ledger is None:
        lp = cfg.ledger
        ledger = derive_constants(lp["m"], lp["C_E"], lp["C_S"], lp["r0"])
    if hasattr(ledger, "to_dict"):
        ledger = ledger.to_dict()
    verdict = worst(*(r.verdict for r in reports))
    envelope = {
        "schema": SCHEMA,
        "scenario": cfg.scenario,
        "seed": cfg.seed,
        "config": cfg.echo(),
        "ledger": ledger,
        "verdict": verdict.value,
        "reports": [r.to_dict() for r in reports],
        "data": data,
    }
    code = {Verdict.CONCLUSION_FAILURE: EXIT_CONCLUSION, Verdict.NUMERICAL_QUALITY: EXIT_NUMERICAL}.get(verdict,
                                                                                                      EXIT_OK)
    return envelope, code


def _flag(key: str) -> str:
    return "--" + FLAG_NAMES.get(key, key.lower().replace("_", "-"))


def _list_arg(text: str):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _bool_arg(text: str):
    if text.lower() in ("1", "true", "yes", "on"):
        return True
    if text.lower() in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _num_arg(text: str):
    if "/" in text:
        return text
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    return int(v) if v.is_integer() and "." not in text and "e" not in text.lower() else v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maxlab", description="Numerical checks for maximum principles, "
                                     "Lorentzian graphs and model spacetimes.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the scenario described by a TOML or JSON config")
    run.add_argument("config", help="config file (.toml or .json)")
    run.add_argument("--out", help="write the JSON report here instead of stdout")
    for name, schema in cfgmod.SCENARIOS.items():
        sp = sub.add_parser(name, help=f"{name} scenario")
        for key, (typ, _default, _ok) in schema.items():
            kind = {str: str, int: int, bool: _bool_arg, list: _list_arg}.get(typ, _num_arg)
            sp.add_argument(_flag(key), dest=f"p_{key}", type=kind, default=None, metavar=key.upper())
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", help="write the JSON report here instead of stdout")
        sp.add_argument("--table", help="CSV output for tabular results (busemann)")
        sp.add_argument("--tensors", help="JSON tensor dump (curvature)")
    return parser


def config_from_args(args) -> ExperimentConfig:
    if args.command == "run":
        return cfgmod.load_config(args.config)
    params = {k[2:]: v for k, v in vars(args).items() if k.startswith("p_") and v is not None}
    raw = {"scenario": args.command, "params": params}
    if args.seed is not None:
        raw["seed"] = args.seed
    output = {k: getattr(args, k) for k in ("table", "tensors") if getattr(args, k, None)}
    if output:
        raw["output"] = output
    return cfgmod.build_config(raw)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        cfg = config_from_args(args)
        envelope, code = execute(cfg)
    except ConfigError as exc:
        print(f"maxlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    text = dumps(envelope) + "\n"
    out = args.out or cfg.output.get("report")
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
