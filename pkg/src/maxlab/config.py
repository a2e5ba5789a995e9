"""Experiment configuration: one scenario per TOML or JSON file.

Example::

    scenario = "busemann"
    seed = 3

    [params]
    model = "strip"
    line = "center"
    n_x = 20
    n_t = 20

    [output]
    report = "busemann.json"
    table = "busemann.csv"

Unknown keys are rejected so typos do not silently fall back to defaults.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

SEED_ENV = "MAXLAB_SEED"


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, field: str | None = None, source=None):
        where = []
        if source is not None:
            where.append(str(source))
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__((": ".join([", ".join(where), message])) if where else message)
        self.line = line
        self.field = field


def load_structured(path) -> dict:
    """Parse a ``.toml`` or ``.json`` file into a dict, with line diagnostics."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", source=path) from None
    return parse_structured(text, "json" if path.suffix.lower() == ".json" else "toml", path)


def parse_structured(text: str, fmt: str = "toml", source=None) -> dict:
    if fmt == "json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(exc.msg, line=exc.lineno, source=source) from None
    else:
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            m = re.search(r"\(at line (\d+)", str(exc))
            msg = re.sub(r"\s*\(at line \d+, column \d+\)", "", str(exc))
            raise ConfigError(msg, line=int(m.group(1)) if m else None, source=source) from None
    if not isinstance(data, dict):
        raise ConfigError("top level must be a table", source=source)
    return data


# Scenario parameter schemas: name -> (type, default, validator or None) ----------------------------

def _pos(v):
    return v > 0


def _ge1(v):
    return v >= 1


def _nonneg(v):
    return v >= 0


def _unit_open(v):
    return 0 < v < 1


NUM = (int, float)
# exact inputs may also be given as rational strings such as "1/3"
RAT = (int, float, str)


def _rational(test):
    def check(v):
        try:
            return test(Fraction(str(v)) if isinstance(v, str) else v)
        except (ValueError, ZeroDivisionError):
            return False
    return check


LEDGER_PARAMS = {
    "m": (int, 2, _ge1),
    "C_E": (RAT, 1, _rational(_ge1)),
    "C_S": (RAT, 0, _rational(_nonneg)),
    "r0": (RAT, "1/3", _rational(lambda v: 0 < 3 * v <= 1)),
}

SCENARIOS: dict[str, dict[str, tuple]] = {
    "constants": {**LEDGER_PARAMS, "alpha": (RAT, None, _rational(_pos))},
    "verify-operator": {
        "operator": (str, "flat-mean-curvature", None),
        "chart": (str, None, None),
        "m": (int, 2, _ge1),
        "rho": (NUM, 0.7, _unit_open),
        "Bd": (NUM, 1.0, _pos),
        "K": (NUM, 0.5, _pos),
        "C_E": (NUM, None, _ge1),
        "samples": (int, 400, _pos),
        "pairs": (int, 200, _pos),
        "quad_order": (int, 16, _pos),
    },
    "max-principle": {
        "instance": (str, "plane-vs-hyperboloid", None),
        "u0": (str, None, None),
        "u1": (str, None, None),
        "operator": (str, "flat-mean-curvature", None),
        "C_E": (NUM, 4.0, _ge1),
        "C_S": (NUM, 1.0, _nonneg),
        "H0_window": (list, [-1e300, 1e300], lambda v: len(v) == 2 and v[0] <= v[1]),
    },
    "graph-geometry": {
        "chart": (str, "minkowski n=3", None),
        "surface": (str, "hyperboloid", None),
        "grid": (str, None, None),
        "points": (int, 100, _pos),
        "radius": (NUM, 0.8, _pos),
        "fd": (bool, False, None),
    },
    "busemann": {
        "model": (str, "strip", None),
        "line": (str, "center", None),
        "points": (str, None, None),
        "n_x": (int, 20, _pos),
        "n_t": (int, 20, _pos),
        "x_max": (NUM, 0.6, _pos),
        "t_max": (NUM, 1.2, _pos),
        "pairs": (int, 1000, _pos),
        "tol": (NUM, 1e-3, _pos),
    },
    "spheres": {
        "model": (str, "strip", None),
        "radii": (list, [0.5235987755982988, 0.7853981633974483, 1.0471975511965976], None),
        "base": (list, None, None),
        "h_fd": (NUM, 1e-3, _pos),
        "tol": (NUM, 1e-4, _pos),
    },
    "splitting": {
        "n_x": (int, 5, _pos),
        "n_t": (int, 9, _pos),
        "x_max": (NUM, 1.0, _pos),
        "t_max": (NUM, 1.2, lambda v: 0 < v < 1.5707963267948966),
        "tol": (NUM, 1e-6, _pos),
    },
    "curvature": {
        "metric": (str, "ads-strip", None),
        "n": (int, 4, lambda v: v >= 2),
        "point": (list, None, None),
    },
    "weyl": {
        "metric": (str, "product-perturbed", None),
        "n": (int, 4, lambda v: v >= 4),
        "point": (list, None, None),
        "lambda": (NUM, 2.0, _pos),
        "a": (NUM, None, None),
        "b": (NUM, None, None),
        "tol": (NUM, 1e-8, _pos),
    },
}

TOP_LEVEL = {"scenario", "seed", "params", "output", "ledger"}


@dataclass
class ExperimentConfig:
    scenario: str
    params: dict[str, Any]
    seed: int = 0
    ledger: dict[str, Any] = field(default_factory=dict)
    output: dict[str, str] = field(default_factory=dict)
    source: str | None = None

    def echo(self) -> dict:
        return {"scenario": self.scenario, "seed": self.seed, "params": self.params, "ledger": self.ledger}


def _check_params(section: dict, schema: dict, prefix: str, source) -> dict:
    unknown = sorted(set(section) - set(schema))
    if unknown:
        raise ConfigError(f"unknown parameter(s) {unknown}; allowed: {sorted(schema)}",
                          field=f"{prefix}.{unknown[0]}", source=source)
    out = {}
    for key, (typ, default, ok) in schema.items():
        if key not in section:
            out[key] = default
            continue
        val = section[key]
        if (isinstance(val, bool) and typ is not bool) or not isinstance(val, typ):
            name = "number" if typ in (NUM, RAT) else typ.__name__
            raise ConfigError(f"expected {name}, got {type(val).__name__}", field=f"{prefix}.{key}", source=source)
        if ok is not None and not ok(val):
            raise ConfigError(f"value {val!r} outside the documented domain", field=f"{prefix}.{key}",
                              source=source)
        out[key] = val
    return out


def build_config(raw: dict, source=None, env=None) -> ExperimentConfig:
    env = os.environ if env is None else env
    extra = sorted(set(raw) - TOP_LEVEL)
    if extra:
        raise ConfigError(f"unknown top-level key(s) {extra}", field=extra[0], source=source)
    scenario = raw.get("scenario")
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; choose from {sorted(SCENARIOS)}", field="scenario",
                          source=source)
    params = raw.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("must be a table", field="params", source=source)
    params = _check_params(params, SCENARIOS[scenario], "params", source)
    ledger = _check_params(raw.get("ledger", {}), LEDGER_PARAMS, "ledger", source)
    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a nonnegative integer", field="seed", source=source)
    if env.get(SEED_ENV):
        try:
            seed = int(env[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV}={env[SEED_ENV]!r} is not an integer") from None
    output = raw.get("output", {})
    if not isinstance(output, dict) or not all(isinstance(v, str) for v in output.values()):
        raise ConfigError("output must map names to paths", field="output", source=source)
    _check_references(scenario, params, source)
    return ExperimentConfig(scenario, params, seed, ledger, dict(output), None if source is None else str(source))


def _check_references(scenario: str, params: dict, source) -> None:
    """Every built-in name a scenario refers to must exist."""
    from .curvature import BUILTIN_METRICS
    from .lorgraph import ChartError, parse_chart
    from .modelspace import parse_model
    from .quasilinear import BUILTIN_OPERATORS

    def fail(key, msg):
        raise ConfigError(msg, field=f"params.{key}", source=source)

    if params.get("chart") is not None:
        try:
            parse_chart(params["chart"])
        except ChartError as exc:
            fail("chart", str(exc))
    if "model" in params:
        try:
            parse_model(params["model"])
        except ValueError as exc:
            fail("model", str(exc))
    if scenario == "verify-operator" and params["chart"] is None and params["operator"] not in BUILTIN_OPERATORS:
        fail("operator", f"unknown operator {params['operator']!r}; choose from {sorted(BUILTIN_OPERATORS)}")
    if scenario == "max-principle":
        if params["instance"] not in ("plane-vs-hyperboloid", "fabricated-gap", "grids"):
            fail("instance", "choose 'plane-vs-hyperboloid', 'fabricated-gap' or 'grids'")
        if params["instance"] == "grids" and (params["u0"] is None or params["u1"] is None):
            fail("u0", "the 'grids' instance needs u0 and u1 CSV paths")
    if scenario in ("curvature", "weyl") and params["metric"] not in BUILTIN_METRICS:
        fail("metric", f"unknown metric {params['metric']!r}; choose from {sorted(BUILTIN_METRICS)}")
    if scenario == "graph-geometry" and params["surface"] not in ("hyperboloid", "plane", "grid"):
        fail("surface", "choose 'hyperboloid', 'plane' or 'grid'")


def load_config(path, env=None) -> ExperimentConfig:
    return build_config(load_structured(path), path, env)
