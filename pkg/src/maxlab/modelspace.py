"""Model spacetimes with computable Lorentzian distance.

Two variants:

* ``Minkowski(n)``: closed-form distance.
* ``WarpedStrip(fiber, dim)``: ``-dt^2 + cos(t)^2 g_N`` on ``|t| < pi/2``.
  Geodesics of a warped product project to fiber geodesics, so the distance
  between two points only depends on their times and the fiber distance ``D``
  between their feet.  With the conformal time ``u = ln(sec t + tan t)`` the
  metric is ``sech(u)^2 (-du^2 + g_N)``; a pair is timelike iff ``D < du`` and
  the proper time comes from the shooting kernel in :mod:`maxlab.kernels`.

Points are arrays ``(x^1, ..., x^k, t)`` with the time coordinate last.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from . import kernels
from .lorgraph import GraphGeometry, GraphHypersurface, MetricChart, christoffels, graph_geometry, minkowski, warped
from .report import VerificationReport, Verdict

HALF_PI = 0.5 * math.pi
BUSEMANN_K_MAX = 20
MONOTONE_TOL = 1e-12
ODE_TOL = 1e-12


class ShootingError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


class NumericalQualityError(RuntimeError):
    def __init__(self, message: str, residual: float | None = None, witness: dict | None = None):
        super().__init__(message)
        self.residual = residual
        self.witness = witness or {}


# Models ----------------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelSpacetime:
    kind: str
    dim: int
    fiber: str = "flat"

    def __post_init__(self):
        if self.kind not in ("minkowski", "strip"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError("spatial dimension must be >= 1")
        if self.kind == "strip" and self.fiber not in ("flat", "hyperbolic"):
            raise ValueError(f"unknown fiber {self.fiber!r}; choose 'flat' or 'hyperbolic'")

    @property
    def n(self) -> int:
        return self.dim + 1

    @property
    def is_strip(self) -> bool:
        return self.kind == "strip"

    @property
    def name(self) -> str:
        if self.is_strip:
            return f"strip fiber={self.fiber} dim={self.dim}"
        return f"minkowski n={self.n}"

    def chart(self) -> MetricChart:
        return warped(self.fiber, self.dim) if self.is_strip else minkowski(self.n)

    def time_range(self):
        return (-HALF_PI, HALF_PI) if self.is_strip else (-math.inf, math.inf)

    def contains(self, p) -> bool:
        p = np.asarray(p, float)
        if p.shape != (self.n,) or not np.all(np.isfinite(p)):
            return False
        if not self.is_strip:
            return True
        ok = abs(p[-1]) < HALF_PI
        if self.fiber == "hyperbolic":
            ok = ok and float(p[:-1] @ p[:-1]) < 1.0
        return bool(ok)

    def fiber_distance(self, x, y) -> np.ndarray:
        """Distance in ``g_N`` (Euclidean for Minkowski) between fiber points."""
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        diff = np.sqrt(np.sum((x - y) ** 2, axis=-1))
        if self.is_strip and self.fiber == "hyperbolic":
            # 2 asinh form of the Poincare-ball distance; stable for nearby points
            qx = 1.0 - np.sum(x * x, axis=-1)
            qy = 1.0 - np.sum(y * y, axis=-1)
            return 2.0 * np.arcsinh(diff / np.sqrt(qx * qy))
        return diff

    def to_dict(self):
        return {"kind": self.kind, "dim": self.dim, "fiber": self.fiber if self.is_strip else None}


def Minkowski(n: int = 3) -> ModelSpacetime:
    if n < 2:
        raise ValueError("Minkowski space needs n >= 2")
    return ModelSpacetime("minkowski", n - 1)


def WarpedStrip(fiber: str = "hyperbolic", dim: int = 2) -> ModelSpacetime:
    return ModelSpacetime("strip", dim, fiber)


def parse_model(spec: str) -> ModelSpacetime:
    """``"strip"``, ``"strip fiber=flat dim=1"``, ``"minkowski n=3"``."""
    words = spec.split()
    if not words:
        raise ValueError("empty model declaration")
    kind, opts = words[0], {}
    for w in words[1:]:
        key, sep, val = w.partition("=")
        if not sep:
            raise ValueError(f"bad model option {w!r} (expected key=value)")
        opts[key] = val
    allowed = {"minkowski": {"n"}, "strip": {"fiber", "dim"}}
    if kind not in allowed:
        raise ValueError(f"unknown model {kind!r}; choose 'minkowski' or 'strip'")
    extra = set(opts) - allowed[kind]
    if extra:
        raise ValueError(f"unknown options {sorted(extra)} for model {kind!r}")
    if kind == "minkowski":
        return Minkowski(int(opts.get("n", 3)))
    return WarpedStrip(opts.get("fiber", "hyperbolic"), int(opts.get("dim", 2)))


def conformal_time(t):
    """``u = ln(sec t + tan t)``, written as ``asinh(tan t)``."""
    return np.arcsinh(np.tan(t))


def from_conformal_time(u):
    return np.arctan(np.sinh(u))


# Distance --------------------------------------------------------------------------------


def causal_relation(model: ModelSpacetime, p, q) -> np.ndarray:
    """+1 where ``p << q`` (timelike future), 0 for null, -1 otherwise."""
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    D = model.fiber_distance(p[..., :-1], q[..., :-1])
    if model.is_strip:
        du = conformal_time(q[..., -1]) - conformal_time(p[..., -1])
    else:
        du = q[..., -1] - p[..., -1]
    gap = du - D
    scale = 1e-14 * np.maximum(1.0, np.abs(du))
    return np.where(gap > scale, 1, np.where(np.abs(gap) <= scale, 0, -1))


def lorentz_distance(model: ModelSpacetime, p, q):
    """``d(p, q)``: supremal proper time of future causal curves from ``p`` to
    ``q``; 0 unless ``p << q``.  Broadcasts over leading axes."""
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    if p.shape[-1] != model.n or q.shape[-1] != model.n:
        raise ValueError(f"points must have {model.n} coordinates")
    p, q = np.broadcast_arrays(p, q)
    shape = p.shape[:-1]
    P = p.reshape(-1, model.n)
    Q = q.reshape(-1, model.n)
    D = model.fiber_distance(P[:, :-1], Q[:, :-1])
    out = np.zeros(P.shape[0])
    if not model.is_strip:
        dt = Q[:, -1] - P[:, -1]
        sq = dt * dt - D * D
        ok = (dt > 0) & (sq > 0)
        out[ok] = np.sqrt(sq[ok])
    else:
        if np.any(np.abs(P[:, -1]) >= HALF_PI) or np.any(np.abs(Q[:, -1]) >= HALF_PI):
            raise ValueError("strip points need |t| < pi/2")
        u0 = conformal_time(P[:, -1])
        u1 = conformal_time(Q[:, -1])
        ok = (u1 - u0 - D) > 1e-14 * np.maximum(1.0, np.abs(u1 - u0))
        if np.any(ok):
            tau = kernels.strip_distance(u0[ok], u1[ok], D[ok])
            dt = Q[ok, -1] - P[ok, -1]
            # proper time never exceeds the coordinate-time gap
            bad = ~np.isfinite(tau) | (tau < -1e-12) | (tau > dt + 1e-12)
            if np.any(bad):
                j = int(np.argmax(bad))
                raise ShootingError("strip shooting did not converge", float(abs(tau[j] - dt[j])))
            out[ok] = np.clip(tau, 0.0, dt)
    return float(out[0]) if shape == () else out.reshape(shape)


# Geodesics -------------------------------------------------------------------------------


@dataclass
class TimelikeGeodesic:
    model: ModelSpacetime
    gamma: Callable[[float], np.ndarray]
    domain: tuple
    arclength: bool = True
    name: str = "geodesic"

    def __call__(self, s) -> np.ndarray:
        s = float(s)
        if not self.domain[0] < s < self.domain[1]:
            raise ValueError(f"parameter {s} outside {self.domain}")
        return np.asarray(self.gamma(s), float)

    def speed_check(self, samples: int = 17, h: float = 1e-5, tol: float = 1e-8) -> VerificationReport:
        """``g(gamma', gamma') = -1`` at interior samples (centred differences)."""
        lo, hi = self.domain
        lo = max(lo, -10.0) + 10 * h
        hi = min(hi, 10.0) - 10 * h
        chart = self.model.chart()
        worst_res = 0.0
        for s in np.linspace(lo, hi, samples):
            v = (self(s + h) - self(s - h)) / (2 * h)
            worst_res = max(worst_res, abs(float(v @ chart.metric(self(s)) @ v) + 1.0))
        verdict = Verdict.PASS if (not self.arclength or worst_res <= tol) else Verdict.CONCLUSION_FAILURE
        return VerificationReport("geodesic_speed", verdict, worst_res, {"samples": samples},
                                  {"geodesic": self.name, "h": h, "tol": tol})

    def to_csv(self, s_values, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["s"] + [f"x{k}" for k in range(1, self.model.n)] + ["t"])
        for s in s_values:
            w.writerow([repr(float(s))] + [repr(float(v)) for v in self(s)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def vertical_line(model: ModelSpacetime, foot=None) -> TimelikeGeodesic:
    """``gamma(s) = (foot, s)``; a maximizing unit-speed line in both models."""
    foot = np.zeros(model.dim) if foot is None else np.asarray(foot, float).reshape(model.dim)
    if not model.contains(np.append(foot, 0.0)):
        raise ValueError(f"foot {foot} is not a fiber point of {model.name}")
    return TimelikeGeodesic(model, lambda s: np.append(foot, s), model.time_range(),
                            name=f"vertical foot={foot.tolist()}")


def named_line(model: ModelSpacetime, name: str) -> TimelikeGeodesic:
    if name == "center":
        return vertical_line(model)
    raise ValueError(f"unknown line {name!r}; only 'center' is built in")


def geodesic_flow(model: ModelSpacetime, p, v, s_end: float, rtol: float = ODE_TOL):
    """Integrate the geodesic equation in the model chart from ``(p, v)``."""
    chart = model.chart()
    n = model.n

    def rhs(_, y):
        Gam = christoffels(chart, y[:n])
        return np.concatenate([y[n:], -np.einsum("abc,b,c->a", Gam, y[n:], y[n:])])

    sol = solve_ivp(rhs, (0.0, s_end), np.concatenate([p, v]), method="DOP853", rtol=rtol, atol=rtol)
    if not sol.success:
        raise ShootingError(f"geodesic integration failed: {sol.message}", float("nan"))
    return sol.y[:n, -1], sol.y[n:, -1]


def exp_map(model: ModelSpacetime, p, v) -> np.ndarray:
    """``exp_p(v)``; closed form along vertical directions and in Minkowski."""
    p = np.asarray(p, float)
    v = np.asarray(v, float)
    if not model.is_strip:
        return p + v
    if np.all(v[:-1] == 0):
        return p + v
    return geodesic_flow(model, p, v, 1.0)[0]


# Busemann functions ----------------------------------------------------------------------


def busemann_schedule(model: ModelSpacetime, k_max: int = BUSEMANN_K_MAX, scale: float = 1.0) -> np.ndarray:
    k = np.arange(k_max + 1)
    if model.is_strip:
        return HALF_PI - (math.pi / 4) * 2.0 ** (-k)
    return scale * 2.0 ** k


def aitken(seq) -> float:
    """Aitken's delta-squared on the last three terms; falls back to the last
    term when the tail is not geometrically contracting."""
    s = np.asarray(seq, float)
    if s.size < 3:
        return float(s[-1])
    s0, s1, s2 = s[-3:]
    d1, d2 = s1 - s0, s2 - s1
    den = d2 - d1
    if d1 == 0 or den == 0 or not 0 < d2 / d1 < 1:
        return float(s2)
    return float(s2 - d2 * d2 / den)


@dataclass
class BusemannEvaluator:
    """``b(x) = lim_r (r - d(x, gamma(r)))`` (sign=+1) or
    ``lim_r (r - d(gamma(-r), x))`` (sign=-1) along a geometric schedule."""

    model: ModelSpacetime
    line: TimelikeGeodesic
    sign: int = 1
    k_max: int = BUSEMANN_K_MAX
    monotone_tol: float = MONOTONE_TOL
    cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")

    def schedule_for(self, X: np.ndarray) -> np.ndarray:
        scale = 1.0
        if not self.model.is_strip:
            scale = 1.0 + float(np.max(np.abs(X))) if X.size else 1.0
        return busemann_schedule(self.model, self.k_max, scale)

    def sequences(self, points):
        """``(r, b_r)`` with ``b_r = nan`` where the pair is not timelike."""
        X = np.atleast_2d(np.asarray(points, float))
        r = self.schedule_for(X)
        anchors = np.stack([self.line(self.sign * rk) for rk in r])
        P = np.repeat(X, r.size, axis=0)
        A = np.tile(anchors, (X.shape[0], 1))
        if self.sign > 0:
            rel = causal_relation(self.model, P, A)
            d = lorentz_distance(self.model, P, A)
        else:
            rel = causal_relation(self.model, A, P)
            d = lorentz_distance(self.model, A, P)
        b = np.where(rel > 0, np.tile(r, X.shape[0]) - d, np.nan).reshape(X.shape[0], r.size)
        return r, b

    def evaluate(self, points) -> np.ndarray:
        X = np.atleast_2d(np.asarray(points, float))
        keys = [tuple(x) for x in X]
        missing = [i for i, k in enumerate(keys) if k not in self.cache]
        if missing:
            r, B = self.sequences(X[missing])
            for i, row in zip(missing, B):
                self.cache[keys[i]] = self._limit(X[i], row)
        return np.array([self.cache[k][0] for k in keys])

    def __call__(self, x) -> float:
        return float(self.evaluate(np.asarray(x, float)[None])[0])

    def tail(self, x):
        """Cached ``(b, b_r tail)`` for an already evaluated point."""
        self(x)
        return self.cache[tuple(np.asarray(x, float))]

    def _limit(self, x, row):
        tail = row[np.isfinite(row)]
        if tail.size < 3:
            raise NumericalQualityError(f"fewer than 3 timelike schedule entries at {x.tolist()}",
                                        witness={"point": x, "entries": int(tail.size)})
        rise = float(np.max(np.diff(tail)))
        if rise > self.monotone_tol:
            raise NumericalQualityError(f"b_r not monotone at {x.tolist()}", rise,
                                        {"point": x, "tail": tail})
        return aitken(tail), tail


def busemann(model: ModelSpacetime, line: TimelikeGeodesic, x, sign: int = 1) -> float:
    return BusemannEvaluator(model, line, sign)(x)


def busemann_monotone_report(evaluator: BusemannEvaluator, points) -> VerificationReport:
    """Evaluate on ``points`` and report the largest rise of ``r -> b_r``."""
    try:
        vals = evaluator.evaluate(points)
    except NumericalQualityError as exc:
        return VerificationReport("busemann_monotone", Verdict.NUMERICAL_QUALITY, exc.residual,
                                  exc.witness, {"sign": evaluator.sign}, message=str(exc))
    rise = max(float(np.max(np.diff(evaluator.cache[tuple(p)][1]), initial=-np.inf))
               for p in np.atleast_2d(points))
    return VerificationReport("busemann_monotone", Verdict.PASS, rise,
                              {"points": len(vals), "max_rise": rise},
                              {"sign": evaluator.sign, "tol": evaluator.monotone_tol})


def busemann_inequality_suite(model: ModelSpacetime, line: TimelikeGeodesic, points, n_pairs: int = 1000,
                              seed: int = 0, tol: float = 1e-6) -> VerificationReport:
    """Reverse-Lipschitz ``b(q) >= b(p) + d(p, q)`` on causal pairs for both
    Busemann functions, and ``b+ + b- >= 0`` pointwise."""
    X = np.atleast_2d(np.asarray(points, float))
    bp = BusemannEvaluator(model, line, 1).evaluate(X)
    bm = BusemannEvaluator(model, line, -1).evaluate(X)
    rng = np.random.default_rng(seed)
    i = rng.integers(0, len(X), n_pairs)
    j = rng.integers(0, len(X), n_pairs)
    # orient every pair so that the earlier point comes first
    swap = X[i, -1] > X[j, -1]
    i, j = np.where(swap, j, i), np.where(swap, i, j)
    causal = causal_relation(model, X[i], X[j]) > 0
    i, j = i[causal], j[causal]
    d = lorentz_distance(model, X[i], X[j]) if i.size else np.zeros(0)
    slack_p = bp[j] - bp[i] - d
    slack_m = bm[i] - bm[j] - d
    sum_pm = bp + bm
    viol = int(np.count_nonzero(slack_p < -tol) + np.count_nonzero(slack_m < -tol)
               + np.count_nonzero(sum_pm < -tol))
    worst_slack = float(min(slack_p.min(initial=np.inf), slack_m.min(initial=np.inf)))
    witness = {
        "points": len(X), "causal_pairs": int(i.size), "violations": viol,
        "min_lipschitz_slack": worst_slack if np.isfinite(worst_slack) else None,
        "min_b_sum": float(sum_pm.min()), "max_abs_b_sum": float(np.abs(sum_pm).max()),
    }
    verdict = Verdict.PASS if viol == 0 else Verdict.CONCLUSION_FAILURE
    return VerificationReport("busemann_inequalities", verdict, float(-min(worst_slack, sum_pm.min())),
                              witness, {"model": model.name, "n_pairs": n_pairs, "tol": tol}, seed)


def busemann_table_csv(evaluator: BusemannEvaluator, points, path=None) -> str:
    """Rows: point coordinates, ``b_r`` along the schedule, extrapolated ``b``."""
    X = np.atleast_2d(np.asarray(points, float))
    r, B = evaluator.sequences(X)
    vals = evaluator.evaluate(X)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    coords = [f"x{k}" for k in range(1, evaluator.model.n)] + ["t"]
    w.writerow(coords + [f"b_r={rk!r}" for rk in r] + ["b"])
    for x, row, b in zip(X, B, vals):
        w.writerow([repr(float(v)) for v in x] + ["" if not np.isfinite(v) else repr(float(v)) for v in row]
                   + [repr(float(b))])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_points_csv(source, model: ModelSpacetime) -> np.ndarray:
    """Points from CSV: an optional header row, then ``n`` numeric columns."""
    if isinstance(source, Path) or ("\n" not in str(source) and "," not in str(source)):
        text = Path(source).read_text()
    else:
        text = str(source)
    rows = []
    for n_line, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or row[0].lstrip().startswith("#"):
            continue
        try:
            vals = [float(v) for v in row]
        except ValueError:
            if not rows and n_line == 1:
                continue
            raise ValueError(f"line {n_line}: non-numeric value") from None
        if len(vals) != model.n:
            raise ValueError(f"line {n_line}: expected {model.n} columns, got {len(vals)}")
        if not model.contains(vals):
            raise ValueError(f"line {n_line}: point {vals} is outside {model.name}")
        rows.append(vals)
    if not rows:
        raise ValueError("no points found")
    return np.array(rows)


def strip_grid(model: ModelSpacetime, n_x: int = 20, n_t: int = 20, x_max: float = 0.6,
               t_max: float = 1.2) -> np.ndarray:
    """``n_x * n_t`` points ``(s e_1, t)``; with the central line this is the
    image of ``Phi(x, t)`` over a fiber geodesic through the foot."""
    s = np.linspace(-x_max, x_max, n_x)
    t = np.linspace(-t_max, t_max, n_t)
    S, T = np.meshgrid(s, t, indexing="ij")
    pts = np.zeros((S.size, model.n))
    pts[:, 0] = S.ravel()
    pts[:, -1] = T.ravel()
    return pts


# Lemma A style limits --------------------------------------------------------------------


def vertical_limit_distance(model: ModelSpacetime, s1, s2, tau: float) -> float:
    """``lim_{t -> pi/2} d(gamma_2(tau), gamma_1(t))`` for vertical lines with
    feet ``s1, s2``, extrapolated along the Busemann schedule."""
    if not model.is_strip:
        raise ValueError("vertical limits are defined on the strip")
    x = np.append(np.asarray(s2, float).reshape(model.dim), tau)
    ev = BusemannEvaluator(model, vertical_line(model, s1), 1)
    r, B = ev.sequences(x)
    row = B[0]
    ok = np.isfinite(row)
    if np.count_nonzero(ok) < 3:
        raise NumericalQualityError("too few timelike schedule entries")
    return aitken(r[ok] - row[ok])


# Geodesic spheres ------------------------------------------------------------------------


@dataclass
class SphereResult:
    model: ModelSpacetime
    base: np.ndarray
    center: np.ndarray
    r: float
    surface: GraphHypersurface
    geometry: GraphGeometry
    expected_H: float
    h_fd: float

    @property
    def H(self) -> float:
        return self.geometry.H

    def report(self, tol: float = 1e-4, bound_tol: float = 1e-6) -> VerificationReport:
        err = abs(self.H - self.expected_H)
        below = self.H < self.expected_H - bound_tol
        verdict = Verdict.CONCLUSION_FAILURE if (below or err > tol) else Verdict.PASS
        return VerificationReport(
            "geodesic_sphere", verdict, err,
            {"H": self.H, "expected_H": self.expected_H, "lower_bound": self.expected_H,
             "bound_violated": bool(below), "h": self.geometry.h, "center": self.center},
            {"model": self.model.name, "r": self.r, "base": self.base, "h_fd": self.h_fd, "tol": tol})


def richardson_jet(f, x, h: float):
    """Gradient and Hessian by centred differences at ``h`` and ``h/2``,
    combined to cancel the ``h^2`` error term."""
    from .lorgraph import fd_jet

    v, g1, H1 = fd_jet(f, x, h)
    _, g2, H2 = fd_jet(f, x, h / 2)
    H = (4 * H2 - H1) / 3
    return v, (4 * g2 - g1) / 3, 0.5 * (H + H.T)


def _sphere_height(model: ModelSpacetime, center, r: float):
    """``F(x)``: the time at which ``d((x, F(x)), center) = r`` on the past side."""
    xc, tc = center[:-1], center[-1]
    if not model.is_strip:
        def F(x):
            x = np.asarray(x, float)
            return float(tc - math.sqrt(r * r + float((x - xc) @ (x - xc))))
        return F
    uc = float(conformal_time(tc))

    def F(x):
        x = np.asarray(x, float)
        D = float(model.fiber_distance(x, xc))
        hi = uc - D * (1 + 1e-13) - 1e-13
        lo = hi - 60.0

        def gap(u):
            return float(kernels.strip_distance(u, uc, D)[0]) - r

        if gap(lo) <= 0:
            raise ShootingError("geodesic sphere does not reach the past boundary", gap(lo))
        u = brentq(gap, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        return float(from_conformal_time(u))

    return F


def geodesic_sphere(model: ModelSpacetime, eta, r: float, base=None, h_fd: float = 1e-3) -> SphereResult:
    """The past sphere ``{p : d(p, exp(r eta)) = r}`` as a graph ``t = F(x)``
    near the base point, with its second fundamental form at the base."""
    base = np.zeros(model.n) if base is None else np.asarray(base, float)
    eta = np.asarray(eta, float)
    chart = model.chart()
    if not model.contains(base):
        raise ValueError(f"base point {base} outside {model.name}")
    norm = float(eta @ chart.metric(base) @ eta)
    if abs(norm + 1) > 1e-10 or eta[-1] <= 0:
        raise ValueError(f"eta must be a future unit timelike vector (g(eta, eta) = {norm})")
    if model.is_strip and not 0 < r < HALF_PI:
        raise ValueError("sphere radius must lie in (0, pi/2)")
    if not r > 0:
        raise ValueError("sphere radius must be positive")
    center = exp_map(model, base, r * eta)
    if not model.contains(center):
        raise ValueError(f"exp(r eta) = {center} leaves {model.name}")
    F = _sphere_height(model, center, r)
    x0 = base[:-1]
    if abs(F(x0) - base[-1]) > 1e-9:
        raise ShootingError("base point is not on the sphere", abs(F(x0) - base[-1]))
    cache = {}

    def jet(x):
        key = tuple(np.asarray(x, float))
        if key not in cache:
            cache[key] = richardson_jet(F, np.asarray(x, float), h_fd)
        return cache[key]

    surface = GraphHypersurface(chart, F, lambda x: jet(x)[1], lambda x: jet(x)[2], h_fd)
    geo = graph_geometry(chart, surface, x0)
    expected = -1.0 / math.tan(r) if model.is_strip else -1.0 / r
    return SphereResult(model, base, center, float(r), surface, geo, expected, h_fd)


# Splitting map ---------------------------------------------------------------------------
#
# In conformal coordinates (s, u) the flat-fiber strip metric is
# sech(u)^2 (-du^2 + ds^2).  With phi = ln sech u the geodesic equations are
#     s'' = -2 phi'(u) s' u',   u'' = -phi'(u) (u'^2 + s'^2),   phi' = -tanh u.
# The variational system carries J = d(state)/dx along for the exact pullback.


def _split_rhs(_, y):
    s, u, sd, ud = y[:4]
    J = y[4:].reshape(4, 1)
    ph1 = -math.tanh(u)
    ph2 = -1.0 / math.cosh(u) ** 2
    f = np.array([sd, ud, -2 * ph1 * sd * ud, -ph1 * (ud * ud + sd * sd)])
    DF = np.array([
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, -2 * ph2 * sd * ud, -2 * ph1 * ud, -2 * ph1 * sd],
        [0.0, -ph2 * (ud * ud + sd * sd), -2 * ph1 * sd, -2 * ph1 * ud],
    ])
    return np.concatenate([f, (DF @ J).ravel()])


def normal_flow(x: float, ts) -> np.ndarray:
    """States ``(s, u, s', u', J)`` of the normal geodesic from ``(x, 0)``."""
    ts = np.asarray(ts, float)
    out = np.empty((ts.size, 8))
    y0 = np.array([x, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0])
    zero = ts == 0
    out[zero] = y0
    for side in (ts > 0, ts < 0):
        if not np.any(side):
            continue
        tt = ts[side]
        end = float(tt.max() if tt[0] > 0 else tt.min())
        sol = solve_ivp(_split_rhs, (0.0, end), y0, method="DOP853", rtol=ODE_TOL, atol=ODE_TOL,
                        dense_output=True)
        if not sol.success:
            raise ShootingError(f"normal geodesic integration failed: {sol.message}", float("nan"))
        out[side] = sol.sol(tt).T
    return out


def splitting_map(xs, ts) -> np.ndarray:
    """``Phi(x, t) = exp(t n(x))`` in conformal coordinates, shape ``(len(xs), len(ts), 2)``."""
    return np.stack([normal_flow(float(x), ts)[:, :2] for x in xs])


def _conformal_metric(u):
    c = 1.0 / math.cosh(u) ** 2
    return np.array([[c, 0.0], [0.0, -c]])


def _pullback_error(jac, pos, t):
    P = jac.T @ _conformal_metric(pos[1]) @ jac
    target = np.array([[math.cos(t) ** 2, 0.0], [0.0, -1.0]])
    return float(np.max(np.abs(P - target)))


def splitting_map_check(model: ModelSpacetime, xs, ts, fd_steps=(0.1, 0.05, 0.025), tol: float = 1e-6,
                        injectivity_tol: float = 1e-8) -> VerificationReport:
    """Pull back the metric through ``Phi`` and compare with
    ``-dt^2 + cos(t)^2 ds^2`` on a grid of ``(x, t)``.

    The analytic route uses the geodesic velocity and the variational
    (Jacobi) field; the FD route differentiates ``Phi`` itself and must show
    second-order error decay over ``fd_steps``.
    """
    if not (model.is_strip and model.fiber == "flat" and model.dim == 1):
        raise ValueError("splitting check runs on the strip with a 1-dim flat fiber")
    xs = np.asarray(xs, float)
    ts = np.asarray(ts, float)
    if np.any(np.abs(ts) >= HALF_PI):
        raise ValueError("times must satisfy |t| < pi/2")
    analytic = 0.0
    slice_err = 0.0
    pos_err = 0.0
    images = []
    for x in xs:
        st = normal_flow(x, ts)
        for k, t in enumerate(ts):
            jac = np.column_stack([st[k, 4:6], st[k, 2:4]])
            e = _pullback_error(jac, st[k, :2], t)
            analytic = max(analytic, e)
            if t == 0:
                slice_err = max(slice_err, e)
            pos_err = max(pos_err, abs(st[k, 0] - x), abs(st[k, 1] - float(conformal_time(t))))
            images.append(st[k, :2])
    fd_err = []
    for h in fd_steps:
        worst = 0.0
        for x in xs:
            for t in ts:
                if abs(t) + h >= HALF_PI:
                    continue
                c = normal_flow(x, [t - h, t + h])
                ph = normal_flow(x + h, [t])[0, :2]
                mh = normal_flow(x - h, [t])[0, :2]
                jac = np.column_stack([(ph - mh) / (2 * h), (c[1, :2] - c[0, :2]) / (2 * h)])
                worst = max(worst, _pullback_error(jac, normal_flow(x, [t])[0, :2], t))
        fd_err.append(worst)
    fd_err = np.array(fd_err)
    orders = np.log2(fd_err[:-1] / fd_err[1:]) / np.log2(np.asarray(fd_steps[:-1]) / np.asarray(fd_steps[1:]))
    second_order = bool(np.all(np.abs(orders - 2.0) < 0.25))
    pts = np.array(images)
    _, _, d2 = kernels.nearest_two(pts, pts)
    min_sep = float(d2.min()) if len(pts) > 1 else math.inf
    injective = min_sep > injectivity_tol
    ok = analytic <= tol and slice_err == 0.0 and second_order and injective
    return VerificationReport(
        "splitting_pullback", Verdict.PASS if ok else Verdict.CONCLUSION_FAILURE, analytic,
        {"analytic_max_error": analytic, "slice_error": slice_err, "position_error": pos_err,
         "fd_errors": fd_err, "fd_orders": orders, "second_order": second_order,
         "min_image_separation": min_sep, "injective": injective},
        {"model": model.name, "xs": xs, "ts": ts, "fd_steps": list(fd_steps), "tol": tol})


# Cosmological time -----------------------------------------------------------------------


def cosmological_time(model: ModelSpacetime, q) -> float:
    """``sup {d(p, q) : p << q}``, which is ``t + pi/2`` on the strip."""
    if not model.is_strip:
        raise ValueError("cosmological time is finite only on the strip")
    q = np.asarray(q, float)
    if not model.contains(q):
        raise ValueError(f"{q} is not a point of {model.name}")
    return float(q[-1] + HALF_PI)


def cosmological_time_estimate(model: ModelSpacetime, q, n_samples: int = 2000, seed: int = 0,
                               depth: int = 8) -> float:
    """Brute-force sup of ``d(p, q)`` over sampled past points ``p``."""
    q = np.asarray(q, float)
    rng = np.random.default_rng(seed)
    gaps = 10.0 ** -rng.uniform(0, depth, n_samples)
    tp = -HALF_PI + gaps * (q[-1] + HALF_PI)
    du = conformal_time(q[-1]) - conformal_time(tp)
    dirs = rng.standard_normal((n_samples, model.dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    # stay inside the past cone: fiber offset up to the causal reach
    reach = rng.uniform(0, 1, n_samples) * du
    if model.fiber == "hyperbolic":
        # Poincare-ball point at hyperbolic distance ``reach`` from the origin, then moved to q's foot
        foot = q[:-1]
        if np.any(foot):
            raise ValueError("estimate uses a foot at the fiber origin for the hyperbolic fiber")
        xs = np.tanh(reach / 2)[:, None] * dirs
    else:
        xs = q[:-1] + reach[:, None] * dirs
    P = np.column_stack([xs, tp])
    P = np.vstack([P, np.append(q[:-1], -HALF_PI + 10.0 ** -depth)])
    return float(np.max(lorentz_distance(model, P, np.broadcast_to(q, P.shape))))
