"""Spacelike graphs over Lorentzian charts in normal form.

A chart carries ``g = sum g_ij dx^i dx^j - (dx^n)^2`` with the time
coordinate ``x^n`` last (index ``n-1`` in arrays).  A graph ``x^n = f(x)``
has tangent frame ``X_i = d_i + D_i f d_n`` and future unit normal ``n``;
its second fundamental form is ``h(X_i, X_j) = (D_ij f + Gamma^n_ij - V_ij)/W``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .grid import GridFunction
from .quasilinear import AdmissibleRegion, EllipticityCertificate, QuasiLinearOperator, certify_ellipticity
from .symkernel import symmetrize

H_FD = 1e-4
COND_LIMIT = 1e12


class NotSpacelikeError(ValueError):
    def __init__(self, W2, x=None):
        super().__init__(f"graph is not spacelike: W^2 = {W2:.6g}" + ("" if x is None else f" at x={x}"))
        self.W2 = W2
        self.x = x


class ChartError(ValueError):
    pass


@dataclass
class MetricChart:
    """Normal-form chart of dimension ``n`` (``n-1`` space + 1 time).

    ``g_space(point)`` returns the ``(n-1, n-1)`` spatial block at a spacetime
    point ``(x^1..x^{n-1}, t)``; ``dg_space`` (optional) returns its partial
    derivatives as an ``(n, n-1, n-1)`` array, first index = coordinate.
    """

    n: int
    g_space: Callable[[np.ndarray], np.ndarray]
    dg_space: Optional[Callable[[np.ndarray], np.ndarray]] = None
    d2g_space: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "custom"
    domain: Optional[Callable[[np.ndarray], bool]] = None
    h_fd: float = H_FD
    params: dict = field(default_factory=dict)

    def check_point(self, point):
        point = np.asarray(point, float)
        if point.shape != (self.n,):
            raise ChartError(f"expected a point with {self.n} coordinates, got shape {point.shape}")
        if self.domain is not None and not self.domain(point):
            raise ChartError(f"point {point} outside the chart domain")
        return point

    def metric(self, point) -> np.ndarray:
        """Full ``n x n`` metric with the ``-1`` time entry."""
        point = self.check_point(point)
        g = np.zeros((self.n, self.n))
        gs = np.asarray(self.g_space(point), float)
        g[:-1, :-1] = gs
        g[-1, -1] = -1.0
        return g

    def dmetric(self, point, h_fd=None) -> np.ndarray:
        """``dg[C, A, B] = d_C g_AB``."""
        point = self.check_point(point)
        d = np.zeros((self.n, self.n, self.n))
        if self.dg_space is not None:
            d[:, :-1, :-1] = self.dg_space(point)
            return d
        h = self.h_fd if h_fd is None else h_fd
        for c in range(self.n):
            e = np.zeros(self.n)
            e[c] = h
            d[c, :-1, :-1] = (np.asarray(self.g_space(point + e)) - np.asarray(self.g_space(point - e))) / (2 * h)
        return d


def christoffels(chart: MetricChart, point, h_fd=None) -> np.ndarray:
    """Levi-Civita symbols ``Gamma[A, B, C] = Gamma^A_BC`` of the full metric."""
    g = chart.metric(point)
    if np.linalg.cond(g) > COND_LIMIT:
        raise ChartError(f"metric is numerically singular at {point}")
    ginv = np.linalg.inv(g)
    dg = chart.dmetric(point, h_fd)
    # lower[D, B, C] = 1/2 (d_B g_DC + d_C g_DB - d_D g_BC)
    lower = 0.5 * (np.einsum("bdc->dbc", dg) + np.einsum("cdb->dbc", dg) - dg)
    return np.einsum("ad,dbc->abc", ginv, lower)


# Built-in charts ------------------------------------------------------------------------


def minkowski(n: int = 3) -> MetricChart:
    if n < 2:
        raise ChartError("Minkowski chart needs n >= 2")
    k = n - 1
    return MetricChart(n, lambda P: np.eye(k), lambda P: np.zeros((n, k, k)), lambda P: np.zeros((n, n, k, k)),
                       name=f"minkowski n={n}", params={"kind": "minkowski", "n": n})


def _hyperbolic_factor(x):
    """Poincaré ball: ``g_N = e^{2 sigma} delta`` with ``sigma = ln 2 - ln(1-|x|^2)``."""
    q = 1.0 - x @ x
    e2s = 4.0 / q**2
    sig1 = 2 * x / q
    sig2 = 2 * np.eye(x.size) / q + 4 * np.outer(x, x) / q**2
    return e2s, sig1, sig2


def fiber_metric(fiber: str, dim: int):
    """``(g_N, dg_N, d2g_N)`` evaluators on the fiber chart."""
    eye = np.eye(dim)
    if fiber == "flat":
        return (lambda x: eye, lambda x: np.zeros((dim, dim, dim)), lambda x: np.zeros((dim, dim, dim, dim)),
                lambda x: True)
    if fiber == "hyperbolic":
        def g(x):
            return _hyperbolic_factor(x)[0] * eye

        def dg(x):
            e2s, s1, _ = _hyperbolic_factor(x)
            return 2 * e2s * s1[:, None, None] * eye[None]

        def d2g(x):
            e2s, s1, s2 = _hyperbolic_factor(x)
            return (e2s * (2 * s2 + 4 * np.outer(s1, s1)))[:, :, None, None] * eye[None, None]

        return g, dg, d2g, lambda x: x @ x < 1.0
    raise ChartError(f"unknown fiber {fiber!r}; choose 'flat' or 'hyperbolic'")


def warped(fiber: str = "hyperbolic", dim: int = 2) -> MetricChart:
    """``-dt^2 + cos(t)^2 g_N`` on ``|t| < pi/2``."""
    gN, dgN, d2gN, inN = fiber_metric(fiber, dim)
    n = dim + 1

    def g_space(P):
        return np.cos(P[-1]) ** 2 * gN(P[:-1])

    def dg_space(P):
        x, t = P[:-1], P[-1]
        out = np.empty((n, dim, dim))
        out[:-1] = np.cos(t) ** 2 * dgN(x)
        out[-1] = -np.sin(2 * t) * gN(x)
        return out

    def d2g_space(P):
        x, t = P[:-1], P[-1]
        out = np.empty((n, n, dim, dim))
        out[:-1, :-1] = np.cos(t) ** 2 * d2gN(x)
        cross = -np.sin(2 * t) * dgN(x)
        out[:-1, -1] = cross
        out[-1, :-1] = cross
        out[-1, -1] = -2 * np.cos(2 * t) * gN(x)
        return out

    def domain(P):
        return abs(P[-1]) < np.pi / 2 and bool(inN(P[:-1]))

    return MetricChart(n, g_space, dg_space, d2g_space, name=f"warped fiber={fiber} dim={dim}", domain=domain,
                       params={"kind": "warped", "fiber": fiber, "dim": dim})


def ads_strip(dim: int = 2) -> MetricChart:
    """The anti-de Sitter strip: warped chart over a hyperbolic fiber."""
    c = warped("hyperbolic", dim)
    c.name = f"ads-strip dim={dim}"
    return c


def parse_chart(spec: str) -> MetricChart:
    """``"minkowski n=3"``, ``"ads-strip"``, ``"warped fiber=hyperbolic dim=2"``."""
    words = spec.split()
    if not words:
        raise ChartError("empty chart declaration")
    kind, opts = words[0], {}
    for w in words[1:]:
        key, sep, val = w.partition("=")
        if not sep:
            raise ChartError(f"bad chart option {w!r} (expected key=value)")
        opts[key] = val
    allowed = {"minkowski": {"n"}, "ads-strip": {"dim"}, "warped": {"fiber", "dim"}}
    if kind not in allowed:
        raise ChartError(f"unknown chart {kind!r}; choose minkowski, ads-strip or warped")
    extra = set(opts) - allowed[kind]
    if extra:
        raise ChartError(f"unknown chart options {sorted(extra)} for {kind!r}")
    try:
        if kind == "minkowski":
            return minkowski(int(opts.get("n", 3)))
        if kind == "ads-strip":
            return ads_strip(int(opts.get("dim", 2)))
        return warped(opts.get("fiber", "hyperbolic"), int(opts.get("dim", 2)))
    except ValueError as exc:
        raise ChartError(f"bad chart option value in {spec!r}: {exc}") from None


# Graphs -------------------------------------------------------------------------------


@dataclass
class GraphHypersurface:
    chart: MetricChart
    f: Callable[[np.ndarray], float]
    grad: Optional[Callable] = None
    hess: Optional[Callable] = None
    h_fd: float = 1e-3

    def jet(self, x):
        x = np.asarray(x, float)
        if self.grad is not None and self.hess is not None:
            return float(self.f(x)), np.asarray(self.grad(x), float), symmetrize(np.asarray(self.hess(x), float))
        return fd_jet(self.f, x, self.h_fd)

    @classmethod
    def from_grid(cls, chart: MetricChart, grid: GridFunction) -> "GraphHypersurface":
        """Graph known only at grid nodes; jets by centred differences."""

        def f(x):
            return float(grid.values[grid.index_of(x)])

        surf = cls(chart, f)
        surf.jet = lambda x: (f(x), grid.gradient_at(grid.index_of(x)),  # type: ignore[method-assign]
                              symmetrize(grid.hessian_at(grid.index_of(x))))
        return surf


def fd_jet(f, x, h):
    """Value, gradient and Hessian of ``f`` at ``x`` by centred differences."""
    x = np.asarray(x, float)
    m = x.size
    f0 = float(f(x))
    g = np.empty(m)
    H = np.empty((m, m))
    E = np.eye(m) * h
    for i in range(m):
        fp, fm = f(x + E[i]), f(x - E[i])
        g[i] = (fp - fm) / (2 * h)
        H[i, i] = (fp - 2 * f0 + fm) / h**2
        for j in range(i + 1, m):
            H[i, j] = H[j, i] = (f(x + E[i] + E[j]) - f(x + E[i] - E[j]) - f(x - E[i] + E[j])
                                 + f(x - E[i] - E[j])) / (4 * h * h)
    return f0, g, H


@dataclass
class GraphGeometry:
    W: float
    normal: np.ndarray
    G: np.ndarray
    V: np.ndarray
    h: np.ndarray
    H: float
    a: np.ndarray
    b: float
    Gamma_n: np.ndarray

    def to_dict(self):
        return {k: getattr(self, k) for k in ("W", "normal", "G", "V", "h", "H", "a", "b")}


def _pieces(chart: MetricChart, x, r, p):
    x = np.asarray(x, float)
    p = np.asarray(p, float)
    point = np.append(x, r)
    Gam = christoffels(chart, point)
    gs = chart.metric(point)[:-1, :-1]
    ginv = np.linalg.inv(gs)
    W2 = 1.0 - p @ ginv @ p
    if W2 <= 0:
        raise NotSpacelikeError(W2, x)
    W = np.sqrt(W2)
    G = gs - np.outer(p, p)
    if np.linalg.cond(G) > COND_LIMIT:
        raise ChartError(f"induced metric is numerically singular at {x}")
    Ginv = np.linalg.inv(G)
    k = slice(0, chart.n - 1)
    tn = chart.n - 1
    # V_ij = sum_k (Gamma^k_ij p_k + Gamma^k_in p_k p_j + Gamma^k_jn p_k p_i), k spatial
    V1 = np.einsum("kij,k->ij", Gam[k, k, k], p)
    u = np.einsum("kin,k->i", Gam[k, k, tn:tn + 1], p)
    V = V1 + np.outer(u, p) + np.outer(p, u)
    Gn = Gam[tn, k, k]
    normal = np.append(ginv @ p, 1.0) / W
    return W, Ginv, G, V, Gn, normal


def mean_curvature_coefficients_at(chart: MetricChart, x, r, p):
    """``(a, b)`` at the jet point ``(x, r, p)``."""
    W, Ginv, _, V, Gn, _ = _pieces(chart, x, r, p)
    m = chart.n - 1
    a = symmetrize(Ginv / (m * W))
    b = float(np.sum(Ginv * (Gn - V)) / (m * W))
    return a, b


def graph_geometry(chart: MetricChart, surface: GraphHypersurface, x) -> GraphGeometry:
    r, p, hess = surface.jet(x)
    W, Ginv, G, V, Gn, normal = _pieces(chart, x, r, p)
    h = (hess + Gn - V) / W
    m = chart.n - 1
    H = float(np.sum(Ginv * h)) / m
    a = symmetrize(Ginv / (m * W))
    b = float(np.sum(Ginv * (Gn - V)) / (m * W))
    return GraphGeometry(W, normal, symmetrize(G), V, h, H, a, b, Gn)


def mean_curvature_coefficients(chart: MetricChart, surface: GraphHypersurface, x):
    geo = graph_geometry(chart, surface, x)
    return geo.a, geo.b


def hessian_roundtrip(geo: GraphGeometry) -> np.ndarray:
    """``D^2 f`` recovered as ``W h - Gamma^n + V``."""
    return geo.W * geo.h - geo.Gamma_n + geo.V


def second_fundamental_form_direct(chart: MetricChart, surface: GraphHypersurface, x) -> np.ndarray:
    """Independent route: ``h(X_i, X_j) = -g(nabla_{X_i} X_j, n)`` with the full
    connection, used to cross-check the ``V_ij`` formula."""
    r, p, hess = surface.jet(x)
    point = np.append(np.asarray(x, float), r)
    Gam = christoffels(chart, point)
    g = chart.metric(point)
    n = chart.n
    m = n - 1
    X = np.zeros((m, n))
    X[:, :m] = np.eye(m)
    X[:, -1] = p
    _, _, _, _, _, normal = _pieces(chart, x, r, p)
    h = np.empty((m, m))
    for i in range(m):
        for j in range(m):
            # nabla_{X_i} X_j = (d_i X_j^A) + Gamma^A_BC X_i^B X_j^C; d_i X_j = D_ij f d_n
            v = np.einsum("abc,b,c->a", Gam, X[i], X[j])
            v[-1] += hess[i, j]
            h[i, j] = -(v @ g @ normal)
    return h


def chart_operator(chart: MetricChart) -> QuasiLinearOperator:
    from .quasilinear import chart_mean_curvature

    return chart_mean_curvature(chart)


# Admissible sets --------------------------------------------------------------------------


def admissible_set(rho: float, Bd: float, K, chart: MetricChart, n_x: int = 2, n_r: int = 2,
                   n_dir: int = 8, seed: int = 0):
    """Region ``U_{rho,B,K}`` and an ellipticity certificate for the chart's
    mean-curvature operator on a fixed sample of it.

    The base sample is fixed for the largest possible region (gradients up
    to g-norm 0.9999) and filtered by membership, so the reported ``C_E``
    can only decrease as ``rho`` grows.
    """
    if not 0 < rho < 1:
        raise ValueError("rho must lie in (0, 1)")
    if Bd <= 0:
        raise ValueError("Bd must be positive")
    lo, hi = (np.atleast_1d(np.asarray(v, float)) for v in K)
    m = chart.n - 1
    if lo.shape != (m,) or hi.shape != (m,):
        raise ValueError(f"K must be a box in {m} dimensions")

    def gnorm2(x, r, p):
        gs = chart.metric(np.append(x, r))[:-1, :-1]
        return float(p @ np.linalg.solve(gs, p))

    def contains(x, r, p):
        x = np.asarray(x, float)
        if np.any(x < lo) or np.any(x > hi) or not abs(r) < Bd:
            return False
        try:
            return gnorm2(x, r, np.asarray(p, float)) < 1 - rho**2
        except ChartError:
            return False

    def x_sampler(rng, count):
        return lo + (hi - lo) * rng.random((count, m))

    def fiber_sampler(rng, x, count):
        r = Bd * (2 * rng.random(count) - 1) * (1 - 1e-12)
        p = np.empty((count, m))
        for k in range(count):
            L = np.linalg.cholesky(chart.metric(np.append(x, r[k]))[:-1, :-1])
            u = rng.standard_normal(m)
            u *= np.sqrt(1 - rho**2) * rng.random() ** (1 / m) / np.linalg.norm(u) * (1 - 1e-12)
            p[k] = L @ u
        return r, p

    region = AdmissibleRegion(m, contains, True, describe=f"U(rho={rho}, B={Bd}) over {chart.name}",
                              fiber_sampler=fiber_sampler, x_sampler=x_sampler,
                              params={"rho": rho, "Bd": Bd, "K": [lo, hi], "chart": chart.name})
    base = _base_samples(chart, lo, hi, Bd, n_x, n_r, n_dir, seed)
    members = [s for s in base if contains(*s)]
    op = chart_operator(chart).with_region(region)
    probe = certify_ellipticity(op, region, members, np.inf)
    C_E = max(1.0, probe.worst_ratio, probe.worst_derivative_bound)
    cert = EllipticityCertificate(C_E, probe.samples_checked, probe.worst_ratio, probe.worst_derivative_bound,
                                  True, None)
    region.params["C_E"] = C_E
    region.params["certificate"] = cert
    return region


def _base_samples(chart, lo, hi, Bd, n_x, n_r, n_dir, seed):
    m = chart.n - 1
    rng = np.random.default_rng(seed)
    xs = [lo + (hi - lo) * t for t in (np.linspace(0, 1, n_x)[:, None] * np.ones(m))]
    xs += list(lo + (hi - lo) * rng.random((n_x, m)))
    rs = np.linspace(-Bd, Bd, n_r + 2)[1:-1]
    dirs = rng.standard_normal((n_dir, m))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    radii = np.concatenate([np.linspace(0, 0.95, 20), [0.97, 0.98, 0.99, 0.995, 0.999, 0.9995, 0.9999]])
    out = []
    for x in xs:
        for r in rs:
            try:
                L = np.linalg.cholesky(chart.metric(np.append(x, r))[:-1, :-1])
            except (ChartError, np.linalg.LinAlgError):
                continue
            for d in dirs:
                for s in radii:
                    out.append((np.asarray(x, float), float(r), s * (L @ d)))
    return out
