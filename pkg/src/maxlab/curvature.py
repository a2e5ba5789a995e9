"""Curvature of pseudo-metric charts.

Conventions, for a metric ``g`` with Levi-Civita symbols ``Gamma^A_BC``::

    R^A_BCD = d_C Gamma^A_DB - d_D Gamma^A_CB + Gamma^A_CE Gamma^E_DB - Gamma^A_DE Gamma^E_CB
    R_ABCD  = g_AE R^E_BCD          (so constant curvature K gives K (g_AC g_BD - g_AD g_BC))
    R_BD    = g^AC R_ABCD,   S = g^BD R_BD
    W       = R - (g_AC R_BD + g_BD R_AC - g_BC R_AD - g_AD R_BC) / (n-2)
                + S (g_AC g_BD - g_AD g_BC) / ((n-1)(n-2))

Metric derivatives are analytic when supplied, otherwise centred differences
with one Richardson step.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .lorgraph import MetricChart, fiber_metric, minkowski, warped
from .report import VerificationReport, Verdict, to_jsonable

H_FD = 1e-3
SYM_TOL = 1e-8


class CurvatureError(ValueError):
    pass


@dataclass
class MetricField:
    """``g_AB(x)`` in one chart; ``dg[C, A, B] = d_C g_AB`` and
    ``d2g[C, D, A, B] = d_C d_D g_AB`` are optional."""

    n: int
    g: Callable[[np.ndarray], np.ndarray]
    dg: Optional[Callable[[np.ndarray], np.ndarray]] = None
    d2g: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "metric"
    h_fd: float = H_FD

    def __post_init__(self):
        if self.n < 2:
            raise CurvatureError("metric dimension must be >= 2")

    @property
    def analytic(self) -> bool:
        return self.dg is not None and self.d2g is not None

    def metric(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        G = np.asarray(self.g(x), float)
        if G.shape != (self.n, self.n):
            raise CurvatureError(f"{self.name}: metric has shape {G.shape}, expected {(self.n, self.n)}")
        if not np.allclose(G, G.T, rtol=0, atol=1e-13 * max(1.0, np.abs(G).max())):
            raise CurvatureError(f"{self.name}: metric not symmetric at {x}")
        return 0.5 * (G + G.T)

    def derivatives(self, x, h_fd=None):
        x = np.asarray(x, float)
        h = self.h_fd if h_fd is None else h_fd
        d1 = np.asarray(self.dg(x), float) if self.dg is not None else _richardson(lambda s: _fd1(self.metric, x, s), h)
        d2 = np.asarray(self.d2g(x), float) if self.d2g is not None else _richardson(lambda s: _fd2(self.metric, x, s), h)
        return d1, d2

    def conformal(self, lam, dlam=None, d2lam=None, name=None) -> "MetricField":
        """``lambda^2 g``.  A constant ``lam`` or supplied derivatives keep
        the derivatives analytic; otherwise finite differences are used."""
        if np.isscalar(lam):
            c = float(lam)
            lam_f = lambda x: c  # noqa: E731
            dlam = lambda x: np.zeros(self.n)  # noqa: E731
            d2lam = lambda x: np.zeros((self.n, self.n))  # noqa: E731
        else:
            lam_f = lam
        label = name or f"conformal({self.name})"

        def g(x):
            return lam_f(x) ** 2 * self.metric(x)

        if dlam is None or d2lam is None or not self.analytic:
            return MetricField(self.n, g, name=label, h_fd=self.h_fd)

        def dg(x):
            L, dL = lam_f(x), np.asarray(dlam(x), float)
            return 2 * L * dL[:, None, None] * self.metric(x)[None] + L * L * self.dg(x)

        def d2g(x):
            L, dL, d2L = lam_f(x), np.asarray(dlam(x), float), np.asarray(d2lam(x), float)
            dLam = 2 * L * dL
            d2Lam = 2 * np.outer(dL, dL) + 2 * L * d2L
            G, dG = self.metric(x), self.dg(x)
            return (d2Lam[:, :, None, None] * G + dLam[:, None, None, None] * dG[None]
                    + dLam[None, :, None, None] * dG[:, None] + L * L * self.d2g(x))

        return MetricField(self.n, g, dg, d2g, label, self.h_fd)


def _fd1(f, x, h):
    n = x.size
    out = np.empty((n,) + f(x).shape)
    for c in range(n):
        e = np.zeros(n)
        e[c] = h
        out[c] = (f(x + e) - f(x - e)) / (2 * h)
    return out


def _fd2(f, x, h):
    n = x.size
    f0 = f(x)
    out = np.empty((n, n) + f0.shape)
    E = np.eye(n) * h
    for c in range(n):
        out[c, c] = (f(x + E[c]) - 2 * f0 + f(x - E[c])) / h**2
        for d in range(c + 1, n):
            out[c, d] = out[d, c] = (f(x + E[c] + E[d]) - f(x + E[c] - E[d]) - f(x - E[c] + E[d])
                                     + f(x - E[c] - E[d])) / (4 * h * h)
    return out


def _richardson(D, h):
    return (4 * D(h / 2) - D(h)) / 3


# Built-in metric fields --------------------------------------------------------------------


def from_chart(chart: MetricChart) -> MetricField:
    """Full metric of a :class:`~maxlab.lorgraph.MetricChart` (time last)."""
    n = chart.n
    d2 = None
    if chart.d2g_space is not None and chart.dg_space is not None:
        def d2(x):
            out = np.zeros((n, n, n, n))
            out[:, :, :-1, :-1] = chart.d2g_space(np.asarray(x, float))
            return out
    dg = (lambda x: chart.dmetric(x)) if chart.dg_space is not None else None
    return MetricField(n, chart.metric, dg, d2, chart.name)


def minkowski_field(n: int = 4) -> MetricField:
    return from_chart(minkowski(n))


def warped_field(fiber: str = "hyperbolic", dim: int = 3) -> MetricField:
    """``-dt^2 + cos(t)^2 g_N`` with analytic derivatives."""
    return from_chart(warped(fiber, dim))


def perturbed_fiber_metric(dim: int, eps: float, seed: int = 0, modes: int = 3):
    """``delta + eps * P(x)`` with ``P_ij = sum_k C^k_ij sin(w_k . x + phi_k)``;
    returns ``(g, dg, d2g)`` in the fiber-metric layout of :mod:`maxlab.lorgraph`."""
    rng = np.random.default_rng(seed)
    C = rng.standard_normal((modes, dim, dim))
    C = 0.5 * (C + C.transpose(0, 2, 1)) / modes
    w = rng.uniform(0.5, 1.5, (modes, dim))
    phi = rng.uniform(0, 2 * np.pi, modes)
    eye = np.eye(dim)

    def g(x):
        return eye + eps * np.einsum("k,kij->ij", np.sin(w @ x + phi), C)

    def dg(x):
        return eps * np.einsum("k,kc,kij->cij", np.cos(w @ x + phi), w, C)

    def d2g(x):
        return -eps * np.einsum("k,kc,kd,kij->cdij", np.sin(w @ x + phi), w, w, C)

    return g, dg, d2g


def fiber_field(kind: str = "hyperbolic", dim: int = 3, eps: float = 0.1, seed: int = 0) -> MetricField:
    """Riemannian fiber metrics: ``flat``, ``hyperbolic`` (Poincare ball) or ``perturbed``."""
    if kind == "perturbed":
        g, dg, d2g = perturbed_fiber_metric(dim, eps, seed)
    else:
        g, dg, d2g, _ = fiber_metric(kind, dim)
    return MetricField(dim, g, dg, d2g, f"fiber {kind} dim={dim}")


def product_field(fiber: MetricField) -> MetricField:
    """``-dt^2 + g_N`` with time as the last coordinate."""
    m = fiber.n
    n = m + 1

    def g(x):
        out = np.zeros((n, n))
        out[:m, :m] = fiber.metric(x[:m])
        out[m, m] = -1.0
        return out

    dg = d2g = None
    if fiber.analytic:
        def dg(x):
            out = np.zeros((n, n, n))
            out[:m, :m, :m] = fiber.dg(x[:m])
            return out

        def d2g(x):
            out = np.zeros((n, n, n, n))
            out[:m, :m, :m, :m] = fiber.d2g(x[:m])
            return out

    return MetricField(n, g, dg, d2g, f"product -dt^2 + {fiber.name}", fiber.h_fd)


def warped_over(fiber: MetricField) -> MetricField:
    """``-dt^2 + cos(t)^2 g_N`` over an arbitrary fiber field (time last)."""
    m = fiber.n
    n = m + 1

    def g(x):
        out = np.zeros((n, n))
        out[:m, :m] = math.cos(x[m]) ** 2 * fiber.metric(x[:m])
        out[m, m] = -1.0
        return out

    dg = d2g = None
    if fiber.analytic:
        def dg(x):
            t = x[m]
            out = np.zeros((n, n, n))
            out[:m, :m, :m] = math.cos(t) ** 2 * fiber.dg(x[:m])
            out[m, :m, :m] = -math.sin(2 * t) * fiber.metric(x[:m])
            return out

        def d2g(x):
            t = x[m]
            out = np.zeros((n, n, n, n))
            out[:m, :m, :m, :m] = math.cos(t) ** 2 * fiber.d2g(x[:m])
            cross = -math.sin(2 * t) * fiber.dg(x[:m])
            out[:m, m, :m, :m] = cross
            out[m, :m, :m, :m] = cross
            out[m, m, :m, :m] = -2 * math.cos(2 * t) * fiber.metric(x[:m])
            return out

    return MetricField(n, g, dg, d2g, f"warped over {fiber.name}", fiber.h_fd)


BUILTIN_METRICS = {
    "minkowski": lambda dim: minkowski_field(dim),
    "ads-strip": lambda dim: warped_field("hyperbolic", dim - 1),
    "strip-flat": lambda dim: warped_field("flat", dim - 1),
    "product-hyperbolic": lambda dim: product_field(fiber_field("hyperbolic", dim - 1)),
    "product-flat": lambda dim: product_field(fiber_field("flat", dim - 1)),
    "product-perturbed": lambda dim: product_field(fiber_field("perturbed", dim - 1)),
}


def builtin_metric(name: str, n: int) -> MetricField:
    if name not in BUILTIN_METRICS:
        raise CurvatureError(f"unknown metric {name!r}; choose from {sorted(BUILTIN_METRICS)}")
    return BUILTIN_METRICS[name](n)


# Curvature -------------------------------------------------------------------------------------


@dataclass
class CurvatureBundle:
    point: np.ndarray
    metric: np.ndarray
    inverse: np.ndarray
    christoffel: np.ndarray
    riemann: np.ndarray
    ricci: np.ndarray
    scalar: float
    weyl: Optional[np.ndarray]
    residuals: dict

    @property
    def n(self) -> int:
        return self.metric.shape[0]

    def to_dict(self):
        def tensor(arr, indices):
            return None if arr is None else {"indices": indices, "data": arr}

        return {
            "point": self.point, "n": self.n, "metric": tensor(self.metric, "_AB"),
            "riemann": tensor(self.riemann, "_ABCD"), "ricci": tensor(self.ricci, "_AB"),
            "scalar": self.scalar, "weyl": tensor(self.weyl, "_ABCD"), "residuals": self.residuals,
        }

    def to_json(self) -> str:
        return json.dumps(to_jsonable(self.to_dict()), indent=2, sort_keys=True)


def _kulkarni_gg(g):
    return np.einsum("ac,bd->abcd", g, g) - np.einsum("ad,bc->abcd", g, g)


def _ricci_wedge(g, Ric):
    """``g_AC R_BD + g_BD R_AC - g_BC R_AD - g_AD R_BC``."""
    return (np.einsum("ac,bd->abcd", g, Ric) + np.einsum("bd,ac->abcd", g, Ric)
            - np.einsum("bc,ad->abcd", g, Ric) - np.einsum("ad,bc->abcd", g, Ric))


def christoffel_symbols(G, Ginv, dG):
    lower = 0.5 * (np.einsum("bdc->dbc", dG) + np.einsum("cdb->dbc", dG) - dG)
    return np.einsum("ad,dbc->abc", Ginv, lower)


def riemann_tensor(G, Ginv, dG, d2G):
    """``R_ABCD`` from the metric and its first two derivatives."""
    Gam = christoffel_symbols(G, Ginv, dG)
    # d_E g^AD = -g^AP d_E g_PQ g^QD
    dGinv = -np.einsum("ap,epq,qd->ead", Ginv, dG, Ginv)
    lower = 0.5 * (np.einsum("bdc->dbc", dG) + np.einsum("cdb->dbc", dG) - dG)
    # d_E lower[D, B, C]
    dlower = 0.5 * (np.einsum("ebdc->edbc", d2G) + np.einsum("ecdb->edbc", d2G) - d2G)
    dGam = np.einsum("ead,dbc->eabc", dGinv, lower) + np.einsum("ad,edbc->eabc", Ginv, dlower)
    # R^A_BCD = d_C Gam^A_DB - d_D Gam^A_CB + Gam^A_CE Gam^E_DB - Gam^A_DE Gam^E_CB
    Rup = (np.einsum("cadb->abcd", dGam) - np.einsum("dacb->abcd", dGam)
           + np.einsum("ace,edb->abcd", Gam, Gam) - np.einsum("ade,ecb->abcd", Gam, Gam))
    return np.einsum("ae,ebcd->abcd", G, Rup), Gam


def weyl_tensor(G, Rm, Ric, S):
    n = G.shape[0]
    if n < 3:
        return np.zeros_like(Rm)
    return Rm - _ricci_wedge(G, Ric) / (n - 2) + S * _kulkarni_gg(G) / ((n - 1) * (n - 2))


def symmetry_residuals(Rm) -> dict:
    scale = max(1.0, float(np.abs(Rm).max()))
    return {
        "antisym_AB": float(np.abs(Rm + Rm.transpose(1, 0, 2, 3)).max()) / scale,
        "antisym_CD": float(np.abs(Rm + Rm.transpose(0, 1, 3, 2)).max()) / scale,
        "pair_sym": float(np.abs(Rm - Rm.transpose(2, 3, 0, 1)).max()) / scale,
        "first_bianchi": float(np.abs(Rm + Rm.transpose(0, 2, 3, 1) + Rm.transpose(0, 3, 1, 2)).max()) / scale,
    }


def trace_residuals(W, Ginv) -> dict:
    """Every single metric contraction of ``W``."""
    out = {}
    for i in range(4):
        for j in range(i + 1, 4):
            idx = "abcd"
            spec = f"{idx[i]}{idx[j]},abcd->" + "".join(c for k, c in enumerate(idx) if k not in (i, j))
            out[f"g^{idx[i]}{idx[j]}"] = float(np.abs(np.einsum(spec, Ginv, W)).max())
    return out


def curvature(metric: MetricField, x, h_fd=None, tol: float = SYM_TOL) -> CurvatureBundle:
    x = np.asarray(x, float)
    if x.shape != (metric.n,):
        raise CurvatureError(f"point must have {metric.n} coordinates")
    G = metric.metric(x)
    if np.linalg.cond(G) > 1e12:
        raise CurvatureError(f"{metric.name}: metric is singular at {x}")
    Ginv = np.linalg.inv(G)
    dG, d2G = metric.derivatives(x, h_fd)
    Rm, Gam = riemann_tensor(G, Ginv, dG, d2G)
    res = symmetry_residuals(Rm)
    if max(res.values()) > 100 * tol:
        raise CurvatureError(f"{metric.name}: curvature symmetry residual {max(res.values()):.3e} "
                             f"exceeds 100 x tol at {x}")
    Ric = np.einsum("ac,abcd->bd", Ginv, Rm)
    Ric = 0.5 * (Ric + Ric.T)
    S = float(np.einsum("bd,bd->", Ginv, Ric))
    W = weyl_tensor(G, Rm, Ric, S) if metric.n >= 3 else None
    if W is not None:
        res.update({"weyl_" + k: v for k, v in trace_residuals(W, Ginv).items()})
    return CurvatureBundle(x, G, Ginv, Gam, Rm, Ric, S, W, res)


def bianchi_residuals(metric: MetricField, x, h: float = H_FD) -> dict:
    """First Bianchi residual and the second Bianchi residual
    ``nabla_E R_ABCD + nabla_C R_ABDE + nabla_D R_ABEC`` (Richardson-centred in ``x``)."""
    x = np.asarray(x, float)
    b = curvature(metric, x)
    dR = _richardson(lambda s: _fd1(lambda z: curvature(metric, z).riemann, x, s), h)
    Gam, R = b.christoffel, b.riemann
    nabla = (dR - np.einsum("pea,pbcd->eabcd", Gam, R) - np.einsum("peb,apcd->eabcd", Gam, R)
             - np.einsum("pec,abpd->eabcd", Gam, R) - np.einsum("ped,abcp->eabcd", Gam, R))
    # second Bianchi: cyclic sum over (E, C, D) of nabla_E R_ABCD
    cyc = (np.einsum("eabcd->abcde", nabla) + np.einsum("cabde->abcde", nabla)
           + np.einsum("dabec->abcde", nabla))
    return {"first": symmetry_residuals(R)["first_bianchi"], "second": float(np.abs(cyc).max())}


def sectional_curvature(bundle: CurvatureBundle, X, Y) -> float:
    X = np.asarray(X, float)
    Y = np.asarray(Y, float)
    G = bundle.metric
    area = (X @ G @ X) * (Y @ G @ Y) - (X @ G @ Y) ** 2
    if abs(area) < 1e-12:
        raise CurvatureError("degenerate 2-plane")
    return float(np.einsum("abcd,a,b,c,d->", bundle.riemann, X, Y, X, Y) / area)


# Norms -----------------------------------------------------------------------------------------


def tensor_norm_sq(T, Ginv) -> float:
    """``sum g^AA' g^BB' g^CC' g^DD' T_ABCD T_A'B'C'D'``."""
    up = np.einsum("ap,bq,cr,ds,pqrs->abcd", Ginv, Ginv, Ginv, Ginv, T)
    return float(np.einsum("abcd,abcd->", up, T))


def weyl_norm_sq(bundle: CurvatureBundle, metric: MetricField | None = None, x=None) -> float:
    """``||W||_g^2``; may be negative in Lorentzian signature."""
    if bundle.n < 4:
        raise CurvatureError("the Weyl tensor vanishes identically below dimension 4")
    return tensor_norm_sq(bundle.weyl, bundle.inverse)


def conformal_transform_check(metric: MetricField, lam, x, dlam=None, d2lam=None, tol: float = 1e-8,
                              h_fd=None) -> VerificationReport:
    """``W_{lam^2 g} = lam^2 W_g`` and ``||W||^2`` scaling by ``lam^-4`` at ``x``."""
    if metric.n < 4:
        raise CurvatureError("conformal Weyl check needs n >= 4")
    x = np.asarray(x, float)
    lam_x = float(lam) if np.isscalar(lam) else float(lam(x))
    if not lam_x > 0:
        raise CurvatureError("conformal factor must be positive")
    tilde = metric.conformal(lam, dlam, d2lam)
    b0 = curvature(metric, x, h_fd)
    b1 = curvature(tilde, x, h_fd)
    scale = max(1e-300, float(np.abs(b0.weyl).max()) * lam_x**2)
    comp = float(np.abs(b1.weyl - lam_x**2 * b0.weyl).max())
    n0 = weyl_norm_sq(b0)
    n1 = weyl_norm_sq(b1)
    expected = lam_x ** -4 * n0
    ratio = n1 / n0 if n0 != 0 else math.nan
    norm_err = abs(n1 - expected) / max(abs(expected), 1e-300)
    ok = comp <= tol * max(1.0, scale) and (norm_err <= tol or abs(n1 - expected) <= tol)
    return VerificationReport(
        "conformal_weyl", Verdict.PASS if ok else Verdict.CONCLUSION_FAILURE, max(comp, norm_err),
        {"lambda": lam_x, "weyl_component_error": comp, "norm_g": n0, "norm_tilde": n1,
         "norm_ratio": ratio, "expected_ratio": lam_x ** -4, "relative_norm_error": norm_err},
        {"metric": metric.name, "x": x, "tol": tol})


def strip_conformal_check(fiber: MetricField, x, t: float, tol: float = 1e-8) -> VerificationReport:
    """``sec(t)^2 (-dt^2 + cos(t)^2 g_N)`` is ``-ds^2 + g_N`` after
    ``s = ln(sec t + tan t)``: metric components and Weyl norms agree."""
    if fiber.n + 1 < 4:
        raise CurvatureError("needs a fiber of dimension >= 3")
    x = np.asarray(x, float)
    m = fiber.n
    warped_g = warped_over(fiber)
    P = np.append(x, t)

    def sec(z):
        return 1.0 / math.cos(z[m])

    def dsec(z):
        out = np.zeros(m + 1)
        out[m] = math.tan(z[m]) / math.cos(z[m])
        return out

    def d2sec(z):
        out = np.zeros((m + 1, m + 1))
        c = math.cos(z[m])
        out[m, m] = (1 + math.sin(z[m]) ** 2) / c**3
        return out

    tilde = warped_g.conformal(sec, dsec, d2sec)
    s = math.asinh(math.tan(t))
    J = np.eye(m + 1)
    J[m, m] = math.cos(t)  # dt/ds
    pulled = J.T @ tilde.metric(P) @ J
    product = product_field(fiber)
    target = product.metric(np.append(x, s))
    comp = float(np.abs(pulled - target).max())
    n_tilde = weyl_norm_sq(curvature(tilde, P))
    n_prod = weyl_norm_sq(curvature(product, np.append(x, s)))
    n_warp = weyl_norm_sq(curvature(warped_g, P))
    scale = max(1.0, abs(n_prod))
    err = max(abs(n_tilde - n_prod), abs(math.cos(t) ** 4 * n_warp - n_prod)) / scale
    ok = comp <= tol and err <= tol
    return VerificationReport(
        "strip_conformal", Verdict.PASS if ok else Verdict.CONCLUSION_FAILURE, max(comp, err),
        {"component_error": comp, "norm_tilde": n_tilde, "norm_product": n_prod, "norm_warped": n_warp,
         "s": s}, {"fiber": fiber.name, "x": x, "t": t, "tol": tol})


# The product-metric norm lemma ------------------------------------------------------------------


def lorentz_frame(G) -> np.ndarray:
    """Columns ``e_1..e_n`` orthonormal for ``G`` with ``e_n`` along the last
    coordinate; the timelike vector is processed first."""
    n = G.shape[0]
    basis = [np.eye(n)[n - 1]] + [np.eye(n)[k] for k in range(n - 1)]
    frame = []
    for v in basis:
        w = v.astype(float).copy()
        for e in frame:
            w -= (w @ G @ e) / (e @ G @ e) * e
        q = w @ G @ w
        if abs(q) < 1e-12:
            raise CurvatureError("null vector during Gram-Schmidt")
        frame.append(w / math.sqrt(abs(q)))
    E = np.column_stack(frame[1:] + frame[:1])
    return E


def lemma_tensor(bundle: CurvatureBundle, a: float, b: float, reading: str = "bS") -> np.ndarray:
    """``V = R + a (Ricci wedge g) + c (g wedge g)`` with ``c = b S`` (``bS``
    reading) or ``c = b`` (plain reading)."""
    if reading not in ("bS", "b"):
        raise ValueError("reading must be 'bS' or 'b'")
    c = b * bundle.scalar if reading == "bS" else b
    G = bundle.metric
    return bundle.riemann + a * _ricci_wedge(G, bundle.ricci) + c * _kulkarni_gg(G)


def _is_product(metric: MetricField, x, tol=1e-10) -> bool:
    G = metric.metric(x)
    dG, _ = metric.derivatives(x)
    return (abs(G[-1, -1] + 1) <= tol and np.abs(G[-1, :-1]).max(initial=0) <= tol
            and np.abs(dG[-1]).max() <= tol and np.abs(dG[:, -1, :]).max() <= tol)


def product_norm_decomposition(metric: MetricField, x, a_coef: float, b_coef: float,
                               tol: float = 1e-8) -> VerificationReport:
    """Compare ``||V||^2`` with ``sum (V_ijkl)^2 + 4 sum (a R_ij + b S g_ij)^2``
    in a frame with ``e_n = d/dt``, for both readings of the ``b`` term."""
    x = np.asarray(x, float)
    if not _is_product(metric, x):
        raise CurvatureError(f"{metric.name} is not of the form -dt^2 + g_N at {x}")
    bundle = curvature(metric, x)
    E = lorentz_frame(bundle.metric)
    m = metric.n - 1
    Ric_f = E.T @ bundle.ricci @ E
    g_f = E.T @ bundle.metric @ E
    sides = {}
    for reading in ("bS", "b"):
        V = lemma_tensor(bundle, a_coef, b_coef, reading)
        lhs = tensor_norm_sq(V, bundle.inverse)
        Vf = np.einsum("abcd,ai,bj,ck,dl->ijkl", V, E, E, E, E)
        block = a_coef * Ric_f[:m, :m] + b_coef * bundle.scalar * g_f[:m, :m]
        rhs = float(np.sum(Vf[:m, :m, :m, :m] ** 2) + 4 * np.sum(block**2))
        sides[reading] = {"lhs": lhs, "rhs": rhs, "residual": abs(lhs - rhs) / max(1.0, abs(rhs))}
    satisfied = [r for r, v in sides.items() if v["residual"] <= tol]
    main = sides["bS"]
    ok = main["residual"] <= tol and main["lhs"] >= -tol
    return VerificationReport(
        "product_norm_decomposition", Verdict.PASS if ok else Verdict.CONCLUSION_FAILURE, main["residual"],
        {"readings": sides, "satisfied_by": satisfied, "norm_sq": main["lhs"], "scalar": bundle.scalar},
        {"metric": metric.name, "x": x, "a": a_coef, "b": b_coef, "tol": tol})


def weyl_coefficients(n: int):
    """``(a, b)`` that turn the lemma's ``V`` (``bS`` reading) into the Weyl tensor."""
    return -1.0 / (n - 2), 1.0 / ((n - 1) * (n - 2))


# Schur residual ---------------------------------------------------------------------------------


def mean_sectional_curvature(bundle: CurvatureBundle) -> float:
    n = bundle.n
    return bundle.scalar / (n * (n - 1))


def schur_residual(fiber: MetricField, x, n_planes: int = 64, seed: int = 0, min_area: float = 1e-6) -> float:
    """``max |K(plane) - K_mean|`` over random 2-planes at ``x``."""
    if fiber.n < 3:
        raise CurvatureError("Schur residual needs a fiber of dimension >= 3")
    bundle = curvature(fiber, x)
    if np.linalg.eigvalsh(bundle.metric)[0] <= 0:
        raise CurvatureError("Schur residual expects a Riemannian fiber metric")
    Kbar = mean_sectional_curvature(bundle)
    rng = np.random.default_rng(seed)
    worst = 0.0
    accepted = 0
    attempts = 0
    while accepted < n_planes:
        attempts += 1
        if attempts > 20 * n_planes:
            raise CurvatureError("too many degenerate plane samples")
        X, Y = rng.standard_normal((2, fiber.n))
        G = bundle.metric
        area = (X @ G @ X) * (Y @ G @ Y) - (X @ G @ Y) ** 2
        if area < min_area * (X @ G @ X) * (Y @ G @ Y):
            continue
        worst = max(worst, abs(sectional_curvature(bundle, X, Y) - Kbar))
        accepted += 1
    return float(worst)
