"""Quasi-linear operators ``M[u] = sum a^ij(x,u,Du) D_ij u + b(x,u,Du)``.

An operator is a bundle of coefficient evaluators.  Derivatives in ``(r, p)``
are analytic when supplied and central finite differences otherwise; the
coefficients are never differentiated in ``x`` (they are only assumed
continuous there).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional

import numpy as np

from .report import VerificationReport, Verdict
from .symkernel import DEFAULT_TOL, max_abs_entry, symmetrize

FD_REL_STEP = 1e-5
DEFAULT_QUAD_ORDER = 16


class AdmissibilityError(ValueError):
    """A jet (or a point of a segment of jets) lies outside the region."""

    def __init__(self, message, point=None, t=None):
        super().__init__(message)
        self.point = point
        self.t = t


@dataclass(frozen=True)
class Jet2:
    """Second-order jet ``(x, r, p, hess)`` of a function at ``x``."""

    x: np.ndarray
    r: float
    p: np.ndarray
    hess: np.ndarray

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        p = np.atleast_1d(np.asarray(self.p, dtype=float))
        hess = np.atleast_2d(np.asarray(self.hess, dtype=float))
        m = x.shape[0]
        if p.shape != (m,) or hess.shape != (m, m):
            raise ValueError(f"inconsistent jet dimensions: x{x.shape}, p{p.shape}, hess{hess.shape}")
        if not np.array_equal(hess, hess.T):
            raise ValueError("jet Hessian is not symmetric")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "r", float(self.r))
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "hess", hess)

    @property
    def m(self) -> int:
        return self.x.shape[0]

    def blend(self, other: "Jet2", t: float) -> "Jet2":
        """Jet of ``(1-t) phi_self + t phi_other`` at the common point."""
        return Jet2(self.x, (1 - t) * self.r + t * other.r, (1 - t) * self.p + t * other.p,
                    (1 - t) * self.hess + t * other.hess)

    def to_dict(self):
        return {"x": self.x, "r": self.r, "p": self.p, "hess": self.hess}


@dataclass
class AdmissibleRegion:
    """Open set ``U`` of triples ``(x, r, p)`` given by a membership predicate."""

    m: int
    contains: Callable[[np.ndarray, float, np.ndarray], bool]
    convex_fibers: bool = True
    describe: str = ""
    fiber_sampler: Optional[Callable] = None  # (rng, x, count) -> (r[count], p[count, m])
    x_sampler: Optional[Callable] = None  # (rng, count) -> x[count, m]
    params: dict = field(default_factory=dict)

    def require(self, x, r, p, t=None):
        if not self.contains(np.asarray(x, float), float(r), np.asarray(p, float)):
            raise AdmissibilityError(
                f"(x, r, p) outside the admissible region{'' if t is None else f' at t={t:.6g}'}",
                point={"x": np.asarray(x, float), "r": float(r), "p": np.asarray(p, float)}, t=t)

    def sample(self, rng: np.random.Generator, count: int):
        """Yield ``count`` member triples (needs both samplers)."""
        if self.fiber_sampler is None or self.x_sampler is None:
            raise ValueError("region has no sampler attached")
        xs = self.x_sampler(rng, count)
        out = []
        for x in xs:
            r, p = self.fiber_sampler(rng, x, 1)
            out.append((x, float(r[0]), p[0]))
        return out

    def convexity_check(self, rng: np.random.Generator, n_x: int = 4, n_pairs: int = 10_000) -> VerificationReport:
        """Sampled fiber convexity: midpoints (and random convex combinations)
        of member pairs must be members."""
        if self.fiber_sampler is None or self.x_sampler is None:
            raise ValueError("region has no sampler attached")
        bad = None
        checked = 0
        for x in self.x_sampler(rng, n_x):
            r0, p0 = self.fiber_sampler(rng, x, n_pairs)
            r1, p1 = self.fiber_sampler(rng, x, n_pairs)
            ts = np.where(np.arange(n_pairs) % 2 == 0, 0.5, rng.random(n_pairs))
            for k in range(n_pairs):
                t = ts[k]
                r = (1 - t) * r0[k] + t * r1[k]
                p = (1 - t) * p0[k] + t * p1[k]
                checked += 1
                if not self.contains(x, r, p):
                    bad = {"x": x, "r": r, "p": p, "t": t}
                    break
            if bad is not None:
                break
        verdict = Verdict.PASS if bad is None else Verdict.CONCLUSION_FAILURE
        return VerificationReport("fiber_convexity", verdict, None, bad or {"pairs": checked},
                                  {"n_x": n_x, "n_pairs": n_pairs, "region": self.describe})


@dataclass
class QuasiLinearOperator:
    m: int
    a: Callable[[np.ndarray, float, np.ndarray], np.ndarray]
    b: Callable[[np.ndarray, float, np.ndarray], float]
    da_dr: Optional[Callable] = None  # -> (m, m)
    da_dp: Optional[Callable] = None  # -> (m, m, m), index [k, i, j] = d a^ij / d p^k
    db_dr: Optional[Callable] = None  # -> float
    db_dp: Optional[Callable] = None  # -> (m,)
    name: str = "custom"
    region: Optional[AdmissibleRegion] = None
    h_fd: float = FD_REL_STEP

    # Evaluators --------------------------------------------------------------

    def coeff_a(self, x, r, p) -> np.ndarray:
        A = np.asarray(self.a(x, r, p), dtype=float)
        if A.shape != (self.m, self.m):
            raise ValueError(f"a returned shape {A.shape}, expected {(self.m, self.m)}")
        if not np.allclose(A, A.T, rtol=0, atol=1e-14 * (1 + np.abs(A).max())):
            raise ValueError("coefficient matrix a is not symmetric")
        return symmetrize(A)

    def coeff_b(self, x, r, p) -> float:
        return float(self.b(x, r, p))

    def _step(self, v):
        return self.h_fd * (1.0 + abs(v))

    def d_a_dr(self, x, r, p):
        if self.da_dr is not None:
            return np.asarray(self.da_dr(x, r, p), dtype=float)
        h = self._step(r)
        return (self.coeff_a(x, r + h, p) - self.coeff_a(x, r - h, p)) / (2 * h)

    def d_a_dp(self, x, r, p):
        if self.da_dp is not None:
            return np.asarray(self.da_dp(x, r, p), dtype=float)
        p = np.asarray(p, dtype=float)
        out = np.empty((self.m, self.m, self.m))
        for k in range(self.m):
            h = self._step(p[k])
            e = np.zeros(self.m)
            e[k] = h
            out[k] = (self.coeff_a(x, r, p + e) - self.coeff_a(x, r, p - e)) / (2 * h)
        return out

    def d_b_dr(self, x, r, p):
        if self.db_dr is not None:
            return float(self.db_dr(x, r, p))
        h = self._step(r)
        return (self.coeff_b(x, r + h, p) - self.coeff_b(x, r - h, p)) / (2 * h)

    def d_b_dp(self, x, r, p):
        if self.db_dp is not None:
            return np.asarray(self.db_dp(x, r, p), dtype=float)
        p = np.asarray(p, dtype=float)
        out = np.empty(self.m)
        for k in range(self.m):
            h = self._step(p[k])
            e = np.zeros(self.m)
            e[k] = h
            out[k] = (self.coeff_b(x, r, p + e) - self.coeff_b(x, r, p - e)) / (2 * h)
        return out

    def shifted(self, H0: float) -> "QuasiLinearOperator":
        """Operator with ``b`` replaced by ``b - H0`` (the ``H0 = 0`` normalisation)."""
        b = self.b
        return replace(self, b=lambda x, r, p: b(x, r, p) - H0, name=f"{self.name}-shift({H0:g})")

    def with_region(self, region: AdmissibleRegion) -> "QuasiLinearOperator":
        return replace(self, region=region)


def evaluate(op: QuasiLinearOperator, jet: Jet2) -> float:
    if jet.m != op.m:
        raise ValueError(f"jet dimension {jet.m} != operator dimension {op.m}")
    if op.region is not None:
        op.region.require(jet.x, jet.r, jet.p)
    A = op.coeff_a(jet.x, jet.r, jet.p)
    return float(np.sum(A * jet.hess) + op.coeff_b(jet.x, jet.r, jet.p))


# Ellipticity -----------------------------------------------------------------


@dataclass
class EllipticityCertificate:
    C_E: float
    samples_checked: int
    worst_ratio: float
    worst_derivative_bound: float
    valid: bool
    witness: Optional[dict] = None

    def to_dict(self):
        return {"C_E": self.C_E, "samples_checked": self.samples_checked, "worst_ratio": self.worst_ratio,
                "worst_derivative_bound": self.worst_derivative_bound, "valid": self.valid,
                "witness": self.witness}


def ellipticity_profile(op: QuasiLinearOperator, x, r, p):
    """``(ratio, derivative_bound)`` at one point.

    ``ratio = max(lambda_max, 1/lambda_min)`` is the smallest ``C_E`` allowed by
    the eigenvalue pinching; ``derivative_bound`` the smallest allowed by the
    first-derivative and ``|b|`` bounds.
    """
    ev = np.linalg.eigvalsh(op.coeff_a(x, r, p))
    ratio = np.inf if ev[0] <= 0 else max(ev[-1], 1.0 / ev[0])
    der = max(max_abs_entry(op.d_a_dp(x, r, p)), max_abs_entry(op.d_a_dr(x, r, p)),
              max_abs_entry(op.d_b_dp(x, r, p)), abs(op.d_b_dr(x, r, p)), abs(op.coeff_b(x, r, p)))
    return float(ratio), float(der)


def certify_ellipticity(op: QuasiLinearOperator, region: Optional[AdmissibleRegion],
                        sampler: Iterable, C_E_candidate: float) -> EllipticityCertificate:
    """Check the eigenvalue pinching and derivative bounds at every sample.

    ``sampler`` yields ``(x, r, p)`` triples.  Samples outside ``region`` are
    a caller error.  The worst values are always recorded, so validity is
    monotone in ``C_E_candidate``.
    """
    worst_ratio = 0.0
    worst_der = 0.0
    witness = None
    count = 0
    for x, r, p in sampler:
        x = np.atleast_1d(np.asarray(x, float))
        p = np.atleast_1d(np.asarray(p, float))
        if region is not None:
            region.require(x, r, p)
        ratio, der = ellipticity_profile(op, x, r, p)
        count += 1
        if witness is None and (ratio > C_E_candidate or der > C_E_candidate):
            witness = {"x": x, "r": float(r), "p": p, "ratio": ratio, "derivative_bound": der}
        worst_ratio = max(worst_ratio, ratio)
        worst_der = max(worst_der, der)
    if count == 0:
        raise ValueError("empty sample set")
    return EllipticityCertificate(float(C_E_candidate), count, worst_ratio, worst_der, witness is None, witness)


# Linearisation ---------------------------------------------------------------


def _gauss_legendre_unit(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def linearization_coefficients(op: QuasiLinearOperator, jet0: Jet2, jet1: Jet2,
                               quadrature_order: int = DEFAULT_QUAD_ORDER):
    """``(A, B, C)`` with ``M[phi1] - M[phi0] = A:D^2(phi1-phi0) + B.D(phi1-phi0) + C(phi1-phi0)``.

    The t-integrals along ``phi_t = (1-t) phi0 + t phi1`` use Gauss-Legendre
    nodes on ``[0, 1]``; admissibility of the segment is checked at those nodes.
    """
    if quadrature_order < 1:
        raise ValueError("quadrature_order must be positive")
    if not np.array_equal(jet0.x, jet1.x):
        raise ValueError("jets must sit at the same point")
    m = op.m
    A = np.zeros((m, m))
    B = np.zeros(m)
    C = 0.0
    nodes, weights = _gauss_legendre_unit(quadrature_order)
    x = jet0.x
    for t, wt in zip(nodes, weights):
        jt = jet0.blend(jet1, t)
        if op.region is not None:
            op.region.require(x, jt.r, jt.p, t=t)
        A += wt * op.coeff_a(x, jt.r, jt.p)
        dadp = op.d_a_dp(x, jt.r, jt.p)
        B += wt * (np.einsum("ijk,jk->i", dadp, jt.hess) + op.d_b_dp(x, jt.r, jt.p))
        C += wt * (float(np.sum(op.d_a_dr(x, jt.r, jt.p) * jt.hess)) + op.d_b_dr(x, jt.r, jt.p))
    return symmetrize(A), B, float(C)


def linearization_residual(op: QuasiLinearOperator, jet0: Jet2, jet1: Jet2,
                           quadrature_order: int = DEFAULT_QUAD_ORDER) -> float:
    """Both sides of the difference identity evaluated independently; returns the gap."""
    A, B, C = linearization_coefficients(op, jet0, jet1, quadrature_order)
    lhs = evaluate(op, jet1) - evaluate(op, jet0)
    rhs = float(np.sum(A * (jet1.hess - jet0.hess)) + B @ (jet1.p - jet0.p) + C * (jet1.r - jet0.r))
    return abs(lhs - rhs)


def coefficient_bounds_check(A, B, C, C_E, hess0, hess1, tol: float = DEFAULT_TOL) -> VerificationReport:
    """Diagonal/off-diagonal bounds on ``A`` and the ``n^2 C_E(|D^2phi0|+|D^2phi1|+1)``
    bound on every ``|B^i|`` and ``|C|``."""
    A = np.asarray(A, float)
    B = np.asarray(B, float)
    m = A.shape[0]
    bc_bound = m * m * C_E * (max_abs_entry(hess0) + max_abs_entry(hess1) + 1.0)
    slack = tol * max(1.0, C_E)
    problems = []
    for i in range(m):
        if not (1.0 / C_E - slack <= A[i, i] <= C_E + slack):
            problems.append({"term": "A_diag", "index": [i, i], "value": A[i, i]})
        for j in range(m):
            if abs(A[i, j]) > C_E + slack:
                problems.append({"term": "A_entry", "index": [i, j], "value": A[i, j]})
    for i in range(m):
        if abs(B[i]) > bc_bound * (1 + tol):
            problems.append({"term": "B", "index": [i], "value": B[i]})
    if abs(C) > bc_bound * (1 + tol):
        problems.append({"term": "C", "index": [], "value": float(C)})
    worst = max([abs(B).max(initial=0.0), abs(C)]) - bc_bound
    verdict = Verdict.PASS if not problems else Verdict.CONCLUSION_FAILURE
    return VerificationReport("coefficient_bounds", verdict, float(worst),
                              {"violations": problems[:8], "bc_bound": bc_bound},
                              {"C_E": C_E, "m": m, "tol": tol})


# Built-in operators ------------------------------------------------------------


def laplacian(m: int) -> QuasiLinearOperator:
    eye = np.eye(m)
    zero3 = np.zeros((m, m, m))
    return QuasiLinearOperator(
        m, a=lambda x, r, p: eye, b=lambda x, r, p: 0.0,
        da_dr=lambda x, r, p: np.zeros((m, m)), da_dp=lambda x, r, p: zero3,
        db_dr=lambda x, r, p: 0.0, db_dp=lambda x, r, p: np.zeros(m), name="laplacian")


def _flat_W(p):
    s = 1.0 - float(np.dot(p, p))
    if s <= 0:
        raise AdmissibilityError(f"gradient is not spacelike: 1 - |p|^2 = {s:.6g}", point={"p": p})
    return np.sqrt(s)


def flat_mean_curvature(m: int) -> QuasiLinearOperator:
    """Mean-curvature operator of graphs ``t = f(x)`` over ``R^m`` in
    Minkowski space: ``H = (1/m) div(Df / sqrt(1 - |Df|^2))``."""
    eye = np.eye(m)

    def a(x, r, p):
        p = np.asarray(p, float)
        W = _flat_W(p)
        return (eye / W + np.outer(p, p) / W**3) / m

    def da_dp(x, r, p):
        p = np.asarray(p, float)
        W = _flat_W(p)
        w3, w5 = W**-3, W**-5
        out = (p[:, None, None] * (w3 * eye[None] + 3 * w5 * np.outer(p, p)[None])
               + w3 * (eye[:, :, None] * p[None, None, :] + p[None, :, None] * eye[:, None, :]))
        return out / m

    return QuasiLinearOperator(
        m, a=a, b=lambda x, r, p: 0.0, da_dr=lambda x, r, p: np.zeros((m, m)), da_dp=da_dp,
        db_dr=lambda x, r, p: 0.0, db_dp=lambda x, r, p: np.zeros(m), name="flat-mean-curvature")


def chart_mean_curvature(chart) -> QuasiLinearOperator:
    """Mean-curvature operator of graphs over a Lorentzian chart (FD in ``(r, p)``)."""
    from .lorgraph import mean_curvature_coefficients_at

    m = chart.n - 1

    def a(x, r, p):
        return mean_curvature_coefficients_at(chart, x, r, p)[0]

    def b(x, r, p):
        return mean_curvature_coefficients_at(chart, x, r, p)[1]

    return QuasiLinearOperator(m, a=a, b=b, name=f"chart-mean-curvature[{chart.name}]")


def tabulated_operator(table: dict) -> QuasiLinearOperator:
    """Operator whose coefficients are tables over an ``(r, p)`` grid.

    Keys: ``m``; ``r`` (grid); ``p`` (list of ``m`` grids); ``a`` with shape
    ``(len r, len p_1, ..., len p_m, m, m)``; ``b`` with shape
    ``(len r, len p_1, ..., len p_m)``; optional ``method`` (default ``cubic``).
    Tables carry no ``x`` dependence.
    """
    from scipy.interpolate import RegularGridInterpolator

    try:
        m = int(table["m"])
        axes = [np.asarray(table["r"], float)] + [np.asarray(g, float) for g in table["p"]]
        avals = np.asarray(table["a"], float)
        bvals = np.asarray(table["b"], float)
    except KeyError as exc:
        raise ValueError(f"coefficient table is missing field {exc.args[0]!r}") from None
    if len(axes) != m + 1:
        raise ValueError(f"expected {m} p-axes, got {len(axes) - 1}")
    grid_shape = tuple(len(ax) for ax in axes)
    if avals.shape != grid_shape + (m, m):
        raise ValueError(f"field 'a' has shape {avals.shape}, expected {grid_shape + (m, m)}")
    if bvals.shape != grid_shape:
        raise ValueError(f"field 'b' has shape {bvals.shape}, expected {grid_shape}")
    if not np.allclose(avals, np.swapaxes(avals, -1, -2)):
        raise ValueError("field 'a' is not symmetric")
    method = table.get("method", "cubic")
    if method == "cubic" and min(grid_shape) < 4:
        method = "linear"
    ia = RegularGridInterpolator(axes, avals.reshape(grid_shape + (m * m,)), method=method)
    ib = RegularGridInterpolator(axes, bvals, method=method)
    lo = np.array([ax[0] for ax in axes])
    hi = np.array([ax[-1] for ax in axes])

    def contains(x, r, p):
        q = np.concatenate([[r], p])
        return bool(np.all(q > lo) and np.all(q < hi))

    region = AdmissibleRegion(m, contains, True, describe="table box")

    def a(x, r, p):
        q = np.concatenate([[r], np.asarray(p, float)])[None]
        return symmetrize(ia(q)[0].reshape(m, m))

    def b(x, r, p):
        q = np.concatenate([[r], np.asarray(p, float)])[None]
        return float(ib(q)[0])

    return QuasiLinearOperator(m, a=a, b=b, name=table.get("name", "tabulated"), region=region)


def load_operator_table(path) -> QuasiLinearOperator:
    """Load a coefficient table from ``.json`` or ``.toml``."""
    from .config import load_structured

    return tabulated_operator(load_structured(path))


BUILTIN_OPERATORS = {
    "laplacian": laplacian,
    "flat-mean-curvature": flat_mean_curvature,
}


def builtin_operator(name: str, m: int) -> QuasiLinearOperator:
    try:
        return BUILTIN_OPERATORS[name](m)
    except KeyError:
        raise ValueError(f"unknown operator {name!r}; choose from {sorted(BUILTIN_OPERATORS) + ['chart-mean-curvature']}") from None


def sample_jet_pairs(region: AdmissibleRegion, rng: np.random.Generator, count: int, hess_scale: float = 1.0):
    """``count`` pairs of jets at a shared point, both fibers drawn from ``region``."""
    pairs = []
    for x in region.x_sampler(rng, count):
        r, p = region.fiber_sampler(rng, x, 2)
        H = rng.standard_normal((2, region.m, region.m)) * hess_scale
        H = 0.5 * (H + H.transpose(0, 2, 1))
        pairs.append((Jet2(x, float(r[0]), p[0], H[0]), Jet2(x, float(r[1]), p[1], H[1])))
    return pairs
