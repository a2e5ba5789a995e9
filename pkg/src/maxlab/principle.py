"""Constructive machinery of the strong maximum principle.

Coordinates follow the standard normalisation: the centre ``x0`` of the
contact ball is moved to the origin, ``x1`` sits on the sphere of radius
``2 r0`` and the comparison function is ``w(x) = |x|^-alpha``.

The proof's constants are extreme.  For the flat mean-curvature operator in
dimension 2, ``alpha_bar`` is about 1128 and ``delta_bar = r0^(alpha+2)/alpha``
is around ``1e-540``, far below the float64 range.  Every quantity that
carries a factor ``delta`` or ``|x|^-alpha`` is therefore computed with
:mod:`mpmath` (arbitrary exponent range, 53-bit mantissa) and only the
products that are O(1) by construction, such as ``delta * D^2 w``, are
converted back to floats.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

import mpmath
import numpy as np

from . import kernels
from .grid import GridFunction
from .quasilinear import (AdmissibilityError, Jet2, QuasiLinearOperator, coefficient_bounds_check,
                          evaluate, linearization_coefficients)
from .report import VerificationReport, Verdict
from .symkernel import max_abs_entry, symmetrize

mp = mpmath.mp

INCONSISTENT = "INCONSISTENT-HYPOTHESES"
IDENTICAL = "IDENTICAL"
CONTACT_RTOL = 1e-9


def _mpf(v):
    if isinstance(v, Fraction):
        return mpmath.mpf(v.numerator) / v.denominator
    return mpmath.mpf(v)


def _exact(v) -> Fraction:
    """Rational value of a user-supplied number (floats by their decimal repr)."""
    if isinstance(v, Fraction):
        return v
    if isinstance(v, (int, np.integer)):
        return Fraction(int(v))
    if isinstance(v, str):
        return Fraction(v)
    return Fraction(repr(float(v)))


# Comparison function -----------------------------------------------------------


@dataclass(frozen=True)
class ComparisonFunction:
    """``w(x) = |x|^-alpha`` with closed-form derivatives."""

    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")

    def _norm(self, x):
        x = np.asarray(x, float)
        n = float(np.linalg.norm(x))
        if n == 0.0:
            raise ValueError("comparison function is singular at x = 0")
        return x, n

    def value(self, x) -> float:
        _, n = self._norm(x)
        return n ** (-self.alpha)

    def grad(self, x) -> np.ndarray:
        x, n = self._norm(x)
        return -self.alpha * n ** (-(self.alpha + 2)) * x

    def hess(self, x) -> np.ndarray:
        x, n = self._norm(x)
        a = self.alpha
        return symmetrize(a * (a + 2) * n ** (-(a + 4)) * np.outer(x, x) - a * n ** (-(a + 2)) * np.eye(x.size))

    def jet(self, x) -> Jet2:
        return Jet2(x, self.value(x), self.grad(x), self.hess(x))

    def bands(self, r0: float):
        """``(grad_max, hess_lo, hess_hi)`` valid on ``r0 <= |x| <= 3 r0 <= 1``."""
        s = self.alpha * r0 ** (-(self.alpha + 2))
        return s, -s, (self.alpha + 2) * s


def comparison_jet(alpha: float, x) -> Jet2:
    return ComparisonFunction(float(alpha)).jet(x)


def scaled_comparison(alpha, delta, x):
    """``(delta*w, delta*Dw, delta*D^2w)`` at ``x`` as floats.

    The scale factor ``delta * alpha * |x|^-(alpha+2)`` is formed in mpmath so
    that neither ``delta`` nor ``|x|^-alpha`` has to be representable.
    """
    x = np.asarray(x, float)
    n = float(np.linalg.norm(x))
    if n == 0.0:
        raise ValueError("comparison function is singular at x = 0")
    a = _mpf(alpha)
    nn = mpmath.mpf(n)
    dw = _mpf(delta) * nn ** (-a)
    s = float(_mpf(delta) * a * nn ** (-(a + 2)))
    af = float(a)
    hess = symmetrize(s * ((af + 2) * np.outer(x, x) / n**2 - np.eye(x.size)))
    return float(dw), -s * x, hess


def comparison_bands_check(alpha: float, r0: float, points) -> VerificationReport:
    """Eigenvalue check of the gradient and Hessian bands on the annulus."""
    cf = ComparisonFunction(alpha)
    g_max, h_lo, h_hi = cf.bands(r0)
    worst = None
    checked = 0
    for x in np.atleast_2d(points):
        n = np.linalg.norm(x)
        if not (r0 <= n <= 3 * r0 * (1 + 1e-12)):
            continue
        checked += 1
        g = np.linalg.norm(cf.grad(x))
        ev = np.linalg.eigvalsh(cf.hess(x))
        tol = 1e-12 * h_hi
        if g > g_max * (1 + 1e-12) or ev[0] < h_lo - tol or ev[-1] > h_hi + tol:
            worst = {"x": x, "grad_norm": g, "eig": ev}
            break
    verdict = Verdict.PASS if worst is None else Verdict.CONCLUSION_FAILURE
    return VerificationReport("comparison_bands", verdict, None, worst or {"checked": checked},
                              {"alpha": alpha, "r0": r0})


# Constant ledger -------------------------------------------------------------------


@dataclass(frozen=True)
class ConstantLedger:
    """Closed-form constants of the proof for given ``(m, C_E, C_S, r0)``.

    ``C_H`` and ``alpha_bar`` are exact rationals.  ``delta_bar`` and ``r1``
    are mpmath numbers (they routinely underflow float64); use
    :meth:`delta_bar_exact` for exact rational values at integer ``alpha``.
    """

    m: int
    C_E: Fraction
    C_S: Fraction
    r0: Fraction
    C_H: Fraction
    alpha_bar: Fraction
    alpha: Fraction
    delta_bar: object
    r1: object

    def delta_bar_at(self, alpha=None, r0=None):
        a = _mpf(self.alpha if alpha is None else _exact(alpha))
        r = _mpf(self.r0 if r0 is None else _exact(r0))
        return r ** (a + 2) / a

    def delta_bar_exact(self, alpha=None) -> Fraction:
        a = self.alpha if alpha is None else _exact(alpha)
        if a.denominator != 1:
            raise ValueError("exact delta_bar needs an integer alpha")
        return self.r0 ** (int(a) + 2) / a

    def grad_scale(self, alpha=None, r0=None):
        """``alpha * r0^-(alpha+2)`` in mpmath."""
        a = _mpf(self.alpha if alpha is None else _exact(alpha))
        r = _mpf(self.r0 if r0 is None else _exact(r0))
        return a * r ** (-(a + 2))

    def r1_at(self, alpha=None, r0=None):
        r = _mpf(self.r0 if r0 is None else _exact(r0))
        k = self.m**2 * _mpf(self.C_E) * (_mpf(self.C_H) + 1)
        return min(r, 1 / (4 * k * self.grad_scale(alpha, r0)))

    def sum_bound(self, delta, alpha=None) -> float:
        """Right side of the Hessian-sum lemma for a given ``delta``."""
        t = float(_mpf(delta) * self.grad_scale(alpha))
        CE, CS = float(self.C_E), float(self.C_S)
        return 2 * (CE**2 * ((self.m - 1) * (CS + t) + 2) + t)

    @property
    def C_H_prime(self) -> Fraction:
        """Hessian bound for the ``delta = 0`` regularity argument."""
        return self.C_E**2 * ((self.m - 1) * self.C_S + 2)

    @property
    def B_norm_bound(self) -> Fraction:
        return self.m**3 * self.C_E * (self.C_H + 1)

    @property
    def BC_bound(self) -> Fraction:
        return self.m**2 * self.C_E * (self.C_H + 1)

    def with_r0(self, r0) -> "ConstantLedger":
        return derive_constants(self.m, self.C_E, self.C_S, r0, self.alpha)

    def shifted(self, H0) -> "ConstantLedger":
        """Ledger after moving ``H0`` into ``b`` (``C_E -> C_E + |H0|``)."""
        return derive_constants(self.m, self.C_E + abs(_exact(H0)), self.C_S, self.r0)

    def to_dict(self):
        def num(q: Fraction):
            return int(q) if q.denominator == 1 else {"fraction": f"{q.numerator}/{q.denominator}", "float": float(q)}

        return {
            "m": self.m, "C_E": num(self.C_E), "C_S": num(self.C_S), "r0": num(self.r0),
            "C_H": num(self.C_H), "alpha_bar": num(self.alpha_bar), "alpha": num(self.alpha),
            "C_H_prime": num(self.C_H_prime),
            "delta_bar": mpmath.nstr(self.delta_bar, 15),
            "log10_delta_bar": float(mpmath.log10(self.delta_bar)),
            "r1": mpmath.nstr(self.r1, 15),
            "log10_r1": float(mpmath.log10(self.r1)),
        }


def hess_constant(m, C_E, C_S) -> Fraction:
    C_E, C_S = _exact(C_E), _exact(C_S)
    return 2 * (C_E**2 * ((m - 1) * (C_S + 1) + 2) + 1)


def alpha_bar(m, C_E, C_S) -> Fraction:
    C_E = _exact(C_E)
    C_H = hess_constant(m, C_E, C_S)
    return -2 + C_E * (1 + m * C_E + m**3 * C_E * (C_H + 1))


def derive_constants(m: int, C_E, C_S, r0, alpha=None) -> ConstantLedger:
    if int(m) != m or m < 1:
        raise ValueError("m must be a positive integer")
    C_E, C_S, r0 = _exact(C_E), _exact(C_S), _exact(r0)
    if C_E < 1:
        raise ValueError("C_E must be >= 1")
    if C_S < 0:
        raise ValueError("C_S must be >= 0")
    if not (0 < 3 * r0 <= 1):
        raise ValueError("need 0 < 3 r0 <= 1")
    m = int(m)
    C_H = hess_constant(m, C_E, C_S)
    a_bar = alpha_bar(m, C_E, C_S)
    a = a_bar if alpha is None else _exact(alpha)
    if a <= 0:
        raise ValueError("alpha must be positive")
    led = ConstantLedger(m, C_E, C_S, r0, C_H, a_bar, a, None, None)
    object.__setattr__(led, "delta_bar", led.delta_bar_at())
    object.__setattr__(led, "r1", led.r1_at())
    return led


def geometric_constants(ledger: ConstantLedger, r2, delta1, delta2):
    """Modified choices for the geometric version: ``r1`` also capped by
    ``r2`` and ``delta = min(delta1, delta3, delta_bar)`` with
    ``delta3 = delta2 / (alpha_bar r0^-(alpha_bar+2))``."""
    r1 = min(ledger.r1_at(), _mpf(_exact(r2)))
    delta3 = _mpf(delta2) / ledger.grad_scale(ledger.alpha_bar)
    delta = min(_mpf(delta1), delta3, ledger.delta_bar_at(ledger.alpha_bar))
    return {"r1": r1, "delta3": delta3, "delta": delta}


# Standard setup --------------------------------------------------------------------


@dataclass
class StandardSetup:
    """Data of the standard setup; ``x1``/``x_star`` are relative to ``x0``.

    ``jet0``/``jet1`` are the jets of ``phi0``/``phi1`` at the chart point
    ``origin + x_star``.
    """

    x1: np.ndarray
    x_star: np.ndarray
    r0: object
    r1: object
    alpha: object
    delta: object
    jet0: Jet2
    jet1: Jet2
    origin: Optional[np.ndarray] = None

    def __post_init__(self):
        self.x1 = np.asarray(self.x1, float)
        self.x_star = np.asarray(self.x_star, float)
        if self.origin is None:
            self.origin = np.zeros_like(self.x1)

    def f_derivatives(self):
        """``(Df, D^2f)`` at ``x_star`` for ``f = phi1 - phi0 + delta w``."""
        _, dw, d2w = scaled_comparison(self.alpha, self.delta, self.x_star)
        Df = self.jet1.p - self.jet0.p + dw
        D2f = symmetrize(self.jet1.hess - self.jet0.hess + d2w)
        return Df, D2f

    def to_dict(self):
        return {"x1": self.x1, "x_star": self.x_star, "r0": str(self.r0), "r1": mpmath.nstr(_mpf(self.r1), 15),
                "alpha": float(_mpf(self.alpha)), "delta": mpmath.nstr(_mpf(self.delta), 15),
                "jet0": self.jet0, "jet1": self.jet1, "origin": self.origin}


SETUP_ITEMS = ("1:x1-on-sphere", "2:radii", "3:alpha", "4:local-max", "5:hess-lower", "6:phi0-bound")


def validate_setup(setup: StandardSetup, op: QuasiLinearOperator, ledger: ConstantLedger,
                   tol: float = 1e-9) -> dict:
    """Check every item of the standard setup; returns ``{item: (ok, detail)}``."""
    out = {}
    r0 = _mpf(setup.r0)
    r1 = _mpf(setup.r1)
    n1 = float(np.linalg.norm(setup.x1))
    out[SETUP_ITEMS[0]] = (abs(n1 - 2 * float(r0)) <= tol * max(1.0, n1), {"norm_x1": n1})
    out[SETUP_ITEMS[1]] = (bool(0 < r1 <= r0 and 3 * r0 <= 1), {"r0": float(r0), "r1": mpmath.nstr(r1, 8)})
    out[SETUP_ITEMS[2]] = (bool(_mpf(setup.alpha) > 0), {"alpha": float(_mpf(setup.alpha))})
    dist = mpmath.mpf(float(np.linalg.norm(setup.x_star - setup.x1)))
    inside = bool(dist < r1)
    Df, D2f = setup.f_derivatives()
    df_norm = float(np.linalg.norm(Df))
    d2f_max = float(np.linalg.eigvalsh(D2f)[-1])
    at_x = np.allclose(setup.jet0.x, setup.origin + setup.x_star, rtol=0, atol=1e-12) and np.array_equal(
        setup.jet0.x, setup.jet1.x)
    ok4 = inside and bool(_mpf(setup.delta) > 0) and df_norm <= tol and d2f_max <= tol and at_x
    out[SETUP_ITEMS[3]] = (ok4, {"inside_ball": inside, "|Df|": df_norm, "max_eig_D2f": d2f_max,
                                 "jets_at_x_star": bool(at_x)})
    lam1 = float(np.linalg.eigvalsh(setup.jet1.hess)[0])
    out[SETUP_ITEMS[4]] = (lam1 >= -float(ledger.C_S) - tol, {"min_eig_hess1": lam1})
    j0 = setup.jet0
    try:
        if op.region is not None:
            op.region.require(j0.x, j0.r, j0.p)
        tr = float(np.sum(op.coeff_a(j0.x, j0.r, j0.p) * j0.hess))
        out[SETUP_ITEMS[5]] = (tr <= 2 * float(ledger.C_E) + tol, {"trace_a_hess0": tr})
    except AdmissibilityError as exc:
        out[SETUP_ITEMS[5]] = (False, {"inadmissible": str(exc)})
    return out


def failing_items(checks: dict):
    return [k for k, (ok, _) in checks.items() if not ok]


def hessian_budget(setup: StandardSetup, ledger: ConstantLedger, op: QuasiLinearOperator,
                   tol: float = 1e-9) -> VerificationReport:
    checks = validate_setup(setup, op, ledger, tol)
    bad = failing_items(checks)
    params = {"ledger": ledger, "tol": tol}
    if bad:
        return VerificationReport("hessian_budget", Verdict.HYPOTHESIS_FAILURE, None,
                                  {"failing_items": bad, "checks": checks}, params,
                                  message="standard setup violated: " + ", ".join(bad))
    total = max_abs_entry(setup.jet0.hess) + max_abs_entry(setup.jet1.hess)
    if _mpf(setup.delta) <= ledger.delta_bar_at(setup.alpha, setup.r0):
        branch, bound = "corollary", float(ledger.C_H)
    else:
        branch, bound = "lemma", ledger.sum_bound(setup.delta, setup.alpha)
    verdict = Verdict.PASS if total <= bound * (1 + tol) else Verdict.CONCLUSION_FAILURE
    return VerificationReport("hessian_budget", verdict, total - bound,
                              {"hessian_sum": total, "bound": bound, "branch": branch}, params)


def grad_diff_check(setup: StandardSetup, ledger: ConstantLedger, tol: float = 1e-9) -> VerificationReport:
    """``|D phi1 - D phi0| <= delta alpha r0^-(alpha+2)`` at ``x_star``."""
    diff = float(np.linalg.norm(setup.jet1.p - setup.jet0.p))
    bound = float(_mpf(setup.delta) * ledger.grad_scale(setup.alpha, setup.r0))
    ok = diff <= bound * (1 + 1e-9) + tol
    return VerificationReport("grad_diff", Verdict.PASS if ok else Verdict.CONCLUSION_FAILURE,
                              diff - bound, {"gradient_gap": diff, "bound": bound}, {"tol": tol})


# Operator lower bound -------------------------------------------------------------------


class PreconditionError(ValueError):
    def __init__(self, names, detail=None):
        super().__init__("preconditions failed: " + ", ".join(names))
        self.names = list(names)
        self.detail = detail or {}


def lw_value(alpha, x, A, B):
    """``L w(x) = A:D^2w + B.Dw`` as an mpmath number.

    Uses ``L w = alpha |x|^-(alpha+2) [ (alpha+2) xhat.A.xhat - tr A - B.x ]``.
    """
    x = np.asarray(x, float)
    A = np.asarray(A, float)
    B = np.asarray(B, float)
    n = float(np.linalg.norm(x))
    xh = x / n
    a = _mpf(alpha)
    bracket = (float(a) + 2) * float(xh @ A @ xh) - float(np.trace(A)) - float(B @ x)
    return a * mpmath.mpf(n) ** (-(a + 2)) * bracket


def log_lw_value(alpha, x, A, B) -> float:
    """Natural log of :func:`lw_value` (``-inf``/``nan`` when not positive)."""
    v = lw_value(alpha, x, A, B)
    return float(mpmath.log(v)) if v > 0 else (float("-inf") if v == 0 else float("nan"))


def lower_bound_preconditions(setup: StandardSetup, ledger: ConstantLedger, coeffs, op=None,
                              tol: float = 1e-9) -> dict:
    A, B, C = coeffs
    out = {}
    a = _exact(setup.alpha) if not hasattr(setup.alpha, "_mpf_") else None
    out["alpha=alpha_bar"] = (a == ledger.alpha_bar, {"alpha": float(_mpf(setup.alpha)),
                                                       "alpha_bar": float(ledger.alpha_bar)})
    db = ledger.delta_bar_at(ledger.alpha_bar, setup.r0)
    out["delta<=delta_bar"] = (bool(_mpf(setup.delta) <= db), {"delta": mpmath.nstr(_mpf(setup.delta), 8),
                                                               "delta_bar": mpmath.nstr(db, 8)})
    rep = coefficient_bounds_check(A, np.zeros_like(B), 0.0, float(ledger.C_E), setup.jet0.hess,
                                   setup.jet1.hess, tol)
    out["A-bounds"] = (rep.passed, rep.witness)
    bn = float(np.linalg.norm(B))
    out["B-norm"] = (bn <= float(ledger.B_norm_bound) * (1 + tol), {"norm_B": bn,
                                                                  "bound": float(ledger.B_norm_bound)})
    nx = float(np.linalg.norm(setup.x_star))
    r0 = float(_mpf(setup.r0))
    out["annulus"] = (r0 * (1 - tol) <= nx <= 3 * r0 * (1 + tol), {"norm_x_star": nx})
    if op is not None:
        bad = failing_items(validate_setup(setup, op, ledger, tol))
        out["setup"] = (not bad, {"failing_items": bad})
    return out


def comparison_operator_lower_bound(setup: StandardSetup, ledger: ConstantLedger, coeffs, op=None,
                                    check: bool = True, tol: float = 1e-9):
    """``L w(x_star)`` (an mpmath number); the caller asserts it is ``>= 1``.

    With ``check`` the preconditions (``alpha = alpha_bar``, ``delta <=
    delta_bar``, coefficient bounds, and the setup when ``op`` is given) are
    validated first and a :class:`PreconditionError` names the failures.
    """
    if check:
        pre = lower_bound_preconditions(setup, ledger, coeffs, op, tol)
        bad = failing_items(pre)
        if bad:
            raise PreconditionError(bad, pre)
    A, B, _ = coeffs
    return lw_value(setup.alpha, setup.x_star, A, B)


def lower_bound_report(setup, ledger, coeffs, op=None, tol: float = 1e-9) -> VerificationReport:
    pre = lower_bound_preconditions(setup, ledger, coeffs, op, tol)
    bad = failing_items(pre)
    if bad:
        return VerificationReport("operator_lower_bound", Verdict.HYPOTHESIS_FAILURE, None,
                                  {"out_of_contract": bad, "checks": pre}, {"tol": tol},
                                  message="out-of-contract input: " + ", ".join(bad))
    v = lw_value(setup.alpha, setup.x_star, coeffs[0], coeffs[1])
    ok = v >= 1 - 1e-9
    return VerificationReport("operator_lower_bound", Verdict.PASS if ok else Verdict.CONCLUSION_FAILURE,
                              float(mpmath.log10(v)) if v > 0 else None,
                              {"Lw": mpmath.nstr(v, 15)}, {"tol": tol})


def sample_standard_setups(op: QuasiLinearOperator, ledger: ConstantLedger, rng: np.random.Generator,
                           count: int, p_radius: float, r0_range=(0.05, 1 / 3), max_tries: int = 50):
    """Constructive sampler: every returned setup satisfies all items.

    ``p_radius`` bounds the gradients (keep it inside the operator's region).
    The point ``x_star`` is drawn inside ``B(x1, r1)``; since ``r1`` is tiny
    for realistic ledgers it usually coincides with ``x1`` in floating point.
    """
    m = ledger.m
    CE, CS = float(ledger.C_E), float(ledger.C_S)
    out = []
    while len(out) < count:
        r0 = Fraction(repr(float(rng.uniform(*r0_range))))
        led = ledger.with_r0(r0)
        u = rng.standard_normal(m)
        u /= np.linalg.norm(u)
        x1 = 2 * float(r0) * u
        v = rng.standard_normal(m)
        v /= np.linalg.norm(v)
        x_star = x1 + float(led.r1 * mpmath.mpf(float(rng.random()))) * v
        if not mpmath.mpf(float(np.linalg.norm(x_star - x1))) < led.r1:
            x_star = x1
        delta = led.delta_bar * mpmath.mpf(float(rng.uniform(1e-3, 1.0)))
        _, dw, d2w = scaled_comparison(led.alpha, delta, x_star)
        origin = rng.uniform(-1, 1, m)
        for _ in range(max_tries):
            p1 = rng.standard_normal(m)
            p1 *= p_radius * rng.random() ** (1 / m) / np.linalg.norm(p1)
            p0 = p1 + dw
            if np.linalg.norm(p0) >= p_radius:
                continue
            q, _ = np.linalg.qr(rng.standard_normal((m, m)))
            lam = rng.uniform(-CS, CS + 2.0, m)
            H1 = symmetrize((q * lam) @ q.T)
            if np.linalg.eigvalsh(H1)[0] < -CS:
                continue
            a0 = op.coeff_a(origin + x_star, 0.0, p0)
            base = symmetrize(H1 + d2w)
            budget = 2 * CE - float(np.sum(a0 * base))
            if budget < 0:
                continue
            q2, _ = np.linalg.qr(rng.standard_normal((m, m)))
            mu = rng.random(m)
            P = (q2 * mu) @ q2.T
            tp = float(np.sum(a0 * P))
            P = P * (budget * rng.random() / tp) if tp > 0 else P * 0
            H0 = symmetrize(base + symmetrize(P))
            # guard the first-order rounding: D^2 f = H1 - H0 + d2w must stay <= 0
            if np.linalg.eigvalsh(symmetrize(H1 - H0 + d2w))[-1] > 1e-12:
                continue
            r = float(rng.uniform(-0.5, 0.5))
            jet0 = Jet2(origin + x_star, r, p0, H0)
            jet1 = Jet2(origin + x_star, r, p1, H1)
            setup = StandardSetup(x1, x_star, r0, led.r1, led.alpha, delta, jet0, jet1, origin)
            if not failing_items(validate_setup(setup, op, led)):
                out.append((setup, led))
                break
    return out


# Contact geometry ------------------------------------------------------------------------


@dataclass
class ContactResult:
    status: str  # "ok", "identical", "no-ball"
    contact_mask: np.ndarray
    x0: Optional[np.ndarray] = None
    x1: Optional[np.ndarray] = None
    x1_index: Optional[tuple] = None
    r0: Optional[float] = None
    ball_3r0_inside: Optional[bool] = None
    candidates: int = 0

    def to_dict(self):
        return {"status": self.status, "contact_nodes": int(self.contact_mask.sum()), "x0": self.x0,
                "x1": self.x1, "x1_index": self.x1_index, "r0": self.r0,
                "ball_3r0_inside": self.ball_3r0_inside, "candidates": self.candidates}


class ContactError(ValueError):
    pass


def contact_set(u0: GridFunction, u1: GridFunction) -> np.ndarray:
    return (u0.values - u1.values) <= CONTACT_RTOL * (1 + np.abs(u0.values))


def contact_locator(u0: GridFunction, u1: GridFunction, tol: float = 1e-12) -> ContactResult:
    """Find a ball ``B(x0, 2 r0)`` inside the grid box whose closure meets the
    contact set ``K`` at exactly one node ``x1``, lying on its boundary.

    Each non-contact node ``c`` proposes the ball centred at ``c`` through its
    nearest contact node; the radius is capped so that ``3 r0 <= 1`` and, when
    the nearest contact node is not unique, halved and re-centred towards
    ``x1`` (an internally tangent ball touches the big sphere only at
    ``x1``).  Among balls inside the box the largest ``r0`` wins, ties going
    to the lexicographically smallest ``x0``.
    """
    if not u0.same_grid(u1):
        raise ValueError("u0 and u1 must share a grid")
    if np.any(u1.values > u0.values + CONTACT_RTOL * (1 + np.abs(u0.values))):
        raise ValueError("u1 <= u0 violated")
    K = contact_set(u0, u1)
    if not K.any():
        raise ContactError("no contact: K is empty")
    if K.all():
        return ContactResult("identical", K)
    pts = u0.points()
    kflat = K.ravel()
    kpts = pts[kflat]
    cands = pts[~kflat]
    d1, idx, d2 = kernels.nearest_two(cands, kpts)
    lo, hi = u0.lower(), u0.upper()
    R = np.minimum(d1, 2.0 / 3.0)
    unique = d2 > d1 * (1 + 1e-12) + tol
    R = np.where(unique, R, np.minimum(R, 0.5 * d1))
    x1s = kpts[idx]
    x0s = x1s + (cands - x1s) * (R / d1)[:, None]
    inside = np.all((x0s - R[:, None] >= lo - tol) & (x0s + R[:, None] <= hi + tol), axis=1) & (R > 0)
    if not inside.any():
        return ContactResult("no-ball", K, candidates=int(len(cands)))
    order = np.lexsort(tuple(np.round(x0s[:, k], 12) for k in reversed(range(x0s.shape[1])))
                       + (-np.round(R, 12),))
    order = [i for i in order if inside[i]]
    best = order[0]
    x0, x1, r = x0s[best], x1s[best], R[best]
    r0 = float(r / 2)
    inside3 = bool(np.all(x0 - 1.5 * r >= lo - tol) and np.all(x0 + 1.5 * r <= hi + tol))
    return ContactResult("ok", K, x0, x1, u0.index_of(x1), r0, inside3, int(inside.sum()))


# Support functions and suppliers -------------------------------------------------------------

Supplier = Callable[[np.ndarray, float], Jet2]


def analytic_supplier(f, grad, hess) -> Supplier:
    """A ``C^2`` function is its own support function at every point."""

    def supply(x, eps=0.0):
        x = np.asarray(x, float)
        return Jet2(x, float(f(x)), np.asarray(grad(x), float), symmetrize(np.asarray(hess(x), float)))

    return supply


def fd_supplier(grid: GridFunction) -> Supplier:
    """Jets of a grid function by centred differences (interior nodes only)."""

    def supply(x, eps=0.0):
        idx = grid.index_of(x)
        if any(i == 0 or i == s - 1 for i, s in zip(idx, grid.shape)):
            raise ValueError(f"node {idx} is on the boundary; no centred stencil")
        return Jet2(grid.node(idx), grid.values[idx], grid.gradient_at(idx), symmetrize(grid.hessian_at(idx)))

    return supply


@dataclass
class MaxPrincipleInstance:
    op: QuasiLinearOperator
    u0: GridFunction
    u1: GridFunction
    supplier0: Supplier  # upper support jets of u0
    supplier1: Supplier  # lower support jets of u1
    C_E: float
    C_S: float
    H0_window: tuple = (-np.inf, np.inf)
    name: str = "instance"
    window_samples: int = 2000
    tol: float = 1e-9
    notes: dict = field(default_factory=dict)


def _h_values(u0, u1, nodes_rel, x1_rel, alpha, delta):
    """``h = (u1 - u0) + delta (w - w(x1))`` at the given nodes, in mpmath."""
    a = _mpf(alpha)
    w1 = mpmath.mpf(float(np.linalg.norm(x1_rel))) ** (-a)
    out = []
    for diff, y in zip(u1 - u0, nodes_rel):
        out.append(mpmath.mpf(float(diff)) + _mpf(delta) * (mpmath.mpf(float(np.linalg.norm(y))) ** (-a) - w1))
    return out


def delta1_on_shell(u0: GridFunction, u1: GridFunction, contact: ContactResult, r1, alpha, K):
    """Negativity margin on ``S' = dB(x1, r1) ∩ closed B(x0, 2 r0)``.

    Nodes within one grid diagonal of ``S'`` (and outside ``K``) constrain
    ``delta1``: ``(u1-u0) + delta1 (w - w(x1)) < 0`` there.  We take half the
    tightest ratio ``(u0-u1)/(w-w(x1))``; with no constraining node the value
    is unbounded and ``delta_bar`` takes over.
    """
    pts = u0.points()
    x0, x1 = contact.x0, contact.x1
    band = float(np.linalg.norm(u0.spacing))
    dist1 = np.linalg.norm(pts - x1, axis=1)
    dist0 = np.linalg.norm(pts - x0, axis=1)
    r1f = float(_mpf(r1))
    near = (np.abs(dist1 - r1f) <= band) & (dist0 <= 4 * contact.r0 * (1 + 1e-12)) & ~K.ravel()
    a = _mpf(alpha)
    w1 = mpmath.mpf(float(np.linalg.norm(x1 - x0))) ** (-a)
    best = None
    gap = (u0.values - u1.values).ravel()
    for k in np.flatnonzero(near):
        wy = mpmath.mpf(float(dist0[k])) ** (-a) if dist0[k] > 0 else mpmath.inf
        if wy > w1:
            ratio = mpmath.mpf(float(gap[k])) / (wy - w1)
            best = ratio if best is None or ratio < best else best
    return (None if best is None else best / 2), int(near.sum())


def _feasible_H0(inst: MaxPrincipleInstance, rng):
    pts = inst.u0.points()
    interior = inst.u0.interior_mask().ravel()
    nodes = pts[interior]
    if len(nodes) > inst.window_samples:
        nodes = nodes[np.sort(rng.choice(len(nodes), inst.window_samples, replace=False))]
    m0 = max(evaluate(inst.op, inst.supplier0(x, 0.0)) for x in nodes)
    m1 = min(evaluate(inst.op, inst.supplier1(x, 0.0)) for x in nodes)
    lo = max(m0, inst.H0_window[0])
    hi = min(m1, inst.H0_window[1])
    return lo, hi, {"max_M_u0": m0, "min_M_u1": m1, "window": list(inst.H0_window), "nodes": len(nodes)}


def contradiction_report(inst: MaxPrincipleInstance, seed: int = 0, max_retries: int = 8) -> VerificationReport:
    """Run the whole contradiction argument on a concrete instance.

    Stages: contact ball, ``H0`` window and normalisation, ledger, ``delta``
    and ``epsilon``, interior maximum ``x_star`` of ``h``, support jets, the
    coefficients ``A, B, C``, then the two branches

    * P: all hypotheses of the estimate chain hold, so ``L f(x_star) >= delta/4``;
    * N: ``Df = 0`` and ``D^2 f <= 0`` (to ``tol``), so ``L f(x_star) <= 0``.

    Both firing is the contradiction of the proof (``INCONSISTENT-HYPOTHESES``).
    Otherwise the report names the hypothesis that failed.
    """
    rng = np.random.default_rng(seed)
    params = {"instance": inst.name, "C_E": inst.C_E, "C_S": inst.C_S, "tol": inst.tol}

    def done(verdict, outcome=None, witness=None, message="", ledger=None, residual=None):
        p = dict(params, ledger=ledger)
        return VerificationReport("max_principle", verdict, residual, witness or {}, p, seed, outcome, message)

    try:
        contact = contact_locator(inst.u0, inst.u1)
    except ContactError as exc:
        return done(Verdict.HYPOTHESIS_FAILURE, "NO-CONTACT", message=str(exc))
    if contact.status == "identical":
        return done(Verdict.PASS, IDENTICAL, contact.to_dict(), "u0 and u1 coincide on the grid")
    if contact.status != "ok":
        return done(Verdict.HYPOTHESIS_FAILURE, "NO-BALL", contact.to_dict(),
                    "no admissible contact ball at grid resolution")

    lo, hi, wdet = _feasible_H0(inst, rng)
    if not lo <= hi + inst.tol:
        return done(Verdict.HYPOTHESIS_FAILURE, "EMPTY-H0-WINDOW", {"contact": contact.to_dict(), "H0": wdet},
                    f"no H0 satisfies M[u0] <= H0 <= M[u1]: need {lo:.6g} <= H0 <= {hi:.6g}")
    H0 = 0.5 * (lo + hi) if np.isfinite(lo) and np.isfinite(hi) else (lo if np.isfinite(lo) else (hi if np.isfinite(hi) else 0.0))
    op = inst.op.shifted(H0)
    m = op.m
    r0 = min(Fraction(repr(contact.r0)), Fraction(1, 3))
    ledger = derive_constants(m, _exact(inst.C_E) + abs(_exact(H0)), inst.C_S, r0)
    alpha = ledger.alpha_bar
    x0 = contact.x0
    K = contact.contact_mask
    r1 = ledger.r1
    witness = {"contact": contact.to_dict(), "H0": dict(wdet, chosen=H0)}

    for attempt in range(max_retries):
        d1, n_shell = delta1_on_shell(inst.u0, inst.u1, contact, r1, alpha, K)
        delta = ledger.delta_bar if d1 is None else min(d1, ledger.delta_bar)
        eps = min(delta / 4, _mpf(ledger.C_E)) / 2
        pts = inst.u0.points()
        rel = pts - x0
        dist1 = np.linalg.norm(pts - contact.x1, axis=1)
        r1f = float(r1)
        in_ball = np.flatnonzero((mpmath_lt_vec(dist1, r1)) & inst.u0.interior_mask().ravel())
        hv = _h_values(inst.u0.values.ravel()[in_ball], inst.u1.values.ravel()[in_ball], rel[in_ball],
                       contact.x1 - x0, alpha, delta)
        if len(in_ball) == 0:
            return done(Verdict.HYPOTHESIS_FAILURE, "CONTACT-ON-BOUNDARY", witness,
                        "the contact node has no centred stencil", ledger)
        # ties: smallest lexicographic coordinate
        best = max(range(len(in_ball)), key=lambda k: (hv[k], tuple(-pts[in_ball[k]])))
        k_star = in_ball[best]
        if dist1[k_star] >= r1f * (1 - 1e-9) and dist1[k_star] > 0:
            r1 = r1 / 2
            continue
        break
    else:
        return done(Verdict.NUMERICAL_QUALITY, "BOUNDARY-MAX", witness, "maximum of h stayed on the boundary",
                    ledger)
    x_star_chart = pts[k_star]
    x_star = x_star_chart - x0
    witness.update({"x_star": x_star_chart, "delta": mpmath.nstr(delta, 15), "epsilon": mpmath.nstr(eps, 15),
                    "delta1": None if d1 is None else mpmath.nstr(d1, 15), "shell_nodes": n_shell,
                    "r1": mpmath.nstr(r1, 15), "retries": attempt})
    epsf = float(eps)
    try:
        jet0 = inst.supplier0(x_star_chart, epsf)
        jet1 = inst.supplier1(x_star_chart, epsf)
        M0 = evaluate(op, jet0)
        M1 = evaluate(op, jet1)
        A, B, C = linearization_coefficients(op, jet0, jet1)
    except AdmissibilityError as exc:
        return done(Verdict.HYPOTHESIS_FAILURE, "INADMISSIBLE-JET", dict(witness, point=exc.point), str(exc),
                    ledger)
    setup = StandardSetup(contact.x1 - x0, x_star, r0, r1, alpha, delta, jet0, jet1, x0)
    Df, D2f = setup.f_derivatives()
    tol = inst.tol

    # Branch P: hypotheses of the estimate chain
    hyp = {}
    for k, (ok, det) in validate_setup(setup, op, ledger, tol).items():
        hyp["setup " + k] = (ok, det)
    hyp["M[phi0] <= eps"] = (M0 <= epsf + tol, {"M_phi0": M0})
    hyp["M[phi1] >= -eps"] = (M1 >= -epsf - tol, {"M_phi1": M1})
    for k, v in lower_bound_preconditions(setup, ledger, (A, B, C), None, tol).items():
        hyp[k] = v
    gap_u = abs(float(inst.u1.values.ravel()[k_star] - inst.u0.values.ravel()[k_star]))
    gap_bound = delta * ledger.grad_scale(alpha, r0) * r1
    hyp["|u1-u0|(x*) bound"] = (bool(mpmath.mpf(gap_u) <= gap_bound * (1 + 1e-9) + 1e-300),
                                {"gap": gap_u, "bound": mpmath.nstr(gap_bound, 8)})
    failed = failing_items(hyp)
    Lw = lw_value(alpha, x_star, A, B)
    chain = mpmath.mpf(M1 - M0) - mpmath.mpf(abs(C)) * mpmath.mpf(abs(jet1.r - jet0.r)) + delta * Lw
    p_fires = not failed
    witness["branch_P"] = {"hypotheses": {k: ok for k, (ok, _) in hyp.items()}, "failed": failed,
                           "Lw": mpmath.nstr(Lw, 15), "chain_lower_bound": mpmath.nstr(chain, 15),
                           "delta_over_4": mpmath.nstr(delta / 4, 15)}
    # Branch N: first/second derivative tests at the maximum of f
    d2_max = float(np.linalg.eigvalsh(D2f)[-1])
    df_norm = float(np.linalg.norm(Df))
    Lf = float(np.sum(A * D2f) + B @ Df)
    n_fires = df_norm <= tol and d2_max <= tol
    witness["branch_N"] = {"|Df|": df_norm, "max_eig_D2f": d2_max, "Lf_direct": Lf,
                           "Lf_allowance": tol * (float(np.trace(A)) + float(np.linalg.norm(B)))}
    witness["coefficients"] = {"A": A, "B": B, "C": C}
    if p_fires and not chain >= delta / 4 * (1 - 1e-9):
        return done(Verdict.CONCLUSION_FAILURE, "CHAIN-VIOLATED", witness,
                    "estimate chain fell below delta/4 under valid hypotheses", ledger)
    if p_fires and n_fires:
        return done(Verdict.PASS, INCONSISTENT, witness,
                    "both branches fire: L f(x*) >= delta/4 > 0 and L f(x*) <= 0", ledger)
    names = failed if not p_fires else ["Df=0, D2f<=0"]
    return done(Verdict.HYPOTHESIS_FAILURE, "HYPOTHESIS-FAILED", witness,
                "failed: " + ", ".join(names), ledger)


def mpmath_lt_vec(values, bound) -> np.ndarray:
    """Elementwise ``values < bound`` where ``bound`` may be below float range."""
    b = _mpf(bound)
    return np.array([mpmath.mpf(float(v)) < b for v in values], bool)


# Demonstration instances ------------------------------------------------------------------------


def plane_vs_hyperboloid_instance(n_side: int = 21, m: int = 2) -> MaxPrincipleInstance:
    """``u0 = 0`` (mean curvature 0) over ``u1 = 1 - sqrt(1+|x|^2)`` (mean
    curvature -1), touching at the origin, for the flat operator."""
    from .quasilinear import flat_mean_curvature

    op = flat_mean_curvature(m)
    lo, hi = -np.ones(m) * 0.5, np.ones(m) * 0.5
    shape = (n_side,) * m
    u0 = GridFunction.from_function(lambda P: np.zeros(len(P)), lo, hi, shape)
    u1 = GridFunction.from_function(lambda P: 1 - np.sqrt(1 + np.sum(P**2, axis=1)), lo, hi, shape)
    s0 = analytic_supplier(lambda x: 0.0, lambda x: np.zeros(m), lambda x: np.zeros((m, m)))

    def f1(x):
        return 1 - np.sqrt(1 + x @ x)

    def g1(x):
        return -x / np.sqrt(1 + x @ x)

    def h1(x):
        s = np.sqrt(1 + x @ x)
        return -np.eye(m) / s + np.outer(x, x) / s**3

    s1 = analytic_supplier(f1, g1, h1)
    return MaxPrincipleInstance(op, u0, u1, s0, s1, C_E=4.0, C_S=1.0, H0_window=(-1.0, 0.0),
                                name="plane-vs-lower-hyperboloid")


def fabricated_gap_instance(n_side: int = 21) -> MaxPrincipleInstance:
    """Laplacian instance whose support jets are fabricated by hand.

    ``u0 = 0`` and ``u1 = -|x|^2`` touch at the origin.  The suppliers claim
    ``M[phi0] = -eps`` and ``M[phi1] = eps`` (a strict gap) while making
    ``Df = 0`` exactly at the requested point.  Both branches of the
    argument then fire.
    """
    from .quasilinear import laplacian

    m = 2
    op = laplacian(m)
    lo, hi = -np.ones(m), np.ones(m)
    shape = (n_side,) * m
    u0 = GridFunction.from_function(lambda P: np.zeros(len(P)), lo, hi, shape)
    u1 = GridFunction.from_function(lambda P: -np.sum(P**2, axis=1), lo, hi, shape)
    state = {}

    def s0(x, eps=0.0):
        H = -(eps / m) * np.eye(m)
        p = state.get("dw", np.zeros(m)) if eps else np.zeros(m)
        return Jet2(x, 0.0, p, H)

    def s1(x, eps=0.0):
        return Jet2(x, -float(np.asarray(x) @ np.asarray(x)) if not eps else 0.0, np.zeros(m),
                    (eps / m) * np.eye(m))

    inst = MaxPrincipleInstance(op, u0, u1, s0, s1, C_E=1.0, C_S=0.0, H0_window=(-1.0, 1.0),
                                name="fabricated-strict-gap")

    # Df = p1 - p0 + delta Dw = 0 requires p0 = delta Dw(x_star); compute it
    # from the same deterministic geometry the pipeline will find.
    contact = contact_locator(u0, u1)
    r0 = min(Fraction(repr(contact.r0)), Fraction(1, 3))
    led = derive_constants(m, 1, 0, r0)
    d1, _ = delta1_on_shell(u0, u1, contact, led.r1, led.alpha, contact.contact_mask)
    delta = led.delta_bar if d1 is None else min(d1, led.delta_bar)
    _, dw, _ = scaled_comparison(led.alpha, delta, contact.x1 - contact.x0)
    state["dw"] = dw
    inst.notes["expected_x_star"] = contact.x1
    return inst


# Global support paraboloid -----------------------------------------------------------------------


def support_paraboloid(v: GridFunction, x0, C: float, a=None, tol: float = 1e-9):
    """Vector ``a`` and a nodewise check of
    ``v(x) >= v(x0) + <x - x0, a> - (C/2)|x - x0|^2``.

    ``a`` defaults to the centred-difference gradient at the interior node
    ``x0`` (the gradient of ``v`` where it is differentiable).
    """
    if C < 0:
        raise ValueError("C must be nonnegative")
    idx = v.index_of(x0)
    x0 = v.node(idx)
    if a is None:
        if any(i == 0 or i == s - 1 for i, s in zip(idx, v.shape)):
            raise ValueError("x0 on the boundary: supply a")
        a = v.gradient_at(idx)
    a = np.asarray(a, float)
    pts = v.points()
    d = pts - x0
    lower = v.values[idx] + d @ a - 0.5 * C * np.sum(d * d, axis=1)
    slack = v.values.ravel() - lower
    k = int(np.argmin(slack))
    scale = 1 + np.abs(v.values).max()
    ok = slack[k] >= -tol * scale
    rep = VerificationReport("support_paraboloid", Verdict.PASS if ok else Verdict.CONCLUSION_FAILURE,
                             float(slack[k]), {"a": a, "worst_node": pts[k], "worst_slack": float(slack[k])},
                             {"x0": x0, "C": C, "tol": tol})
    return a, rep
