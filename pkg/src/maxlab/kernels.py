"""Hot inner loops, each with a numba loop body and a numpy twin.

The public functions dispatch on :func:`maxlab._accel.backend`.  Both paths
must agree to rounding; ``tests/test_kernels.py`` holds them to that and
``benchmarks/bench_kernels.py`` times them against each other.
"""

from __future__ import annotations

import math

import numpy as np

from ._accel import backend, njit

GL_ORDER = 16
PANEL_WIDTH = 1.0
_GL_X, _GL_W = np.polynomial.legendre.leggauss(GL_ORDER)


# --------------------------------------------------------------------------
# Warped-strip distance by separable shooting.
#
# For g = -dt^2 + cos(t)^2 g_N put u = ln(sec t + tan t), so cos t = sech u and
# dt = sech(u) du.  A timelike geodesic with fiber momentum L >= 0 sweeps
#     fiber span  D(L)   = int L / sqrt(sech^2 u + L^2) du
#     proper time tau(L) = int sech^2 u / sqrt(sech^2 u + L^2) du
# between the endpoint values of u.  D is increasing in L, so the initial
# direction theta = atan(L) is found by bisection.
# --------------------------------------------------------------------------


@njit(cache=True)
def _strip_integrals_loop(a, b, L, xg, wg, panel):
    width = b - a
    npan = max(1, int(math.ceil(width / panel)))
    h = width / npan
    span = 0.0
    tau = 0.0
    for k in range(npan):
        left = a + k * h
        for j in range(xg.shape[0]):
            u = left + 0.5 * h * (xg[j] + 1.0)
            s = 1.0 / math.cosh(u)
            s2 = s * s
            root = math.sqrt(s2 + L * L)
            span += wg[j] * L / root
            tau += wg[j] * s2 / root
    return 0.5 * h * span, 0.5 * h * tau


@njit(cache=True)
def _strip_distance_loop(a, b, D, xg, wg, panel):
    out = np.empty(a.shape[0])
    for q in range(a.shape[0]):
        if D[q] <= 0.0:
            out[q] = _strip_integrals_loop(a[q], b[q], 0.0, xg, wg, panel)[1]
            continue
        lo = 0.0
        hi = 0.5 * math.pi
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            span = _strip_integrals_loop(a[q], b[q], math.tan(mid), xg, wg, panel)[0]
            if span < D[q]:
                lo = mid
            else:
                hi = mid
        theta = 0.5 * (lo + hi)
        out[q] = _strip_integrals_loop(a[q], b[q], math.tan(theta), xg, wg, panel)[1]
    return out


def _strip_nodes(a, b):
    width = float(np.max(b - a)) if a.size else 0.0
    npan = max(1, int(math.ceil(width / PANEL_WIDTH)))
    offs = (np.arange(npan)[:, None] + 0.5 * (_GL_X[None, :] + 1.0)).ravel() / npan
    weights = np.tile(_GL_W, npan) / (2.0 * npan)
    h = (b - a)[:, None]
    u = a[:, None] + h * offs[None, :]
    return u, h * weights[None, :]


def _strip_distance_numpy(a, b, D):
    u, w = _strip_nodes(a, b)
    s2 = 1.0 / np.cosh(u) ** 2
    lo = np.zeros_like(a)
    hi = np.full_like(a, 0.5 * np.pi)
    active = D > 0.0
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        L = np.tan(mid)[:, None]
        span = np.sum(w * L / np.sqrt(s2 + L * L), axis=1)
        below = span < D
        lo = np.where(below & active, mid, lo)
        hi = np.where(~below & active, mid, hi)
    L = np.where(active, np.tan(0.5 * (lo + hi)), 0.0)[:, None]
    return np.sum(w * s2 / np.sqrt(s2 + L * L), axis=1)


def strip_distance(u0, u1, span):
    """Proper time of the timelike geodesic between conformal times ``u0 < u1``
    whose fiber projection has length ``span``.

    Arguments are broadcast to 1-d float arrays.  Callers guarantee
    ``0 <= span < u1 - u0`` (strict timelike separation).
    """
    a, b, D = np.broadcast_arrays(*(np.atleast_1d(np.asarray(v, dtype=float)) for v in (u0, u1, span)))
    a, b, D = (np.ascontiguousarray(v.ravel()) for v in (a, b, D))
    if backend() == "numba":
        return _strip_distance_loop(a, b, D, _GL_X, _GL_W, PANEL_WIDTH)
    return _strip_distance_numpy(a, b, D)


# --------------------------------------------------------------------------
# Batched spectral data for the trace-bound lemma sampler.
# --------------------------------------------------------------------------


@njit(cache=True)
def _spectral_batch_loop(A, B):
    n = A.shape[0]
    out = np.empty((n, 5))
    for k in range(n):
        ea = np.linalg.eigvalsh(A[k])
        eb = np.linalg.eigvalsh(B[k])
        tr = 0.0
        for i in range(A.shape[1]):
            for j in range(A.shape[2]):
                tr += A[k, i, j] * B[k, j, i]
        out[k, 0] = ea[0]
        out[k, 1] = ea[-1]
        out[k, 2] = eb[0]
        out[k, 3] = eb[-1]
        out[k, 4] = tr
    return out


def _spectral_batch_numpy(A, B):
    ea = np.linalg.eigvalsh(A)
    eb = np.linalg.eigvalsh(B)
    tr = np.einsum("kij,kji->k", A, B)
    return np.column_stack([ea[:, 0], ea[:, -1], eb[:, 0], eb[:, -1], tr])


def spectral_batch(A, B):
    """Columns: min eig A, max eig A, min eig B, max eig B, trace(AB)."""
    A = np.ascontiguousarray(A, dtype=float)
    B = np.ascontiguousarray(B, dtype=float)
    if A.shape != B.shape or A.ndim != 3:
        raise ValueError("expected two stacks of equal-size square matrices")
    if backend() == "numba":
        return _spectral_batch_loop(A, B)
    return _spectral_batch_numpy(A, B)


# --------------------------------------------------------------------------
# Nearest / second-nearest target search (contact locator).
# --------------------------------------------------------------------------


@njit(cache=True)
def _nearest_two_loop(P, T):
    n = P.shape[0]
    d1 = np.full(n, np.inf)
    d2 = np.full(n, np.inf)
    idx = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        for k in range(T.shape[0]):
            s = 0.0
            for j in range(P.shape[1]):
                diff = P[i, j] - T[k, j]
                s += diff * diff
            d = math.sqrt(s)
            if d < d1[i]:
                d2[i] = d1[i]
                d1[i] = d
                idx[i] = k
            elif d < d2[i]:
                d2[i] = d
    return d1, idx, d2


def _nearest_two_numpy(P, T, chunk=4096):
    n = P.shape[0]
    d1 = np.full(n, np.inf)
    d2 = np.full(n, np.inf)
    idx = np.full(n, -1, dtype=np.int64)
    if T.shape[0] == 0:
        return d1, idx, d2
    for start in range(0, n, chunk):
        sl = slice(start, start + chunk)
        dist = np.sqrt(((P[sl, None, :] - T[None, :, :]) ** 2).sum(axis=2))
        order = np.argmin(dist, axis=1)
        idx[sl] = order
        rows = np.arange(dist.shape[0])
        d1[sl] = dist[rows, order]
        if T.shape[0] > 1:
            dist[rows, order] = np.inf
            d2[sl] = dist.min(axis=1)
    return d1, idx, d2


def nearest_two(points, targets):
    """For each point: distance to the nearest target, its index, and the
    distance to the runner-up.  First index wins ties."""
    P = np.ascontiguousarray(points, dtype=float)
    T = np.ascontiguousarray(targets, dtype=float)
    if backend() == "numba":
        return _nearest_two_loop(P, T)
    return _nearest_two_numpy(P, T)
