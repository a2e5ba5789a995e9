"""Small dense symmetric matrices: orderings, spectra and the trace-bound lemma.

Matrices are plain ``numpy`` arrays; :func:`as_sym` is the gatekeeper that
enforces exact symmetry of the stored entries.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from . import kernels
from .report import VerificationReport, Verdict

DEFAULT_TOL = 1e-10
MAX_DIM = 16


class SpectralBounds(NamedTuple):
    lambda_min: float
    lambda_max: float


def as_sym(A, name: str = "matrix") -> np.ndarray:
    A = np.array(A, dtype=float, ndmin=2)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise ValueError(f"{name} must be a non-empty square matrix, got shape {A.shape}")
    if A.shape[0] > MAX_DIM:
        raise ValueError(f"{name} has dimension {A.shape[0]} > {MAX_DIM}")
    if not np.array_equal(A, A.T):
        raise ValueError(f"{name} is not exactly symmetric")
    return A


def symmetrize(A) -> np.ndarray:
    """Force exact symmetry, e.g. for finite-difference Hessians."""
    A = np.asarray(A, dtype=float)
    return 0.5 * (A + A.T)


def spectral_bounds(A) -> SpectralBounds:
    ev = np.linalg.eigvalsh(as_sym(A))
    return SpectralBounds(float(ev[0]), float(ev[-1]))


def psd_ordering(A, B, tol: float = DEFAULT_TOL) -> bool:
    """``A <= B`` in the Loewner order: every eigenvalue of ``B - A`` is ``>= -tol``."""
    A = as_sym(A, "A")
    B = as_sym(B, "B")
    if A.shape != B.shape:
        raise ValueError(f"dimension mismatch: {A.shape} vs {B.shape}")
    return bool(np.linalg.eigvalsh(B - A)[0] >= -tol)


def max_abs_entry(A) -> float:
    """The entrywise max norm ``max_ij |A_ij|`` used for Hessian sizes."""
    A = np.asarray(A, dtype=float)
    return float(np.max(np.abs(A))) if A.size else 0.0


def trace_bound(n: int, c1: float, c2: float, c3: float, c4: float) -> float:
    return c1 * ((n - 1) * c2 * c3 + c4)


def _hypotheses(spec: np.ndarray, c1, c2, c3, c4, tol):
    amin, amax, bmin, _, tr = spec.T
    return {
        "A >= I/c1": amin >= 1.0 / c1 - tol,
        "A <= c2 I": amax <= c2 + tol,
        "B >= -c3 I": bmin >= -c3 - tol,
        "trace(AB) <= c4": tr <= c4 + tol,
    }


def trace_bound_check(A, B, c1, c2, c3, c4, tol: float = DEFAULT_TOL) -> VerificationReport:
    """Check ``B <= c1((n-1)c2c3 + c4) I`` for one pair after validating the
    hypotheses ``I/c1 <= A <= c2 I``, ``B >= -c3 I``, ``trace(AB) <= c4``.

    A hypothesis that does not hold yields ``hypothesis-failure``; only a
    violated conclusion under valid hypotheses yields ``conclusion-failure``.
    """
    A = as_sym(A, "A")
    B = as_sym(B, "B")
    if A.shape != B.shape:
        raise ValueError(f"dimension mismatch: {A.shape} vs {B.shape}")
    for c in (c1, c2, c3, c4):
        if not c > 0:
            raise ValueError("constants c1..c4 must be positive")
    n = A.shape[0]
    spec = kernels.spectral_batch(A[None], B[None])
    hyp = {k: bool(v[0]) for k, v in _hypotheses(spec, c1, c2, c3, c4, tol).items()}
    bound = trace_bound(n, c1, c2, c3, c4)
    lam_max = float(spec[0, 3])
    params = {"n": n, "c1": c1, "c2": c2, "c3": c3, "c4": c4, "tol": tol}
    witness = {"lambda_max_B": lam_max, "bound": bound, "hypotheses": hyp, "trace_AB": float(spec[0, 4])}
    if not all(hyp.values()):
        failed = [k for k, ok in hyp.items() if not ok]
        return VerificationReport("trace_bound", Verdict.HYPOTHESIS_FAILURE, None, witness, params,
                                  message="hypothesis failed: " + ", ".join(failed))
    verdict = Verdict.PASS if lam_max <= bound + tol * max(1.0, abs(bound)) else Verdict.CONCLUSION_FAILURE
    return VerificationReport("trace_bound", verdict, lam_max - bound, witness, params)


def random_spd(rng: np.random.Generator, n: int, lo: float, hi: float) -> np.ndarray:
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    ev = rng.uniform(lo, hi, n)
    M = (q * ev) @ q.T
    return symmetrize(M)


def sample_trace_bound_instances(rng: np.random.Generator, count: int, dims=(2, 5)):
    """Random instances satisfying the lemma's hypotheses by construction.

    Returns a list of ``(A, B, (c1, c2, c3, c4))``.  ``B`` has one large
    eigenvalue steered towards the extremal configuration so the sampler
    probes near-tight cases, not only slack ones.
    """
    out = []
    for _ in range(count):
        n = int(rng.integers(dims[0], dims[1] + 1))
        c1 = float(rng.uniform(1.0, 5.0))
        c2 = float(rng.uniform(1.0 / c1, 5.0)) + 1e-3
        c3 = float(rng.uniform(0.01, 3.0))
        lo, hi = 1.0 / c1, c2
        if rng.random() < 0.5:
            ev_a = rng.choice([lo, hi], n) * (1 + 1e-9 * np.sign(rng.standard_normal(n)))
            ev_a = np.clip(ev_a, lo, hi)
        else:
            ev_a = rng.uniform(lo, hi, n)
        qa, _ = np.linalg.qr(rng.standard_normal((n, n)))
        A = symmetrize((qa * ev_a) @ qa.T)
        qb, _ = np.linalg.qr(rng.standard_normal((n, n)))
        ev_b = -c3 * rng.uniform(0.0, 1.0, n)
        ev_b[0] = rng.exponential(3.0 * c1 * c3 + 1.0)
        B = symmetrize((qb * ev_b) @ qb.T)
        tr = float(np.trace(A @ B))
        c4 = max(tr, 0.0) + float(rng.exponential(0.5)) + 1e-6
        out.append((A, B, (c1, c2, c3, c4)))
    return out


def trace_bound_sweep(instances, tol: float = DEFAULT_TOL) -> VerificationReport:
    """Vectorised :func:`trace_bound_check` over many instances (any dims)."""
    by_dim: dict[int, list[int]] = {}
    for k, (A, _, _) in enumerate(instances):
        by_dim.setdefault(np.asarray(A).shape[0], []).append(k)
    n_hyp = 0
    n_concl = 0
    worst_gap = -np.inf
    worst_idx = None
    for n, ids in by_dim.items():
        A = np.stack([instances[k][0] for k in ids])
        B = np.stack([instances[k][1] for k in ids])
        c = np.array([instances[k][2] for k in ids], dtype=float)
        spec = kernels.spectral_batch(A, B)
        hyp = _hypotheses(spec, *c.T, tol)
        ok = np.logical_and.reduce(list(hyp.values()))
        n_hyp += int(np.count_nonzero(~ok))
        bound = trace_bound(n, *c.T)
        gap = (spec[:, 3] - bound) / np.maximum(1.0, np.abs(bound))
        gap = np.where(ok, gap, -np.inf)
        n_concl += int(np.count_nonzero(gap > tol))
        j = int(np.argmax(gap))
        if gap[j] > worst_gap:
            worst_gap = float(gap[j])
            worst_idx = ids[j]
    verdict = Verdict.CONCLUSION_FAILURE if n_concl else Verdict.PASS
    return VerificationReport(
        "trace_bound_sweep", verdict, worst_gap,
        witness={"samples": len(instances), "hypothesis_failures": n_hyp,
                 "conclusion_failures": n_concl, "worst_index": worst_idx,
                 "worst_relative_gap": worst_gap},
        params={"tol": tol},
    )
