import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maxlab.report import Verdict
from maxlab.symkernel import (as_sym, max_abs_entry, psd_ordering, random_spd, sample_trace_bound_instances,
                              spectral_bounds, symmetrize, trace_bound, trace_bound_check, trace_bound_sweep)


def test_as_sym_rejects_asymmetric_and_nonsquare():
    with pytest.raises(ValueError):
        as_sym([[1, 2], [3, 4]])
    with pytest.raises(ValueError):
        as_sym(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        as_sym(np.eye(17))


def test_spectral_bounds_and_ordering():
    A = np.diag([1.0, 3.0])
    assert spectral_bounds(A) == (1.0, 3.0)
    assert psd_ordering(np.eye(2), A)
    assert not psd_ordering(A, np.eye(2))
    assert max_abs_entry([[1, -5], [-5, 2]]) == 5


def test_trace_bound_formula():
    assert trace_bound(3, 2.0, 1.5, 0.5, 1.0) == 2.0 * (2 * 1.5 * 0.5 + 1.0)


def test_trace_bound_check_hypothesis_failure():
    rep = trace_bound_check(np.eye(2) * 10, np.eye(2), 1.0, 2.0, 1.0, 100.0)
    assert rep.verdict is Verdict.HYPOTHESIS_FAILURE
    assert "A <= c2 I" in rep.message


def test_trace_bound_check_extremal_case_is_tight():
    # A = diag(1/c1, c2,...), B concentrated on the first axis, trace(AB) = c4
    c1, c2, c3, n = 2.0, 3.0, 0.5, 3
    A = np.diag([1 / c1, c2, c2])
    c4 = 1.0
    lam = c1 * ((n - 1) * c2 * c3 + c4)
    B = np.diag([lam, -c3, -c3])
    rep = trace_bound_check(A, B, c1, c2, c3, c4)
    assert rep.passed
    assert rep.residual == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_sampled_instances_never_violate_the_lemma(seed):
    inst = sample_trace_bound_instances(np.random.default_rng(seed), 20)
    rep = trace_bound_sweep(inst)
    assert rep.witness["hypothesis_failures"] == 0
    assert rep.passed


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 6))
def test_random_spd_spectrum_in_range(seed, n):
    M = random_spd(np.random.default_rng(seed), n, 0.5, 2.0)
    ev = np.linalg.eigvalsh(M)
    assert np.array_equal(M, M.T)
    assert ev[0] >= 0.5 - 1e-12 and ev[-1] <= 2.0 + 1e-12


def test_symmetrize_is_exact():
    A = np.random.default_rng(0).standard_normal((4, 4))
    S = symmetrize(A)
    assert np.array_equal(S, S.T)
