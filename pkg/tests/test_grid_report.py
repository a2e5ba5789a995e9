import json
import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maxlab.grid import GridFunction
from maxlab.report import VerificationReport, Verdict, dumps, worst


def quad(P):
    return 0.5 * P[:, 0] ** 2 - P[:, 0] * P[:, 1] + 2 * P[:, 1] ** 2 + P[:, 0]


def test_fd_stencils_exact_on_quadratics():
    g = GridFunction.from_function(quad, [-1, -1], [1, 1], (11, 9))
    idx = (4, 3)
    x = g.node(idx)
    assert np.allclose(g.gradient_at(idx), [x[0] - x[1] + 1, -x[0] + 4 * x[1]], atol=1e-12)
    assert np.allclose(g.hessian_at(idx), [[1, -1], [-1, 4]], atol=1e-10)


def test_csv_roundtrip(tmp_path):
    g = GridFunction.from_function(quad, [-1, 0], [1, 2], (5, 4))
    path = tmp_path / "g.csv"
    g.to_csv(path)
    back = GridFunction.from_csv(path)
    assert back.same_grid(g) and np.array_equal(back.values, g.values)
    assert np.array_equal(GridFunction.from_csv(g.to_csv()).values, g.values)


def test_csv_errors_carry_line_numbers():
    text = GridFunction.from_function(quad, [0, 0], [1, 1], (3, 3)).to_csv()
    bad = text.replace(text.splitlines()[5], "1.0,abc,2.0")
    with pytest.raises(ValueError, match="line 6"):
        GridFunction.from_csv(bad)
    with pytest.raises(ValueError, match="header"):
        GridFunction.from_csv("# wrong\n1,2\n")


def test_index_of_and_validation():
    g = GridFunction([0.0], [0.5], np.arange(5.0))
    assert g.index_of([1.0]) == (2,)
    with pytest.raises(ValueError):
        g.index_of([0.3])
    with pytest.raises(ValueError):
        GridFunction([0.0], [-1.0], np.zeros(3))
    with pytest.raises(ValueError):
        GridFunction([0.0], [1.0], np.array([0.0, np.nan]))


def test_worst_ordering():
    assert worst(Verdict.PASS, Verdict.HYPOTHESIS_FAILURE) is Verdict.HYPOTHESIS_FAILURE
    assert worst(Verdict.NUMERICAL_QUALITY, Verdict.CONCLUSION_FAILURE) is Verdict.CONCLUSION_FAILURE
    assert worst() is Verdict.PASS


def test_dumps_handles_exotic_numbers():
    rep = VerificationReport("x", Verdict.PASS, math.inf,
                             {"q": Fraction(1, 3), "m": mpmath.mpf("1e-600"), "a": np.arange(2), "b": np.bool_(True)})
    d = json.loads(dumps(rep))
    assert d["residual"] == "inf"
    assert d["witness"]["q"]["fraction"] == "1/3"
    assert d["witness"]["m"]["mpf"].startswith("1.0e-600")
    assert d["witness"]["a"] == [0, 1] and d["witness"]["b"] is True
    assert not VerificationReport("y", Verdict.CONCLUSION_FAILURE)


@settings(max_examples=30, deadline=None)
@given(h=st.floats(0.05, 0.5), n=st.integers(5, 9))
def test_hessian_of_cubic_is_second_order(h, n):
    g = GridFunction.from_function(lambda P: P[:, 0] ** 3, [0.0], [h * (n - 1)], (n,))
    i = n // 2
    assert g.hessian_at((i,))[0, 0] == pytest.approx(6 * g.node((i,))[0], abs=1e-8)
