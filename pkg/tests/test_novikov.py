import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from specnet.errors import ConfigurationError
from specnet.novikov import (HbarPoly, NovikovMatrix, NovikovSeries, close_to,
                             matrix_deviation)


def S(pairs, W=math.inf):
    return NovikovSeries(pairs, W)


def test_multiply_with_cutoff():
    a = S([(0.0, 1), (0.5, 2)], W=1.0)
    b = S([(0.2, 3)], W=1.0)
    prod = a * b
    assert prod == S([(0.2, 3), (0.7, 6)], W=1.0)


def test_multiply_identity():
    rng = np.random.default_rng(0)
    for _ in range(20):
        exps = np.sort(rng.uniform(0, 3, size=4))
        a = S([(e, complex(*rng.normal(size=2))) for e in exps], W=4.0)
        assert a * NovikovSeries.one(4.0) == a


def test_cutoff_annihilation():
    a = S([(0.6, 1)], W=1.0)
    assert (a * a).is_zero()


def test_mismatched_cutoffs_error():
    with pytest.raises(ConfigurationError):
        S([(0, 1)], W=1.0) * S([(0, 1)], W=2.0)


def test_valuation():
    assert S([(0.2, 3), (0.7, 6)]).valuation() == pytest.approx(0.2)
    assert S([]).valuation() == math.inf
    assert S([(0.0, 1), (0.5, 1)]).valuation() == 0.0


def test_evaluate_at():
    assert S([(0.0, 1), (0.5, 1)]).evaluate_at() == pytest.approx(1 + math.exp(-0.5))
    assert S([]).evaluate_at() == 0
    phase = np.exp(1j * np.pi)
    assert S([(1.0, phase)]).evaluate_at() == pytest.approx(-math.exp(-1))


def test_exponent_merging():
    a = S([(0.5, 1.0), (0.5 + 1e-12, 2.0)])
    assert len(a.terms) == 1
    assert a.terms[0][1] == pytest.approx(3.0)


def test_hbar_poly_truncation():
    p = HbarPoly.make([1, 2, 3], order=2)
    q = HbarPoly.make([0, 1], order=2)
    prod = p * q
    assert prod.coeffs == (0j, 1 + 0j, 2 + 0j)  # hbar^3 term dropped
    assert p.evaluate(0.5) == pytest.approx(1 + 1 + 0.75)


def test_series_with_hbar_coefficients():
    p = HbarPoly.make([1, 1], order=1)
    a = S([(0.5, p)], W=2.0)
    assert a.evaluate_at(2.0) == pytest.approx(3 * math.exp(-0.5))
    sq = a * a
    assert sq.terms[0][0] == pytest.approx(1.0)
    assert sq.terms[0][1].coeffs == (1 + 0j, 2 + 0j)  # (1+h)^2 truncated at h


# matrices -----------------------------------------------------------------

def test_matrix_deviation_identity():
    assert matrix_deviation(NovikovMatrix.identity(3, 2.0)) == []


def test_matrix_deviation_single_term():
    m = NovikovMatrix.elementary(3, 2, 0, NovikovSeries.monomial(0.7, 1.0, 2.0))
    dev = matrix_deviation(m)
    assert len(dev) == 1
    i, j, s = dev[0]
    assert (i, j) == (3, 1)
    assert s == NovikovSeries.monomial(0.7, 1.0, 2.0)


def test_matrix_deviation_product():
    W = 2.0
    a = NovikovMatrix.elementary(3, 2, 1, NovikovSeries.monomial(0.3, -1.0, W))
    b = NovikovMatrix.elementary(3, 1, 0, NovikovSeries.monomial(0.4, -1.0, W))
    dev = matrix_deviation(a @ b)
    got = {(i, j): s.valuation() for i, j, s in dev}
    assert got == {(3, 2): pytest.approx(0.3), (2, 1): pytest.approx(0.4),
                   (3, 1): pytest.approx(0.7)}


# properties ---------------------------------------------------------------

coeff_st = st.complex_numbers(min_magnitude=1e-3, max_magnitude=10,
                              allow_nan=False, allow_infinity=False)
exp_st = st.floats(min_value=0.0, max_value=2.5, allow_nan=False)


@st.composite
def series_st(draw, W=3.0):
    n = draw(st.integers(min_value=0, max_value=5))
    pairs = [(draw(exp_st), draw(coeff_st)) for _ in range(n)]
    return NovikovSeries(pairs, W)


@given(series_st(), series_st(), series_st())
@settings(max_examples=200, deadline=None)
def test_associativity_commutativity(a, b, c):
    assert close_to((a * b) * c, a * (b * c), 1e-9)
    assert close_to(a * b, b * a, 1e-12)


@given(series_st(), series_st())
@settings(max_examples=200, deadline=None)
def test_valuation_subadditivity(a, b):
    v = (a * b).valuation()
    assert v >= a.valuation() + b.valuation() - 1e-9
    if not a.is_zero() and not b.is_zero():
        # complex scalar coefficients: leading terms cannot cancel
        if a.valuation() + b.valuation() < a.cutoff:
            assert v == pytest.approx(a.valuation() + b.valuation())


@given(series_st(W=math.inf), series_st(W=math.inf))
@settings(max_examples=200, deadline=None)
def test_evaluation_homomorphism(a, b):
    lhs = (a * b).evaluate_at()
    rhs = a.evaluate_at() * b.evaluate_at()
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs), abs(rhs))


@given(series_st(W=3.0), series_st(W=3.0))
@settings(max_examples=100, deadline=None)
def test_truncation_commutes_with_multiply(a, b):
    w = 1.5
    assert (a * b).truncate(w) == a.truncate(w) * b.truncate(w)
