import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from specnet.algfun import (GaussianRational, Poly, RationalFunction,
                            SheetLabeling, SpectralData, check_weakly_gmn,
                            check_wkb_regular, continue_sheets,
                            pole_order_at_infinity_qd, sheets_at)
from specnet.errors import ContinuationError


def rf(num, den=None):
    return RationalFunction(Poly(num), Poly(den) if den is not None else None)


def airy(hbar=1.0):
    # (hbar d)^2 - z: charpoly xi^2 - z
    return SpectralData(2, [[rf([0])], [rf([0, -1])]], hbar)


def weber(hbar=1.0):
    # charpoly xi^2 - (z^2 - 1)
    return SpectralData(2, [[rf([0])], [rf([1, 0, -1])]], hbar)


def bnr(hbar=1.0):
    # xi^3 + 3 xi + 2i z
    return SpectralData(
        3, [[rf([0])], [rf([3])], [rf([(0, 2)]) * RationalFunction.z()]], hbar)


# rational function layer ----------------------------------------------------

def test_derivative_basics():
    assert rf([0, 0, 1]).derivative() == rf([0, 2])
    assert rf([1], [0, 1]).derivative() == rf([-1], [0, 0, 1])
    assert rf([-1, 0, 1]).derivative() == rf([0, 2])


def test_reduction_and_monic_denominator():
    f = rf([0, 0, 2], [0, 2])  # 2z^2 / 2z -> z
    assert f == rf([0, 1])
    g = rf([1], [2, 2])  # 1/(2z+2) -> (1/2)/(z+1)
    assert g.den == Poly([1, 1])
    assert g.num == Poly([GaussianRational(Fraction(1, 2), Fraction(0))])


coef_st = st.tuples(st.integers(-4, 4), st.integers(-4, 4))
poly_st = st.lists(coef_st, min_size=1, max_size=4)


@given(poly_st, poly_st, poly_st, poly_st)
@settings(max_examples=60, deadline=None)
def test_product_rule_exact(pn, pd, qn, qd):
    if Poly(pd).is_zero() or Poly(qd).is_zero():
        return
    f = RationalFunction(Poly(pn), Poly(pd))
    g = RationalFunction(Poly(qn), Poly(qd))
    lhs = (f * g).derivative()
    rhs = f.derivative() * g + f * g.derivative()
    assert lhs == rhs


def test_finite_poles_with_orders():
    f = rf([1], [0, 0, 0, 0, 1])  # 1/z^4
    assert f.finite_poles() == [(0j, 4)]
    g = rf([1], [-1, 0, 1])  # 1/(z^2-1)
    assert sorted((round(p.real) for p, _ in g.finite_poles())) == [-1, 1]


# turning points -------------------------------------------------------------

def test_airy_turning_point():
    tps = airy().turning_points()
    assert len(tps) == 1
    assert abs(tps[0].z) < 1e-12
    assert tps[0].multiplicity == 1


def test_weber_turning_points():
    tps = weber().turning_points()
    assert sorted(round(t.z.real, 9) for t in tps) == [-1, 1]
    assert all(abs(t.z.imag) < 1e-9 for t in tps)


def test_bnr_turning_points_exact():
    s = bnr()
    # discriminant of xi^3 + p xi + q is -4p^3 - 27 q^2 = 108(z^2 - 1)
    tps = s.turning_points()
    assert len(tps) == 2
    assert abs(tps[0].z - (-1)) < 1e-9
    assert abs(tps[1].z - 1) < 1e-9


# sheets ----------------------------------------------------------------------

def test_sheets_at_airy():
    s = airy()
    lab = SheetLabeling.canonical(s, 2.0 + 0j)
    vals = sheets_at(s, lab, 1.0 + 0j)
    assert sorted(np.round(vals.real, 9)) == [-1, 1]
    for v in vals:
        assert abs(v ** 2 - 1.0) < 1e-10


def test_sheets_at_bnr_origin():
    s = bnr()
    lab = SheetLabeling.canonical(s, 0.5j + 2)
    vals = list(sheets_at(s, lab, 0j))
    for target in (0, 1j * math.sqrt(3), -1j * math.sqrt(3)):
        assert min(abs(v - target) for v in vals) < 1e-9


def test_charpoly_residual():
    s = bnr()
    lab = SheetLabeling.canonical(s, 0.5j + 2)
    rng = np.random.default_rng(1)
    for _ in range(10):
        z = complex(*rng.uniform(-2, 2, 2))
        if min(abs(z - 1), abs(z + 1)) < 0.1:
            continue
        for v in sheets_at(s, lab, z):
            res = v ** 3 + 3 * v + 2j * z
            assert abs(res) < 1e-10 * max(1.0, abs(v) ** 3)


def circle(center, radius, n=80, closed=True):
    ang = np.linspace(0, 2 * np.pi, n, endpoint=False)
    pts = center + radius * np.exp(1j * ang)
    return np.concatenate([pts, pts[:1]]) if closed else pts


def test_airy_loop_swaps_sheets():
    s = airy()
    lab = SheetLabeling.canonical(s, 2.0 + 0j)
    loop = circle(0j, 2.0)
    loop = np.roll(loop[:-1], 0)
    loop = np.concatenate([loop, loop[:1]])
    sigma = continue_sheets(s, lab, loop)
    assert list(sigma) == [1, 0]


def test_constant_path_identity():
    s = airy()
    lab = SheetLabeling.canonical(s, 2.0 + 0j)
    sigma = continue_sheets(s, lab, [2.0 + 0j, 2.0 + 0j])
    assert list(sigma) == [0, 1]


def test_bnr_loop_around_plus_one():
    s = bnr()
    lab = SheetLabeling.canonical(s, 3.0 + 0j)
    sigma = continue_sheets(s, lab, circle(1.0 + 0j, 0.5))
    # transposition of the colliding sheets, third fixed
    moved = [i for i, v in enumerate(sigma) if v != i]
    assert len(moved) == 2
    assert sigma[moved[0]] == moved[1] and sigma[moved[1]] == moved[0]


def test_homotopy_invariance():
    s = weber()
    lab = SheetLabeling.canonical(s, 3.0 + 0j)
    a = continue_sheets(s, lab, circle(1.0 + 0j, 0.4, n=60))
    b = continue_sheets(s, lab, circle(1.05 + 0j, 0.5, n=97))
    assert list(a) == list(b)


def test_composition_of_paths():
    s = weber()
    lab = SheetLabeling.canonical(s, 3.0 + 0j)
    p1 = [3 + 0j, 2 + 1j, 0.2 + 1.5j]
    p2 = [0.2 + 1.5j, -2 + 1j, -3 + 0j]
    v1 = sheets_at(s, lab, 3.0 + 0j)
    mid = np.asarray(p1)
    from specnet.algfun import continue_values
    via = continue_values(s, continue_values(s, v1, p1), p2)
    direct = continue_values(s, v1, p1[:-1] + p2)
    assert np.allclose(via, direct)


def test_continuation_near_turning_point_rejected():
    s = airy()
    lab = SheetLabeling.canonical(s, 2.0 + 0j)
    with pytest.raises(ContinuationError):
        sheets_at(s, lab, -2.0 + 1e-9j)  # straight path passes through z=0


# rank-2 diagnostics ----------------------------------------------------------

def test_weakly_gmn_weber():
    rep = check_weakly_gmn(weber())
    assert rep.ok, rep.reasons
    assert pole_order_at_infinity_qd(rf([1, 0, -1]).scale(-1) * rf([-1])) == 6


def test_weakly_gmn_no_branch_point():
    s = SpectralData(2, [[rf([0])], [rf([-1])]], 1.0)  # Q0 = 1
    rep = check_weakly_gmn(s)
    assert not rep.ok
    assert any("branch" in r for r in rep.reasons)


def test_weakly_gmn_simple_pole():
    s = SpectralData(2, [[rf([0])], [rf([-1], [0, 1])]], 1.0)  # Q0 = 1/z
    rep = check_weakly_gmn(s)
    assert not rep.ok
    assert any("order 1" in r for r in rep.reasons)


def test_wkb_regular_no_corrections():
    assert check_wkb_regular(weber()).ok


def test_wkb_regular_violation():
    # Q0 = 1/z^4, Q1 = 1/z^3: 3 >= 1 + 4/2
    s = SpectralData(2, [[rf([0])],
                         [rf([-1], [0, 0, 0, 0, 1]), rf([-1], [0, 0, 0, 1])]], 1.0)
    rep = check_wkb_regular(s)
    assert not rep.ok


def test_wkb_regular_double_pole_clause():
    # Q0 = 1/z^2, Q2 = -1/(4 z^2) passes
    q0 = rf([-1], [0, 0, 1])
    q2 = rf([(Fraction(1, 4), 0)], [0, 0, 1])
    s = SpectralData(2, [[rf([0])], [q0, rf([0]), q2]], 1.0)
    assert check_wkb_regular(s).ok, check_wkb_regular(s).reasons
    # wrong leading constant fails
    s_bad = SpectralData(2, [[rf([0])], [q0, rf([0]), q2.scale(2)]], 1.0)
    assert not check_wkb_regular(s_bad).ok
