import json
import math

import numpy as np
import pytest

from specnet.algfun import Poly, RationalFunction, SheetLabeling, SpectralData
from specnet.errors import SetupError
from specnet.novikov import NovikovSeries, matrix_deviation
from specnet.scattering import (NormalizationData, Wall,
                                collision_loop_monodromy, compute_w_min,
                                consistency_check, diagram_to_json,
                                initial_diagram, inductive_step,
                                point_monodromy, run_scattering, wall_factor)
from specnet.stokes_tracer import Collision
from specnet.wkb import integrate_branch_terms, p_odd, wkb_recursion


def rf(num, den=None):
    return RationalFunction(Poly(num), Poly(den) if den is not None else None)


def airy(hbar=1.0):
    return SpectralData(2, [[rf([0])], [rf([0, -1])]], hbar)


def weber(hbar=1.0):
    return SpectralData(2, [[rf([0])], [rf([1, 0, -1])]], hbar)


def bnr(hbar=1.0):
    return SpectralData(
        3, [[rf([0])], [rf([3])], [rf([(0, 2)]) * RationalFunction.z()]], hbar)


BNR_WC = 5.720534329538344  # weight of the first BNR collisions at hbar = 1


@pytest.fixture(scope="module")
def bnr_diagram():
    s = bnr()
    lab = SheetLabeling.canonical(s, 2.0 + 0.5j)
    return initial_diagram(s, lab, cutoff=3 * BNR_WC, window_radius=8.0)


def test_airy_initial_diagram():
    s = airy()
    lab = SheetLabeling.canonical(s, 2.0 + 0j)
    d = initial_diagram(s, lab, cutoff=4.0, window_radius=5.0)
    assert len(d.walls) == 3
    for w in d.walls:
        assert w.phi == NovikovSeries.monomial(0.0, -1.0, 4.0)
        assert w.generation == 0
    assert d.collisions == []
    assert consistency_check(d, 4.0).passed


def test_rank_one_empty_diagram():
    s = SpectralData(1, [[rf([0, 1])]], 1.0)
    lab = SheetLabeling(base=2.0 + 0j, values=(s.xi_at(2.0 + 0j)[0],))
    d = run_scattering(s, lab, cutoff=2.0)
    assert d.walls == []
    assert d.consistency_level == 2.0


def test_broken_phi_fails_local_consistency():
    s = airy()
    lab = SheetLabeling.canonical(s, 2.0 + 0j)
    with pytest.raises(SetupError):
        initial_diagram(s, lab, cutoff=4.0, window_radius=5.0, phi_value=2.0)


def test_wall_factor_direct():
    s = airy()
    lab = SheetLabeling.canonical(s, 2.0 + 0j)
    d = initial_diagram(s, lab, cutoff=4.0, window_radius=5.0)
    w = d.walls[0]
    f = wall_factor(d, w, mass=0.7)
    assert f == NovikovSeries.monomial(0.7, -1.0, 4.0)


def test_wall_factor_exponent_addition():
    s = airy()
    lab = SheetLabeling.canonical(s, 2.0 + 0j)
    d = initial_diagram(s, lab, cutoff=4.0, window_radius=5.0)
    shifted = Wall(curve=d.walls[0].curve,
                   phi=NovikovSeries.monomial(0.3, -1.0, 4.0),
                   generation=1, index=99)
    f = wall_factor(d, shifted, mass=0.4)
    assert f == NovikovSeries.monomial(0.7, -1.0, 4.0)


def test_bnr_initial_collisions(bnr_diagram):
    d = bnr_diagram
    assert len(d.walls) == 6
    ordered = [c for c in d.collisions if c.ordered]
    assert len(ordered) == 2
    for col in ordered:
        assert abs(abs(col.point.imag) - 1.5965714) < 1e-5
        assert abs(col.point.real) < 1e-6
        masses = [m for _, m, _, _ in col.incident]
        assert len(masses) == 2
        for m in masses:
            assert abs(m - BNR_WC / 2) < 1e-5


def test_bnr_loop_deviation_is_single_chained_entry(bnr_diagram):
    d = bnr_diagram
    for col in d.collisions:
        m, _ = collision_loop_monodromy(d, col)
        dev = matrix_deviation(m)
        assert len(dev) == 1
        i, j, series = dev[0]
        assert abs(series.valuation() - BNR_WC) < 1e-6
        assert abs(complex(series.leading()) - 1.0) < 1e-9


def test_bnr_point_monodromy_printed_formula(bnr_diagram):
    d = bnr_diagram
    col = [c for c in d.collisions if c.point.imag > 0][0]
    m = point_monodromy(d, col)
    dev = {(i, j): s for i, j, s in matrix_deviation(m)}
    assert len(dev) == 3
    vals = sorted(round(s.valuation(), 6) for s in dev.values())
    half = round(BNR_WC / 2, 6)
    assert vals == [half, half, round(BNR_WC, 6)]
    # linear entries carry the wall coefficient -1, the chained one +1
    for (i, j), s in dev.items():
        lead = complex(s.leading())
        if abs(s.valuation() - BNR_WC) < 1e-6:
            assert abs(lead - 1.0) < 1e-9
        else:
            assert abs(lead + 1.0) < 1e-9
    # the chained entry composes the two incident types
    types = [inc[2] for inc in col.incident]
    chains = [(a[0], b[1]) for a in types for b in types if a[1] == b[0]]
    chained = [key for key, s in dev.items()
               if abs(s.valuation() - BNR_WC) < 1e-6]
    assert chained[0] in chains


def test_bnr_consistency_thresholds(bnr_diagram):
    d = bnr_diagram
    assert consistency_check(d, BNR_WC - 1e-3).passed
    rep = consistency_check(d, BNR_WC + 1e-3)
    assert not rep.passed
    assert len(rep.failures) == 2
    assert abs(rep.level - BNR_WC) < 1e-6


def test_bnr_inductive_step_cancels(bnr_diagram):
    d = bnr_diagram
    level0 = consistency_check(d, d.cutoff).level
    d1 = inductive_step(d)
    new = [w for w in d1.walls if w.generation == 1]
    assert len(new) == 2
    for w in new:
        assert abs(w.weight() - BNR_WC) < 1e-6
    rep = consistency_check(d1, min(2 * level0, d.cutoff))
    assert rep.passed


def test_inductive_step_fixed_point(bnr_diagram):
    d1 = inductive_step(bnr_diagram)
    d2 = inductive_step(d1)
    assert len(d2.walls) == len(d1.walls)


def test_run_scattering_weight_law():
    s = bnr()
    lab = SheetLabeling.canonical(s, 2.0 + 0.5j)
    w = 3 * BNR_WC
    d = run_scattering(s, lab, cutoff=w, window_radius=8.0)
    assert consistency_check(d, w).passed
    wmin = compute_w_min(d)
    assert wmin > 0
    for wall in d.walls:
        assert wall.weight() >= wall.generation * wmin - 1e-7
    gens = sorted({wall.generation for wall in d.walls})
    assert gens[0] == 0 and gens[-1] >= 1


def test_w_min_airy_is_inner_disk_mass():
    s = airy()
    lab = SheetLabeling.canonical(s, 2.0 + 0j)
    d = initial_diagram(s, lab, cutoff=4.0, window_radius=5.0)
    bd = compute_w_min(d, detail=True)
    (k, r_u, d_u, d_v, d_3) = bd.per_vertex[0]
    assert d_v == math.inf and d_3 == math.inf
    assert bd.value == d_u
    # independent mass at the disk exit: (4/3) r^(3/2) along the real ray
    assert abs(d_u - (4.0 / 3.0) * r_u ** 1.5) < 1e-5


def test_w_min_scales_with_hbar():
    vals = []
    for hb in (1.0, 2.0):
        s = airy(hb)
        lab = SheetLabeling.canonical(s, 2.0 + 0j)
        d = initial_diagram(s, lab, cutoff=4.0, window_radius=5.0)
        vals.append(compute_w_min(d))
    assert abs(vals[1] - vals[0] / 2) < 1e-6


def test_formal_normalization_ratio_matches_quadrature():
    s = weber()
    lab = SheetLabeling.canonical(s, 3.0 + 0j)
    N = 3
    norm = NormalizationData("formal-hbar", hbar_order=N)
    d = initial_diagram(s, lab, cutoff=6.0, window_radius=7.0,
                        normalization=norm)
    wall = next(w for w in d.walls
                if w.curve.source_index == 1 and abs(w.curve.z[-1].imag) < 1e-6
                and w.curve.z[-1].real > 2)
    m1, m2 = 1.0, 2.5
    r1 = d.normalization.ratio(s, wall, m1)
    r2 = d.normalization.ratio(s, wall, m2)
    # ratio(m2)/ratio(m1) = exp(2 * int along the wall between the points)
    wkb = norm.wkb
    odd = [(m, el.b) for m, el in p_odd(wkb) if m >= 1]
    sel = (wall.curve.mass >= m1 - 1e-12) & (wall.curve.mass <= m2 + 1e-12)
    pts = np.concatenate([[wall.curve.point_at_mass(m1)],
                          wall.curve.z[sel], [wall.curve.point_at_mass(m2)]])
    w0 = wall.curve.pair_at_mass(m1)[0]
    vals, _ = integrate_branch_terms(
        wkb.system.q0, pts, w0, [(lambda z, w, b=b: b(z) * w) for _, b in odd])
    expo = {m: 2 * v for (m, _), v in zip(odd, vals)}
    for k in range(N + 1):
        got = (r2 * _hpoly_inverse(r1, N)).coeffs
        want = _exp_poly(expo, N)
        assert abs(got[k] - want[k]) < 1e-8, k


def _hpoly_inverse(p, order):
    from specnet.novikov import HbarPoly
    inv = [0j] * (order + 1)
    inv[0] = 1 / p.coeffs[0]
    cs = list(p.coeffs) + [0j] * (order + 1 - len(p.coeffs))
    for k in range(1, order + 1):
        inv[k] = -inv[0] * sum(cs[m] * inv[k - m] for m in range(1, k + 1))
    return HbarPoly.make(inv, order)


def _exp_poly(expo, order):
    out = [0j] * (order + 1)
    out[0] = 1.0
    arg = [0j] * (order + 1)
    for m, v in expo.items():
        if m <= order:
            arg[m] = v
    term = [0j] * (order + 1)
    term[0] = 1.0
    for k in range(1, order + 1):
        new = [0j] * (order + 1)
        for a in range(order + 1):
            for b in range(order + 1 - a):
                new[a + b] += term[a] * arg[b] / k
        term = new
        for i in range(order + 1):
            out[i] += term[i]
    return out


def test_order_independence_of_step(bnr_diagram):
    d = bnr_diagram
    d_fwd = inductive_step(d)
    flipped = ScatteringShuffle(d)
    d_rev = inductive_step(flipped)
    got = sorted((w.curve_type, round(w.weight(), 9))
                 for w in d_rev.walls if w.generation == 1)
    want = sorted((w.curve_type, round(w.weight(), 9))
                  for w in d_fwd.walls if w.generation == 1)
    assert got == want


def ScatteringShuffle(d):
    from specnet.scattering import ScatteringDiagram
    return ScatteringDiagram(
        spectral=d.spectral, labeling=d.labeling, cutoff=d.cutoff,
        walls=d.walls, collisions=list(reversed(d.collisions)),
        normalization=d.normalization, edge_matrices=dict(d.edge_matrices),
        window_radius=d.window_radius, dtp=d.dtp)


def test_diagram_json_deterministic():
    out = []
    for _ in range(2):
        s = bnr()
        lab = SheetLabeling.canonical(s, 2.0 + 0.5j)
        d = run_scattering(s, lab, cutoff=2 * BNR_WC, window_radius=8.0)
        out.append(json.dumps(diagram_to_json(d), sort_keys=True))
    assert out[0] == out[1]


def test_point_monodromy_single_wall():
    s = bnr()
    lab = SheetLabeling.canonical(s, 2.0 + 0.5j)
    d = initial_diagram(s, lab, cutoff=6.0, window_radius=8.0)
    wall = d.walls[0]
    mass = 1.3
    point = wall.curve.point_at_mass(mass)
    col = Collision(point=point,
                    incident=[(wall.curve.index, mass, wall.curve_type, 0.0)],
                    ordered=False, cyclic=False, index=77)
    m = point_monodromy(d, col)
    dev = matrix_deviation(m)
    assert len(dev) == 1
    assert abs(dev[0][2].valuation() - mass) < 1e-9
