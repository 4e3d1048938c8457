"""Gluing data of the quantized curve, loop composition, microlocal monodromy.

Everything runs in explicitly continued sheet frames: a loop carries its own
frame of sheet values, wall crossings contribute unit-triangular factors
anchored at the nearest singular breakpoint of the wall, and branch-cut
bookkeeping reduces to a quarter-turn unit per signed cut crossing, the part
the spin twist cancels.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .algfun import SpectralData, _match_roots
from .errors import ConfigurationError, GeometryError, TamenessError
from .novikov import (EXP_MERGE_TOL, HbarPoly, NovikovMatrix, NovikovSeries,
                      coeff_eval, coeff_mul)
from .scattering import ScatteringDiagram, Wall, consistency_check, wall_factor
from .stokes_graph import StokesGraph
from .stokes_tracer import _hermite
from .wkb import Cycle, WKBSeries, integrate_branch_terms, p_odd


# ---------------------------------------------------------------------------
# data
# ---------------------------------------------------------------------------

@dataclass
class BranchCut:
    tp_index: int
    origin: complex
    angle: float
    length: float

    @property
    def end(self) -> complex:
        return self.origin + self.length * cmath.exp(1j * self.angle)


@dataclass
class RegionData:
    face_index: int
    reference: complex
    grid: list
    primitives: np.ndarray   # (len(grid), n) of -Re int xi_k / hbar
    phases: np.ndarray       # (len(grid), n) of  Im int xi_k / hbar


@dataclass
class TurningPointExtension:
    tp_index: int
    marker: str = "1 (+) 1"


@dataclass
class SpinTwist:
    """Sign table per cycle class; the defaults implement the edge-cycle flip."""

    signs: dict = field(default_factory=lambda: {
        "voros-edge": -1.0, "pullback": 1.0, "tp-loop": -1.0})

    def sign(self, kind: str) -> float:
        return self.signs.get(kind, 1.0)


@dataclass
class MicrolocalMonodromy:
    cycle_label: str
    kind: str
    t_exponent: float          # exponent of T, -Re of the cycle charge
    coefficient: object        # complex or HbarPoly, carries the phase
    raw_unit: complex          # quarter-turn bookkeeping before the twist
    twist_sign: float

    def value(self, cutoff: float = math.inf) -> NovikovSeries:
        e = self.t_exponent
        if e < -EXP_MERGE_TOL:
            raise ConfigurationError(
                "monodromy exponent %.3g is negative; reverse the cycle" % e)
        return NovikovSeries.monomial(max(e, 0.0), self.coefficient, cutoff)

    def pre_twist(self) -> complex:
        return self.raw_unit

    def post_twist(self) -> complex:
        return self.raw_unit * self.twist_sign

    def specialize(self, hbar_value: complex) -> complex:
        return coeff_eval(self.coefficient, hbar_value) * math.exp(-self.t_exponent)


@dataclass
class SheafQuantizationData:
    diagram: ScatteringDiagram
    graph: StokesGraph | None
    regions: list
    cuts: list
    gluings: dict              # graph edge index -> (NovikovMatrix, frame)
    extensions: list
    cutoff: float


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------

def _choose_cuts(d: ScatteringDiagram) -> list[BranchCut]:
    """One straight cut per turning point, steered away from walls."""
    s = d.spectral
    tps = s.turning_points()
    length = (d.window_radius or 4.0 * max([abs(t.z) for t in tps] + [1.0])) * 1.2
    obstacles = [c.point for c in d.collisions]
    cuts = []
    for k, tp in enumerate(tps):
        best, best_score = 0.0, -1.0
        for step in range(72):
            ang = step * math.pi / 36
            ray = tp.z + np.linspace(0.02, 1.0, 40) * length * cmath.exp(1j * ang)
            score = math.inf
            for w in d.walls:
                if len(w.curve.z) > 1:
                    sub = w.curve.z[:: max(1, len(w.curve.z) // 200)]
                    score = min(score, float(
                        np.min(np.abs(sub[None, :] - ray[:, None]))))
            for p in obstacles + [t.z for t in tps if abs(t.z - tp.z) > 1e-12]:
                score = min(score, float(np.min(np.abs(ray - p))))
            if score > best_score:
                best, best_score = ang, score
        cuts.append(BranchCut(tp_index=k, origin=tp.z, angle=best, length=length))
    return cuts


def build_quantization(d: ScatteringDiagram, graph: StokesGraph | None = None,
                       grid_points: int = 5) -> SheafQuantizationData:
    """Assemble region samples, per-edge gluing matrices and cut data.

    Refuses inconsistent diagrams: the gluing cannot extend over a collision
    whose loop monodromy still deviates below the cutoff.
    """
    s = d.spectral
    if s.rank >= 2 and s.turning_points():
        report = consistency_check(d, d.cutoff)
        if not report.passed:
            raise TamenessError(
                "diagram is inconsistent at %d collision(s); extend it first"
                % len(report.failures))
    cuts = _choose_cuts(d) if s.rank >= 2 else []
    regions = []
    if graph is not None:
        for f in graph.faces:
            if f.truncated:
                continue
            pts = _face_probe_points(graph, f, grid_points)
            if not pts:
                continue
            ref = _face_reference(graph, f)
            centroid = pts[0]
            start = ref + 0.05 * (centroid - ref)
            frame0 = s.xi_at(start)
            prim, phas, kept = [], [], []
            for p in pts:
                try:
                    vals, _ = _integrate_xi(s, [start, p], frame0)
                except Exception:
                    continue
                prim.append([-v.real for v in vals])
                phas.append([v.imag for v in vals])
                kept.append(p)
            regions.append(RegionData(face_index=f.index, reference=ref,
                                      grid=kept,
                                      primitives=np.array(prim),
                                      phases=np.array(phas)))
    gluings = {}
    if graph is not None:
        for ei, e in enumerate(graph.edges):
            if e.kind != "curve":
                continue
            wall = d.wall_by_curve_index(e.curve_index)
            anchor = _anchor_mass(d, wall, 0.5 * (e.mass_a + e.mass_b))
            mid = e.polyline[len(e.polyline) // 2]
            frame = s.xi_at(mid)
            pair = wall.curve.pair_at_mass(max(e.mass_a, anchor))
            i = int(np.argmin(np.abs(frame - pair[0])))
            j = int(np.argmin(np.abs(frame - pair[1])))
            factor = wall_factor(d, wall, mass=anchor)
            gluings[ei] = (NovikovMatrix.elementary(
                s.rank, i, j, factor, diag=d.a_e(wall)), frame)
    extensions = [TurningPointExtension(tp_index=k)
                  for k in range(len(s.turning_points()))]
    return SheafQuantizationData(diagram=d, graph=graph, regions=regions,
                                 cuts=cuts, gluings=gluings,
                                 extensions=extensions, cutoff=d.cutoff)


def _face_reference(graph: StokesGraph, f) -> complex:
    for h in f.cycle:
        a, _ = graph.half_edge_vertices(h)
        if graph.vertices[a].kind == "turning-point":
            return graph.vertices[a].z
    a, _ = graph.half_edge_vertices(f.cycle[0])
    return graph.vertices[a].z


def _face_probe_points(graph: StokesGraph, f, count: int) -> list:
    from .stokes_graph import _cycle_points, _point_in_polygon
    pts = _cycle_points(graph, f.cycle)
    centroid = complex(np.mean(pts.real), np.mean(pts.imag))
    out = []
    if _point_in_polygon(centroid, pts):
        out.append(centroid)
    rng = np.random.default_rng(7)
    lo, hi = pts.real.min(), pts.real.max()
    lo2, hi2 = pts.imag.min(), pts.imag.max()
    for _ in range(200):
        if len(out) >= count:
            break
        cand = complex(rng.uniform(lo, hi), rng.uniform(lo2, hi2))
        if _point_in_polygon(cand, pts):
            out.append(cand)
    return out


def _integrate_xi(s: SpectralData, path, frame0: np.ndarray,
                  tol: float = 1e-9, max_depth: int = 14):
    """Integrals of xi_k/hbar along the path for every sheet, frame-tracked.

    Adaptive bisection per segment; square-root behavior near a reference
    vertex needs the geometric refinement."""
    from .algfun import continue_values
    xs, ws = np.polynomial.legendre.leggauss(12)
    current = np.asarray(frame0, dtype=complex)
    totals = np.zeros(len(current), dtype=complex)

    def quad(a, b, fa, fb):
        mid, half = (a + b) / 2, (b - a) / 2
        acc = np.zeros(len(fa), dtype=complex)
        for x, wt in zip(xs, ws):
            z = mid + half * x
            t = (x + 1) / 2
            guesses = fa * (1 - t) + fb * t
            roots = s.xi_at(z)
            for k, g in enumerate(guesses):
                acc[k] += wt * roots[np.argmin(np.abs(roots - g))] * half
        return acc

    def segment(a, b, fa, fb, depth):
        whole = quad(a, b, fa, fb)
        mid = (a + b) / 2
        fm = continue_values(s, fa, [a, mid], dtp=0.0)
        split = quad(a, mid, fa, fm) + quad(mid, b, fm, fb)
        if np.max(np.abs(whole - split)) <= tol or depth >= max_depth:
            return split
        return (segment(a, mid, fa, fm, depth + 1)
                + segment(mid, b, fm, fb, depth + 1))

    for a, b in zip(path[:-1], path[1:]):
        new = continue_values(s, current, [a, b], dtp=0.0)
        totals += segment(a, b, current, new, 0)
        current = new
    return totals / s.hbar, current


def _anchor_mass(d: ScatteringDiagram, wall: Wall, mass: float) -> float:
    """Mass of the wall breakpoint (source or ordered collision) nearest to mass."""
    breaks = [0.0 if wall.curve.source_kind != "turning-point" else wall.curve.mass[0]]
    breaks[0] = float(wall.curve.mass[0])
    for col in d.collisions:
        for ci, m, _pair, _ang in col.incident:
            if ci == wall.curve.index:
                breaks.append(float(m))
    return min(breaks, key=lambda b: abs(b - mass))


# ---------------------------------------------------------------------------
# loop composition
# ---------------------------------------------------------------------------

def _loop_crossings(d: ScatteringDiagram, loop: np.ndarray):
    """(position along loop, wall, crossing mass, sign) for all wall hits."""
    out = []
    for w in d.walls:
        c = w.curve
        if len(c.z) < 2:
            continue
        for k in range(len(c.z) - 1):
            a0, a1 = c.z[k], c.z[k + 1]
            for t in range(len(loop) - 1):
                b0, b1 = loop[t], loop[t + 1]
                if (max(a0.real, a1.real) < min(b0.real, b1.real)
                        or min(a0.real, a1.real) > max(b0.real, b1.real)
                        or max(a0.imag, a1.imag) < min(b0.imag, b1.imag)
                        or min(a0.imag, a1.imag) > max(b0.imag, b1.imag)):
                    continue
                hit = _seg_hit(a0, a1, b0, b1)
                if hit is None:
                    continue
                tt, uu = hit
                mass = c.mass[k] + tt * (c.mass[k + 1] - c.mass[k])
                tan_w = a1 - a0
                tan_l = b1 - b0
                cross = tan_w.real * tan_l.imag - tan_w.imag * tan_l.real
                if cross == 0:
                    continue
                out.append((t + uu, w, float(mass), 1 if cross > 0 else -1))
    out.sort(key=lambda r: (r[0], r[1].index))
    return out


def _seg_hit(a0, a1, b0, b1):
    # half-open in both parameters so a crossing at a shared polyline vertex
    # is counted exactly once
    d1, d2 = a1 - a0, b1 - b0
    den = d1.real * (-d2.imag) - d1.imag * (-d2.real)
    if den == 0:
        return None
    rhs = b0 - a0
    t = (rhs.real * (-d2.imag) - rhs.imag * (-d2.real)) / den
    u = (d1.real * rhs.imag - d1.imag * rhs.real) / den
    if -1e-12 <= t < 1 - 1e-12 and -1e-12 <= u < 1 - 1e-12:
        return max(t, 0.0), max(u, 0.0)
    return None


def compose_loop_gluing(qd, loop: np.ndarray):
    """Ordered product of wall gluings around a closed loop, start frame fixed.

    Accepts the assembled quantization data or a bare diagram (useful to
    probe the obstruction at a collision before the diagram is extended).
    Wall factors anchor at the nearest breakpoint on the wall, so opposite
    crossings of a wall with no singular point between them cancel exactly.
    Returns (matrix, closure permutation of the start frame).
    """
    d = qd.diagram if isinstance(qd, SheafQuantizationData) else qd
    s = d.spectral
    if abs(loop[0] - loop[-1]) > 1e-9:
        raise GeometryError("loop is not closed")
    for tp in s.turning_points():
        if min(abs(loop - tp.z).min(), 1.0) < (d.dtp or 0.0):
            raise GeometryError("loop passes through a singular point")
    frame0 = s.xi_at(loop[0])
    crossings = _loop_crossings(d, loop)
    n = s.rank
    m = NovikovMatrix.identity(n, d.cutoff)
    from .algfun import continue_values
    pos_prev = 0.0
    frame = frame0.copy()
    z_prev = loop[0]
    for pos, wall, mass, sign in crossings:
        k = int(pos)
        x = loop[k] + (pos - k) * (loop[k + 1] - loop[k])
        frame = continue_values(s, frame, _loop_path(loop, pos_prev, pos),
                                dtp=0.0)
        z_prev = x
        pos_prev = pos
        anchor = _anchor_mass(d, wall, mass)
        pair = wall.curve.pair_at_mass(mass)
        i = int(np.argmin(np.abs(frame - pair[0])))
        j = int(np.argmin(np.abs(frame - pair[1])))
        if i == j:
            raise GeometryError("wall pair degenerates on the loop")
        factor = wall_factor(d, wall, mass=anchor)
        f = NovikovMatrix.elementary(n, i, j, factor if sign > 0 else -factor)
        m = f @ m
    frame = continue_values(s, frame, _loop_path(loop, pos_prev, len(loop) - 1.0),
                            dtp=0.0)
    sigma = _match_roots(frame, frame0, margin=0.0)
    perm_rows = [[NovikovSeries.monomial(0.0, 1.0, d.cutoff)
                  if sigma[k] == r else NovikovSeries.zero(d.cutoff)
                  for k in range(n)] for r in range(n)]
    perm = NovikovMatrix(perm_rows)
    return perm @ m, sigma


def _loop_path(loop: np.ndarray, pos_a: float, pos_b: float) -> list:
    ka, kb = int(pos_a), int(pos_b)
    za = loop[ka] + (pos_a - ka) * (loop[min(ka + 1, len(loop) - 1)] - loop[ka])
    zb = loop[kb] + (pos_b - kb) * (loop[min(kb + 1, len(loop) - 1)] - loop[kb])
    mids = list(loop[ka + 1: kb + 1])
    return [za] + mids + [zb]


# ---------------------------------------------------------------------------
# microlocalization
# ---------------------------------------------------------------------------

def _cut_crossing_sum(cuts, loop: np.ndarray) -> int:
    total = 0
    for cut in cuts:
        b0, b1 = cut.origin, cut.end
        for k in range(len(loop) - 1):
            hit = _seg_hit(loop[k], loop[k + 1], b0, b1)
            if hit is None:
                continue
            tan_l = loop[k + 1] - loop[k]
            tan_c = b1 - b0
            cross = tan_c.real * tan_l.imag - tan_c.imag * tan_l.real
            total += 1 if cross > 0 else -1
    return total


def microlocalize(qd: SheafQuantizationData, cycle: Cycle, twist: SpinTwist,
                  wkb: WKBSeries | None = None,
                  hbar_order: int | None = None,
                  tol: float = 1e-10) -> MicrolocalMonodromy:
    """Abelianized monodromy of the quantization along a cycle on the curve.

    The unit-triangular wall crossings act trivially on the microlocal line,
    so the value reduces to the cycle charge (T-exponent, phase) times the
    exponential of the higher generators, with one quarter-turn unit per
    signed branch-cut crossing; the twist sign removes those units.
    """
    d = qd.diagram
    s = d.spectral
    poles = [p for p, _ in s.finite_poles()]
    for p in poles:
        if np.min(np.abs(cycle.polyline - p)) < (d.dtp or 1e-9):
            raise GeometryError("cycle passes through a pole")
    if s.rank == 1:
        exponent, coeff = _rank1_charge(s, cycle.polyline, hbar_order)
        return MicrolocalMonodromy(cycle_label=cycle.label, kind=cycle.kind,
                                   t_exponent=exponent, coefficient=coeff,
                                   raw_unit=1.0, twist_sign=twist.sign(cycle.kind))
    if s.rank != 2:
        raise ConfigurationError("microlocalization is a rank-2 (or 1) operation")
    q0 = -s.leading(2)
    # charge integral of the designated branch
    charge, w_end = integrate_branch_terms(
        q0, cycle.polyline, cycle.start_value, [lambda z, w: w], tol=tol)
    closed = abs(w_end - cycle.start_value) < 0.25 * abs(cycle.start_value)
    if not closed:
        raise GeometryError(
            "cycle does not close on the curve; double the base loop")
    charge = charge[0] / s.hbar
    t_exp = -charge.real
    phase = cmath.exp(1j * charge.imag)
    if cycle.kind == "tp-loop":
        # loop integrals of every generator vanish at a simple branch point:
        # even pole orders on the double cover leave no residue
        if abs(charge) > 1e-8:
            raise GeometryError("tp-loop carries unexpected charge %s" % charge)
        t_exp, phase = 0.0, 1.0 + 0j
    coeff = phase
    if wkb is not None and cycle.kind != "tp-loop":
        order = wkb.order if hbar_order is None else hbar_order
        odd = [(m, el.b) for m, el in p_odd(wkb) if 1 <= m <= order]
        if odd:
            vals, _ = integrate_branch_terms(
                q0, cycle.polyline, cycle.start_value,
                [(lambda z, w, b=b: b(z) * w) for _, b in odd], tol=tol)
            arg = [0j] * (order + 1)
            for (m, _), v in zip(odd, vals):
                arg[m] = v
            coeff = coeff_mul(phase, _exp_hpoly(arg, order))
    unit = 1j ** ((_cut_crossing_sum(qd.cuts, cycle.polyline)) % 4)
    return MicrolocalMonodromy(cycle_label=cycle.label, kind=cycle.kind,
                               t_exponent=t_exp, coefficient=coeff,
                               raw_unit=unit, twist_sign=twist.sign(cycle.kind))


def _exp_hpoly(arg_coeffs, order: int) -> HbarPoly:
    """exp of a truncated polynomial: the constant part exactly, the rest
    by the (finitely terminating) series."""
    c0 = arg_coeffs[0] if arg_coeffs else 0j
    rest = [0j] + list(arg_coeffs[1:])
    arg = HbarPoly.make(rest, order)
    acc = HbarPoly.make([1.0], order)
    term = HbarPoly.make([1.0], order)
    for k in range(1, order + 1):
        term = term * arg
        term = HbarPoly.make([c / k for c in term.coeffs], order)
        acc = acc + term
    scale = cmath.exp(c0)
    return HbarPoly.make([scale * c for c in acc.coeffs], order)


def _rank1_charge(s: SpectralData, loop: np.ndarray, hbar_order: int | None):
    """Cycle charge of (hbar d - Q) psi = 0: Q_0 sets the T-power and phase,
    the higher parts exponentiate at hbar-order shifted down by one."""
    xs, ws = np.polynomial.legendre.leggauss(12)
    n_orders = len(s.coeffs[0])
    totals = [0j] * max(n_orders, 1)
    for a, b in zip(loop[:-1], loop[1:]):
        mid, half = (a + b) / 2, (b - a) / 2
        for x, wt in zip(xs, ws):
            z = mid + half * x
            for k in range(len(totals)):
                totals[k] += wt * half * (-s.correction(1, k)(z))
    charge0 = totals[0] / s.hbar
    t_exp = -charge0.real
    phase = cmath.exp(1j * charge0.imag)
    order = hbar_order if hbar_order is not None else max(n_orders - 2, 0)
    arg = [0j] * (order + 1)
    for k in range(1, len(totals)):
        if k - 1 <= order:
            arg[k - 1] += totals[k]
    coeff = coeff_mul(phase, _exp_hpoly(arg, order))
    return t_exp, coeff


def specialize(obj, hbar_value: complex = 1.0):
    """Insert T^c -> exp(-c) and evaluate hbar coefficients at the given value."""
    if isinstance(obj, MicrolocalMonodromy):
        return obj.specialize(hbar_value)
    if isinstance(obj, NovikovSeries):
        return obj.evaluate_at(hbar_value)
    if isinstance(obj, NovikovMatrix):
        return obj.evaluate_at(hbar_value)
    if isinstance(obj, SheafQuantizationData):
        return {ei: g.evaluate_at(hbar_value) for ei, (g, _) in obj.gluings.items()}
    raise ConfigurationError("cannot specialize %r" % type(obj))
