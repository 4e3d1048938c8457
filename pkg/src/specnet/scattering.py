"""Spectral scattering diagrams: walls, monodromy, induction to a cutoff.

A diagram is a set of walls (traced curves with Novikov coefficients) plus
diagonal edge matrices and a normalization datum.  Consistency is measured
by the loop monodromy around each ordered collision: walls passing through
contribute a factor on their downstream half-ray and its inverse on the
upstream one, walls born at the collision contribute once.  Both factors of
a through-wall use the wall factor anchored at the collision itself, which
makes opposite crossings cancel exactly and leaves only the chaining terms.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .algfun import SheetLabeling, SpectralData, _match_roots
from .errors import (ConfigurationError, GeometryError, SetupError,
                     TamenessError)
from .novikov import (HbarPoly, NovikovMatrix, NovikovSeries, coeff_mul,
                      matrix_deviation)
from .stokes_graph import check_tameness
from .stokes_tracer import (Collision, Germ, StokesCurve, collision_germ,
                            detect_collisions, initial_rays, labels_at,
                            trace_curve, trace_many)
from .wkb import (WKBSeries, integrate_branch_terms, p_odd,
                  turning_point_normalization, wkb_recursion)


@dataclass
class Wall:
    curve: StokesCurve
    phi: NovikovSeries
    generation: int
    index: int

    @property
    def curve_type(self):
        return self.curve.curve_type

    def weight(self) -> float:
        return self.phi.valuation()


class NormalizationData:
    """Per-sheet transport scalars attached to paths along walls.

    mode "trivial": every scalar is 1.  mode "formal-hbar": rank-2 only,
    the ratio for a wall of pair (i, j) from its source to a point at mass m
    is exp(2 * sum over odd orders of hbar^k * int b_k sqrt(Q0)), the
    integral running along the wall with the branch of sheet i, normalized
    over a half-loop when the source is a turning point.
    """

    def __init__(self, mode: str = "trivial", hbar_order: int = 0,
                 wkb: WKBSeries | None = None):
        if mode not in ("trivial", "formal-hbar"):
            raise ConfigurationError("unknown normalization mode %r" % mode)
        self.mode = mode
        self.hbar_order = hbar_order
        self.wkb = wkb
        self.values: dict = {}

    def ratio(self, spectral: SpectralData, wall: Wall, mass: float):
        """m_(gamma,i) * m_(gamma,j)^-1 for the wall path source -> mass."""
        if self.mode == "trivial":
            return 1.0
        if self.wkb is None:
            raise ConfigurationError(
                "formal-hbar normalization needs rank-2 recursion data")
        key = (wall.index, round(mass, 12))
        if key in self.values:
            return self.values[key]
        odd = [(m, el.b) for m, el in p_odd(self.wkb) if m >= 1]
        if not odd:
            self.values[key] = 1.0
            return 1.0
        point = wall.curve.point_at_mass(mass)
        w_i = wall.curve.pair_at_mass(mass)[0]
        if wall.curve.source_kind == "turning-point":
            terms = turning_point_normalization(
                self.wkb, wall.curve.source, point, w_i,
                order=self.hbar_order)
            ints = {m: v for m, v in terms.items() if m >= 1}
        else:
            sel = wall.curve.mass <= mass + 1e-13
            pts = np.concatenate([wall.curve.z[sel], [point]])
            start_w = wall.curve.xi_pair[0, 0]
            integrands = [(lambda z, w, b=b: b(z) * w) for _, b in odd]
            vals, _ = integrate_branch_terms(self.wkb.system.q0, pts, start_w,
                                             integrands)
            ints = {m: v for (m, _), v in zip(odd, vals)}
        coeffs = [0j] * (self.hbar_order + 1)
        coeffs[0] = 1.0
        expo = HbarPoly.make(coeffs, self.hbar_order)
        arg = HbarPoly.make(
            [0] + [2 * ints.get(m, 0.0) if m % 2 else 0.0
                   for m in range(1, self.hbar_order + 1)], self.hbar_order)
        # exp of a nilpotent-free polynomial with zero constant term
        term = HbarPoly.make([1.0], self.hbar_order)
        acc = HbarPoly.make([1.0], self.hbar_order)
        for k in range(1, self.hbar_order + 1):
            term = term * arg
            term = HbarPoly.make([c / k for c in term.coeffs], self.hbar_order)
            acc = acc + term
        out = acc
        self.values[key] = out
        return out


@dataclass
class ConsistencyReport:
    passed: bool
    level: float
    failures: list


@dataclass
class ScatteringDiagram:
    spectral: SpectralData
    labeling: SheetLabeling
    cutoff: float
    walls: list
    collisions: list
    normalization: NormalizationData
    edge_matrices: dict = field(default_factory=dict)
    consistency_level: float = 0.0
    window_radius: float | None = None
    dtp: float | None = None

    def curves(self):
        return [w.curve for w in self.walls]

    def wall_by_curve_index(self, idx: int) -> Wall:
        for w in self.walls:
            if w.curve.index == idx:
                return w
        raise KeyError(idx)

    def a_e(self, wall: Wall) -> np.ndarray:
        n = self.spectral.rank
        return self.edge_matrices.get(wall.index, np.ones(n, dtype=complex))

    def max_generation(self) -> int:
        return max((w.generation for w in self.walls), default=0)


# ---------------------------------------------------------------------------
# wall factor and monodromy
# ---------------------------------------------------------------------------

def wall_factor(d: ScatteringDiagram, wall: Wall, point: complex | None = None,
                mass: float | None = None) -> NovikovSeries:
    """Novikov coefficient of the wall at a point on it: m_i m_j^-1 phi T^mass."""
    if mass is None:
        if point is None:
            raise ConfigurationError("need a point or a mass")
        k = int(np.argmin(np.abs(wall.curve.z - point)))
        if abs(wall.curve.z[k] - point) > 1e-3 * max(1.0, abs(point)):
            raise GeometryError("point %s is beyond the traced extent" % point)
        mass = float(wall.curve.mass[k])
    ratio = d.normalization.ratio(d.spectral, wall, mass)
    return wall.phi.shift(mass).scale(ratio)


def _frame_at(d: ScatteringDiagram, z: complex) -> np.ndarray:
    return d.spectral.xi_at(z)


def _pair_in_frame(frame: np.ndarray, values) -> tuple[int, int]:
    i = int(np.argmin(np.abs(frame - values[0])))
    j = int(np.argmin(np.abs(frame - values[1])))
    if i == j:
        raise GeometryError("wall pair collapses in the local frame")
    return i, j


def _incidences(d: ScatteringDiagram, col: Collision):
    """All (wall, mass at c, through) incidences at a collision."""
    out = []
    for curve_index, mass, _pair, _ang in col.incident:
        out.append((d.wall_by_curve_index(curve_index), float(mass), True))
    for w in d.walls:
        if (w.curve.source_kind == "collision"
                and abs(w.curve.source - col.point) < 1e-9 * max(1.0, abs(col.point))):
            out.append((w, 0.0, False))
    return out


def collision_loop_monodromy(d: ScatteringDiagram, col: Collision):
    """Transport around a small ccw loop at the collision, start frame fixed.

    Returns (matrix, frame values at the collision).  Each through-wall
    contributes its factor on the downstream half-ray and the inverse on the
    upstream one; emanating walls contribute once.
    """
    n = d.spectral.rank
    frame = _frame_at(d, col.point)
    crossings = []  # (angle, wall, mass, sign, (i, j))
    for wall, mass, through in _incidences(d, col):
        if through:
            vals = wall.curve.pair_at_mass(mass)
        else:
            vals = (wall.curve.xi_pair[0, 0], wall.curve.xi_pair[0, 1])
        i, j = _pair_in_frame(frame, vals)
        tangent = d.spectral.hbar / (frame[i] - frame[j])
        ang = cmath.phase(tangent) % (2 * math.pi)
        factor = wall_factor(d, wall, mass=mass)
        crossings.append((ang, wall.index, factor, +1, (i, j)))
        if through:
            crossings.append(((ang + math.pi) % (2 * math.pi), wall.index,
                              factor, -1, (i, j)))
    crossings.sort(key=lambda t: (t[0], t[1]))
    m = NovikovMatrix.identity(n, d.cutoff)
    for ang, _wi, factor, sign, (i, j) in crossings:
        f = NovikovMatrix.elementary(n, i, j,
                                     factor if sign > 0 else -factor)
        m = f @ m
    return m, frame


def point_monodromy(d: ScatteringDiagram, col: Collision) -> NovikovMatrix:
    """The one-factor-per-wall ordered product at an ordered collision.

    Walls are taken counterclockwise by incoming tangent direction, the
    first one rightmost; emanating walls are swept at their outgoing angle.
    """
    if col.cyclic:
        raise TamenessError("cyclic ordered collision at %s" % col.point)
    n = d.spectral.rank
    frame = _frame_at(d, col.point)
    entries = []
    for wall, mass, through in _incidences(d, col):
        if through:
            vals = wall.curve.pair_at_mass(mass)
        else:
            vals = (wall.curve.xi_pair[0, 0], wall.curve.xi_pair[0, 1])
        i, j = _pair_in_frame(frame, vals)
        tangent = d.spectral.hbar / (frame[i] - frame[j])
        ang = (cmath.phase(tangent) + (math.pi if through else 0.0)) % (2 * math.pi)
        entries.append((ang, wall.index, wall_factor(d, wall, mass=mass), (i, j),
                        d.a_e(wall)))
    entries.sort(key=lambda t: (t[0], t[1]))
    m = NovikovMatrix.identity(n, d.cutoff)
    for ang, _wi, factor, (i, j), diag in entries:
        f = NovikovMatrix.elementary(n, i, j, factor, diag=diag)
        m = f @ m
    out = m
    dev = {(i, j): s for i, j, s in matrix_deviation(out)}
    for (i, j), s in dev.items():
        if i != j and (j, i) in dev:
            raise TamenessError(
                "monodromy at %s has both (%d,%d) and (%d,%d) deviations"
                % (col.point, i, j, j, i))
    return out


def consistency_check(d: ScatteringDiagram, w: float) -> ConsistencyReport:
    """Loop monodromy at every ordered collision must be id modulo T^w."""
    failures = []
    level = min(w, d.cutoff)
    for col in d.collisions:
        if not col.ordered:
            continue
        m, _ = collision_loop_monodromy(d, col)
        for i, j, s in matrix_deviation(m):
            v = s.valuation()
            level = min(level, v)
            if v < w - 1e-9:
                failures.append((col.index, (i, j), v, s))
    report = ConsistencyReport(passed=not failures, level=level,
                               failures=failures)
    d.consistency_level = level
    return report


# ---------------------------------------------------------------------------
# initial diagram
# ---------------------------------------------------------------------------

def _local_consistency_at_turning_point(d: ScatteringDiagram, tp_index: int):
    """Classical simple-branch identity for the three rays of one vertex.

    In the frame continued around the vertex the ray types alternate; the
    connection factors dressed by the quarter-turn unit (phi -> -i phi)
    compose with the sheet swap to a scalar of modulus one and square -1.
    A different scalar signals broken initial data.
    """
    walls = sorted((w for w in d.walls
                    if w.curve.source_kind == "turning-point"
                    and w.curve.source_index == tp_index),
                   key=lambda w: cmath.phase(w.curve.z[1] - w.curve.z[0]) % (2 * math.pi))
    if len(walls) != 3:
        raise SetupError("turning point %d carries %d rays, expected 3"
                         % (tp_index, len(walls)))
    phis = []
    types = []
    for w in walls:
        lead = w.phi.leading() if not w.phi.is_zero() else 0.0
        val = lead.evaluate(0.0) if isinstance(lead, HbarPoly) else complex(lead)
        if w.phi.is_zero() or abs(w.phi.valuation()) > 1e-9:
            raise SetupError("initial wall %d must carry weight-0 coefficient"
                             % w.index)
        phis.append(val)
        types.append(w.curve_type)
    # locate the branch-cut wedge: the two ccw-consecutive rays of equal type
    same = [k for k in range(3) if types[k] == types[(k + 1) % 3]]
    if len(same) != 1:
        raise SetupError("ray types around turning point %d do not show the "
                         "single-cut pattern: %s" % (tp_index, types))
    start = (same[0] + 1) % 3
    order = [start, (start + 1) % 3, (start + 2) % 3]
    m = np.eye(2, dtype=complex)
    e01 = np.array([[0, 1], [0, 0]], dtype=complex)
    e10 = np.array([[0, 0], [1, 0]], dtype=complex)
    for pos, k in enumerate(order):
        e = e01 if pos % 2 == 0 else e10
        m = (np.eye(2) + (-1j) * phis[k] * e) @ m
    m = np.array([[0, 1], [1, 0]], dtype=complex) @ m
    s = m[0, 0]
    if abs(abs(s) - 1) > 1e-9 or abs(m[0, 1]) > 1e-9 or abs(m[1, 0]) > 1e-9 \
            or abs(m[1, 1] - s) > 1e-9 or abs(s * s + 1) > 1e-9:
        raise SetupError(
            "local consistency fails at turning point %d: product %s" % (tp_index, m))


def initial_diagram(s: SpectralData, labeling: SheetLabeling, cutoff: float,
                    normalization: NormalizationData | None = None,
                    edge_matrices: dict | None = None,
                    window_radius: float | None = None,
                    phi_value: complex = -1.0,
                    workers: int = 1) -> ScatteringDiagram:
    """Weight-zero walls from every turning point, coefficient -1 each."""
    if cutoff <= 0:
        raise ConfigurationError("cutoff must be positive")
    if normalization is None:
        normalization = NormalizationData("trivial")
    if normalization.mode == "formal-hbar" and normalization.wkb is None:
        if s.rank != 2:
            raise ConfigurationError(
                "formal-hbar normalization only exists for rank 2")
        normalization.wkb = wkb_recursion(s, normalization.hbar_order)
    germs = []
    for k, tp in enumerate(s.turning_points()):
        germs.extend(initial_rays(s, labeling, tp, tp_index=k))
    curves = trace_many(s, germs, mass_cap=cutoff, workers=workers,
                        window_radius=window_radius)
    collisions = detect_collisions(curves, s, labeling)
    tame = check_tameness(s, curves, collisions)
    if not tame.tame:
        raise TamenessError("; ".join(tame.violations))
    walls = [Wall(curve=c, phi=NovikovSeries.monomial(0.0, phi_value, cutoff),
                  generation=0, index=c.index) for c in curves]
    d = ScatteringDiagram(spectral=s, labeling=labeling, cutoff=cutoff,
                          walls=walls, collisions=collisions,
                          normalization=normalization,
                          edge_matrices=edge_matrices or {},
                          window_radius=window_radius,
                          dtp=s.exclusion_radius())
    for k in range(len(s.turning_points())):
        _local_consistency_at_turning_point(d, k)
    return d


# ---------------------------------------------------------------------------
# induction
# ---------------------------------------------------------------------------

def inductive_step(d: ScatteringDiagram, workers: int = 1) -> ScatteringDiagram:
    """Cancel every collision deviation with one new wall per matrix entry."""
    s = d.spectral
    gen = d.max_generation() + 1
    new_germs = []
    new_phis = []
    for col in sorted((c for c in d.collisions if c.ordered),
                      key=lambda c: c.index):
        m, frame = collision_loop_monodromy(d, col)
        for i, j, series in sorted(matrix_deviation(m),
                                   key=lambda t: (t[0], t[1])):
            germ = collision_germ(s, col.point, frame, (i, j), col.index)
            new_germs.append((germ, series.valuation()))
            new_phis.append(-series)
    if not new_germs:
        return d
    next_index = max(w.curve.index for w in d.walls) + 1
    new_walls = []
    curves = [w.curve for w in d.walls]
    for k, ((germ, val), phi) in enumerate(zip(new_germs, new_phis)):
        cap = max(d.cutoff - val, 0.0)
        curve = trace_curve(s, germ, mass_cap=cap, dtp=d.dtp,
                            window_radius=d.window_radius,
                            generation=gen, index=next_index + k)
        curves.append(curve)
        new_walls.append(Wall(curve=curve, phi=phi, generation=gen,
                              index=curve.index))
    collisions = detect_collisions(curves, s, d.labeling)
    tame = check_tameness(s, curves, collisions)
    if not tame.tame:
        raise TamenessError("inductive step broke tameness: "
                            + "; ".join(tame.violations))
    out = ScatteringDiagram(spectral=s, labeling=d.labeling, cutoff=d.cutoff,
                            walls=d.walls + new_walls, collisions=collisions,
                            normalization=d.normalization,
                            edge_matrices=dict(d.edge_matrices),
                            window_radius=d.window_radius, dtp=d.dtp,
                            consistency_level=d.consistency_level)
    for w in new_walls:
        out.edge_matrices.setdefault(w.index, np.ones(s.rank, dtype=complex))
    return out


# ---------------------------------------------------------------------------
# the weight floor w_min
# ---------------------------------------------------------------------------

@dataclass
class WMinBreakdown:
    per_vertex: list   # (tp index, r_U, d_U, d_V, d_v)
    value: float


def compute_w_min(d: ScatteringDiagram, detail: bool = False):
    """Minimum over turning points of the neighborhood weight bounds.

    Radii are chosen maximal by bisection subject to keeping every foreign
    wall out (a conservative superset of the required exclusions); d(U) is
    the smallest ray mass at the exit of the inner disk, d(V) the smallest
    foreign mass gain from the tube boundary to the local tree, d_v the
    smallest foreign mass inside the tube.
    """
    s = d.spectral
    tps = s.turning_points()
    if not tps:
        raise GeometryError("no turning points, the weight floor is undefined")
    rows = []
    for k, tp in enumerate(tps):
        v = tp.z
        rays = [w.curve for w in d.walls
                if w.curve.source_kind == "turning-point"
                and w.curve.source_index == k and w.generation == 0]
        ray_ids = {c.index for c in rays}
        foreign = [w.curve for w in d.walls if w.curve.index not in ray_ids]
        gap = min([abs(t.z - v) for t in tps if abs(t.z - v) > 1e-12]
                  + [abs(p - v) for p, _ in s.finite_poles()]
                  + [math.inf])
        r_cap = 0.45 * gap if math.isfinite(gap) else \
            0.25 * (d.window_radius or 4.0 * max(1.0, abs(v)))

        def clear_of_foreign(r):
            for c in foreign:
                if np.min(np.abs(c.z - v)) < r:
                    return False
            return True

        lo, hi = 0.0, r_cap
        for _ in range(40):
            mid = (lo + hi) / 2
            if clear_of_foreign(mid):
                lo = mid
            else:
                hi = mid
        r_u = lo
        if r_u <= 0:
            raise GeometryError("no admissible inner disk at %s" % v)
        d_u = math.inf
        tree_pts = [v]
        for c in rays:
            radii = np.abs(c.z - v)
            outside = np.nonzero(radii >= r_u)[0]
            if len(outside) == 0:
                d_u = min(d_u, c.mass[-1])
                tree_pts.extend(c.z)
                continue
            kx = outside[0]
            if kx == 0:
                d_u = min(d_u, c.mass[0])
            else:
                d_u = min(d_u, _mass_at_radius(c, v, r_u, kx - 1, s.hbar))
            tree_pts.extend(c.z[:kx + 1])
        tree = np.array(tree_pts)

        def tube_clear(r):
            for c in foreign:
                dmin = _min_dist_to_set(c.z, tree)
                if dmin < r:
                    return False
            return True

        lo, hi = 0.0, r_u / 2
        for _ in range(40):
            mid = (lo + hi) / 2
            if tube_clear(mid):
                lo = mid
            else:
                hi = mid
        r_v = lo
        d_vv = math.inf   # d(V_v): entry-to-tree mass gain
        d_v3 = math.inf   # d_v: foreign mass while inside the tube
        for c in foreign:
            dists = np.array([np.min(np.abs(tree - z)) for z in c.z])
            inside = dists < max(r_v, 1e-12)
            if inside.any():
                d_v3 = min(d_v3, float(c.mass[inside].min()))
                touch = np.nonzero(dists < 10 * (d.dtp or 1e-6))[0]
                if len(touch):
                    entry = np.nonzero(inside)[0][0]
                    d_vv = min(d_vv, float(c.mass[touch[0]] - c.mass[entry]))
        rows.append((k, r_u, d_u, d_vv, d_v3))
    value = min(min(r[2], r[3], r[4] / 2) for r in rows)
    if not (value > 0):
        raise GeometryError("weight floor came out nonpositive")
    breakdown = WMinBreakdown(per_vertex=rows, value=value)
    return breakdown if detail else value


def _mass_at_radius(curve: StokesCurve, center: complex, r: float,
                    seg: int, hbar: complex) -> float:
    """Mass where the curve crosses |z - center| = r inside segment seg."""
    from .stokes_tracer import _hermite
    val, _, (m0, m1) = _hermite(curve, seg, hbar)
    lo, hi = m0, m1
    for _ in range(80):
        mid = (lo + hi) / 2
        if abs(val(mid) - center) < r:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def _min_dist_to_set(points: np.ndarray, targets: np.ndarray) -> float:
    best = math.inf
    step = max(1, len(points) // 400)
    for z in points[::step]:
        best = min(best, float(np.min(np.abs(targets - z))))
    return best


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def run_scattering(s: SpectralData, labeling: SheetLabeling, cutoff: float,
                   normalization: NormalizationData | None = None,
                   w_min: float | None = None,
                   window_radius: float | None = None,
                   workers: int = 1,
                   max_generations: int | None = None) -> ScatteringDiagram:
    """Iterate the inductive step until the diagram is consistent mod T^cutoff."""
    d = initial_diagram(s, labeling, cutoff, normalization=normalization,
                        window_radius=window_radius, workers=workers)
    if not s.turning_points():
        d.consistency_level = cutoff
        return d
    if w_min is None:
        w_min = compute_w_min(d)
    if max_generations is None:
        max_generations = int(math.ceil(cutoff / w_min)) + 1
    for _ in range(max_generations):
        report = consistency_check(d, cutoff)
        if report.passed:
            break
        d = inductive_step(d, workers=workers)
    else:
        consistency_check(d, cutoff)
    for w in d.walls:
        if w.weight() < w.generation * w_min - 1e-7:
            raise TamenessError(
                "wall %d violates the weight floor: %.6g < %d * %.6g"
                % (w.index, w.weight(), w.generation, w_min))
    return d


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def diagram_to_json(d: ScatteringDiagram) -> dict:
    walls = []
    for w in sorted(d.walls, key=lambda w: w.index):
        walls.append({
            "index": w.index,
            "type": list(w.curve_type),
            "generation": w.generation,
            "source": [w.curve.source.real, w.curve.source.imag],
            "terminus": w.curve.terminus,
            "phi": w.phi.to_json(),
            "polyline": [[z.real, z.imag, m] for z, m in
                         zip(w.curve.z.tolist(), w.curve.mass.tolist())],
        })
    cols = []
    for c in sorted(d.collisions, key=lambda c: c.index):
        cols.append({
            "index": c.index,
            "point": [c.point.real, c.point.imag],
            "ordered": c.ordered,
            "cyclic": c.cyclic,
            "incident": [[ci, m, list(pair)] for ci, m, pair, _ in c.incident],
        })
    return {"cutoff": d.cutoff, "consistency_level": d.consistency_level,
            "walls": walls, "collisions": cols}
