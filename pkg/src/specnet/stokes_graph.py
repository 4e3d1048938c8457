"""Planar assembly of traced curves: vertices, edges, faces, tameness.

The arrangement is clipped to a disk window; the circle itself enters the
graph as arc edges so faces can be extracted by a half-edge walk.  When the
point at infinity is a pole, window arcs double as its boundary visits.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .algfun import SpectralData, pole_order_at_infinity_qd
from .errors import TamenessError
from .stokes_tracer import Collision, StokesCurve


@dataclass
class GraphVertex:
    z: complex
    kind: str          # turning-point | collision | window | pole-stub | cap-stub | tp-stub | stall-stub
    ref: int = -1
    out_half_edges: list = field(default_factory=list)


@dataclass
class GraphEdge:
    a: int
    b: int
    kind: str          # curve | window-arc
    polyline: np.ndarray
    curve_index: int = -1
    curve_type: tuple | None = None
    mass_a: float = 0.0
    mass_b: float = 0.0
    generation: int = 0


@dataclass
class Face:
    index: int
    cycle: list        # outer boundary half-edge ids, ccw
    holes: list        # lists of half-edge ids
    area: float
    poles_inside: list
    truncated: bool
    outer: bool = False


@dataclass
class StokesGraph:
    vertices: list
    edges: list
    faces: list
    window_radius: float

    def half_edge_vertices(self, h: int):
        e = self.edges[h // 2]
        return (e.a, e.b) if h % 2 == 0 else (e.b, e.a)

    def half_edge_polyline(self, h: int) -> np.ndarray:
        e = self.edges[h // 2]
        return e.polyline if h % 2 == 0 else e.polyline[::-1]

    def euler_characteristic(self) -> int:
        return len(self.vertices) - len(self.edges) + len(self.faces)


def _out_angle(poly: np.ndarray) -> float:
    k = 1
    while k < len(poly) and poly[k] == poly[0]:
        k += 1
    return cmath.phase(poly[min(k, len(poly) - 1)] - poly[0])


def _signed_area(points: np.ndarray) -> float:
    x, y = points.real, points.imag
    return 0.5 * float(np.sum(x[:-1] * y[1:] - x[1:] * y[:-1]))


def _point_in_polygon(pt: complex, points: np.ndarray) -> bool:
    x, y = pt.real, pt.imag
    xs, ys = points.real, points.imag
    inside = False
    for k in range(len(points) - 1):
        x1, y1, x2, y2 = xs[k], ys[k], xs[k + 1], ys[k + 1]
        if (y1 > y) != (y2 > y):
            xt = x1 + (y - y1) / (y2 - y1) * (x2 - x1)
            if xt > x:
                inside = not inside
    return inside


def build_graph(s: SpectralData, curves: list[StokesCurve],
                collisions: list[Collision], window_radius: float,
                dtp: float | None = None) -> StokesGraph:
    """Split curves at collisions, add the window circle, walk the faces."""
    if dtp is None:
        dtp = s.exclusion_radius()
    vertices: list[GraphVertex] = []

    def add_vertex(z, kind, ref=-1, merge_tol=None):
        tol = merge_tol if merge_tol is not None else 10 * dtp * 1e-3
        for vi, v in enumerate(vertices):
            if v.kind == kind and abs(v.z - z) <= tol:
                return vi
        vertices.append(GraphVertex(z=z, kind=kind, ref=ref))
        return len(vertices) - 1

    tp_vertex = {}
    for k, tp in enumerate(s.turning_points()):
        tp_vertex[k] = add_vertex(tp.z, "turning-point", k)
    col_vertex = {}
    for c in collisions:
        col_vertex[c.index] = add_vertex(c.point, "collision", c.index)

    edges: list[GraphEdge] = []

    def add_edge(a, b, kind, polyline, **kw):
        edges.append(GraphEdge(a=a, b=b, kind=kind,
                               polyline=np.asarray(polyline), **kw))
        return len(edges) - 1

    window_hits = []  # (angle, vertex index)
    for curve in curves:
        cuts = [(inc[1], col_vertex[col.index])
                for col in collisions for inc in col.incident
                if inc[0] == curve.index]
        cuts.sort()
        # start vertex
        if curve.source_kind == "turning-point":
            k0 = next((k for k, tp in enumerate(s.turning_points())
                       if abs(tp.z - curve.source) < 1e-9), -1)
            v_start = tp_vertex.get(k0, add_vertex(curve.source, "turning-point", k0))
        else:
            v_start = add_vertex(curve.source, "collision", curve.source_index)
        # end vertex
        z_end = curve.z[-1]
        if curve.terminus == "window":
            v_end = add_vertex(z_end, "window", merge_tol=1e-9)
            window_hits.append((cmath.phase(z_end) % (2 * math.pi), v_end))
        elif curve.terminus == "pole":
            v_end = add_vertex(z_end, "pole-stub")
        elif curve.terminus == "turning-point":
            v_end = add_vertex(z_end, "tp-stub")
        elif curve.terminus == "stalled":
            v_end = add_vertex(z_end, "stall-stub")
        else:
            v_end = add_vertex(z_end, "cap-stub")
        # split polyline at the collision masses
        bounds = [(curve.mass[0], v_start)] + cuts + [(curve.mass[-1], v_end)]
        for (m0, va), (m1, vb) in zip(bounds[:-1], bounds[1:]):
            if m1 - m0 <= 1e-13:
                continue
            sel = (curve.mass > m0 + 1e-13) & (curve.mass < m1 - 1e-13)
            za = vertices[va].z if va is not None else curve.point_at_mass(m0)
            zb = vertices[vb].z
            poly = np.concatenate([[za], curve.z[sel], [zb]])
            add_edge(va, vb, "curve", poly, curve_index=curve.index,
                     curve_type=curve.curve_type, mass_a=m0, mass_b=m1,
                     generation=curve.generation)

    # window circle
    if not window_hits:
        for k in range(8):
            ang = k * math.pi / 4
            v = add_vertex(window_radius * cmath.exp(1j * ang), "window",
                           merge_tol=1e-12)
            window_hits.append((ang, v))
    window_hits.sort()
    for (a0, v0), (a1, v1) in zip(window_hits,
                                  window_hits[1:] + [(window_hits[0][0] + 2 * math.pi,
                                                      window_hits[0][1])]):
        span = a1 - a0
        if span <= 1e-12:
            continue
        n = max(int(span / 0.08), 2)
        ts = np.linspace(a0, a1, n + 1)
        poly = window_radius * np.exp(1j * ts)
        poly[0] = vertices[v0].z
        poly[-1] = vertices[v1].z
        add_edge(v0, v1, "window-arc", poly)

    # half-edge rotation system
    for v in vertices:
        v.out_half_edges = []
    for ei, e in enumerate(edges):
        vertices[e.a].out_half_edges.append(2 * ei)
        vertices[e.b].out_half_edges.append(2 * ei + 1)
    graph = StokesGraph(vertices=vertices, edges=edges, faces=[],
                        window_radius=window_radius)
    for v in vertices:
        v.out_half_edges.sort(
            key=lambda h: _out_angle(graph.half_edge_polyline(h)))

    # next(h): at the head vertex of h, the outgoing half-edge immediately
    # clockwise from the reversal of h
    nxt = {}
    for ei, e in enumerate(edges):
        for h in (2 * ei, 2 * ei + 1):
            tail, head = graph.half_edge_vertices(h)
            twin = h ^ 1
            outs = vertices[head].out_half_edges
            k = outs.index(twin)
            nxt[h] = outs[(k - 1) % len(outs)]

    # face cycles
    seen = set()
    cycles = []
    for h0 in range(2 * len(edges)):
        if h0 in seen:
            continue
        cyc = []
        h = h0
        while True:
            cyc.append(h)
            seen.add(h)
            h = nxt[h]
            if h == h0:
                break
        pts = np.concatenate([graph.half_edge_polyline(h)[:-1] for h in cyc]
                             + [graph.half_edge_polyline(cyc[-1])[-1:]])
        cycles.append((cyc, pts, _signed_area(pts)))

    # positive cycles bound faces; negative ones are holes or the exterior
    pos = [c for c in cycles if c[2] > 0]
    neg = [c for c in cycles if c[2] <= 0]
    faces = []
    poles = [p for p, _ in s.finite_poles()]
    for idx, (cyc, pts, area) in enumerate(pos):
        faces.append(Face(index=idx, cycle=cyc, holes=[], area=area,
                          poles_inside=[], truncated=False))
    for cyc, pts, area in neg:
        # the exterior of the window is the unique cycle made of arcs only
        if all(edges[h // 2].kind == "window-arc" for h in cyc):
            continue
        inside = None
        best = math.inf
        probe = pts[0]
        for f in faces:
            if f.area < best and _point_in_polygon(probe, _cycle_points(graph, f.cycle)):
                inside, best = f, f.area
        if inside is not None:
            inside.holes.append(cyc)
    # attach poles and truncation flags
    for f in faces:
        outer_pts = _cycle_points(graph, f.cycle)
        for p in poles:
            if _point_in_polygon(p, outer_pts):
                if not any(_point_in_polygon(p, _cycle_points(graph, h))
                           for h in f.holes):
                    f.poles_inside.append(p)
        kinds = set()
        for h in f.cycle + [h for hole in f.holes for h in hole]:
            a, b = graph.half_edge_vertices(h)
            kinds.add(vertices[a].kind)
            kinds.add(vertices[b].kind)
        f.truncated = bool(kinds & {"cap-stub", "stall-stub"})
    graph.faces = faces
    return graph


def _cycle_points(graph: StokesGraph, cyc) -> np.ndarray:
    return np.concatenate([graph.half_edge_polyline(h)[:-1] for h in cyc]
                          + [graph.half_edge_polyline(cyc[-1])[-1:]])


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------

@dataclass
class RegionClass:
    face_index: int
    kind: str          # horizontal-strip | half-plane | window-truncated | unclassified
    tp_visits: int
    pole_visits: int


def classify_regions(graph: StokesGraph, s: SpectralData) -> list[RegionClass]:
    """Sort rank-2 faces into strips and half-planes by boundary visits."""
    infinity_is_pole = False
    if s.rank == 2:
        infinity_is_pole = pole_order_at_infinity_qd(s.quadratic_differential()) >= 1
    out = []
    for f in graph.faces:
        if f.truncated:
            out.append(RegionClass(f.index, "window-truncated", 0, 0))
            continue
        tp_visits = 0
        pole_visits = 0
        arc_run = False
        for h in f.cycle:
            a, _ = graph.half_edge_vertices(h)
            va = graph.vertices[a]
            if va.kind == "turning-point":
                tp_visits += 1
            if va.kind == "pole-stub":
                pole_visits += 1
            if graph.edges[h // 2].kind == "window-arc":
                if not arc_run and infinity_is_pole:
                    pole_visits += 1
                arc_run = True
            else:
                arc_run = False
        pole_visits += len(f.poles_inside)
        if tp_visits == 1:
            kind = "half-plane"
        elif tp_visits == 2:
            kind = "horizontal-strip"
        else:
            kind = "unclassified"
        out.append(RegionClass(f.index, kind, tp_visits, pole_visits))
    return out


# ---------------------------------------------------------------------------
# tameness
# ---------------------------------------------------------------------------

@dataclass
class TamenessReport:
    tame: bool
    violations: list[str]
    ordered_collisions: int
    min_sing_separation: float
    window_caveat: str = ("verified inside the clipping window only; "
                          "behavior beyond the window is not checked")


def check_tameness(s: SpectralData, curves: list[StokesCurve],
                   collisions: list[Collision],
                   dtp: float | None = None) -> TamenessReport:
    """Verify the wall-collection constraints inside the window."""
    if dtp is None:
        dtp = s.exclusion_radius()
    violations = []
    tps = s.turning_points()
    for tp in tps:
        if tp.multiplicity != 1 or abs(tp.c2) < 1e-12:
            violations.append("turning point %s is not a double branch" % tp.z)
    for col in collisions:
        if col.cyclic:
            violations.append("cyclic ordered collision at %s" % col.point)
        if col.ordered:
            for tp in tps:
                if abs(col.point - tp.z) < 2 * dtp:
                    violations.append(
                        "ordered collision at turning point %s" % tp.z)
    for c in curves:
        if c.terminus == "stalled":
            violations.append("curve %d stalled: %s" % (c.index, c.terminus_detail))
        if c.terminus == "turning-point" and c.tp_pair_matched:
            violations.append(
                "Stokes segment: curve %d runs into a matching turning point" % c.index)
    sing = [tp.z for tp in tps] + [c.point for c in collisions if c.ordered]
    min_sep = math.inf
    for i in range(len(sing)):
        for j in range(i + 1, len(sing)):
            min_sep = min(min_sep, abs(sing[i] - sing[j]))
    ordered_count = sum(1 for c in collisions if c.ordered)
    if min_sep < 4 * dtp:
        violations.append("singular points closer than 4*delta_tp")
    return TamenessReport(tame=not violations, violations=violations,
                          ordered_collisions=ordered_count,
                          min_sing_separation=min_sep)
