import math

import numpy as np
import pytest

from specnet.algfun import Poly, RationalFunction, SheetLabeling, SpectralData
from specnet.stokes_graph import (build_graph, check_tameness,
                                  classify_regions)
from specnet.stokes_tracer import detect_collisions, initial_rays, trace_curve


def rf(num, den=None):
    return RationalFunction(Poly(num), Poly(den) if den is not None else None)


def airy(hbar=1.0):
    return SpectralData(2, [[rf([0])], [rf([0, -1])]], hbar)


def weber(hbar=1.0):
    return SpectralData(2, [[rf([0])], [rf([1, 0, -1])]], hbar)


def bnr(hbar=1.0):
    return SpectralData(
        3, [[rf([0])], [rf([3])], [rf([(0, 2)]) * RationalFunction.z()]], hbar)


def traced(s, base, window, mass_cap=200.0):
    lab = SheetLabeling.canonical(s, base)
    curves = []
    idx = 0
    for k, tp in enumerate(s.turning_points()):
        for g in initial_rays(s, lab, tp, tp_index=k):
            curves.append(trace_curve(s, g, mass_cap=mass_cap,
                                      window_radius=window, index=idx))
            idx += 1
    cols = detect_collisions(curves, s, lab)
    return lab, curves, cols


def test_airy_graph_counts():
    s = airy()
    lab, curves, cols = traced(s, 2.0 + 0j, window=4.0)
    g = build_graph(s, curves, cols, window_radius=4.0)
    tp_vs = [v for v in g.vertices if v.kind == "turning-point"]
    win_vs = [v for v in g.vertices if v.kind == "window"]
    assert len(tp_vs) == 1
    assert len(win_vs) == 3
    curve_edges = [e for e in g.edges if e.kind == "curve"]
    assert len(curve_edges) == 3
    assert len(g.faces) == 3
    # V - E + F = 2 with the exterior face counted
    assert len(g.vertices) - len(g.edges) + (len(g.faces) + 1) == 2


def test_airy_faces_are_half_planes():
    s = airy()
    lab, curves, cols = traced(s, 2.0 + 0j, window=4.0)
    g = build_graph(s, curves, cols, window_radius=4.0)
    classes = classify_regions(g, s)
    assert len(classes) == 3
    assert all(c.kind == "half-plane" for c in classes)


def test_weber_graph_faces_and_strip():
    s = weber()
    lab, curves, cols = traced(s, 3.0 + 0j, window=6.0)
    assert cols == []
    g = build_graph(s, curves, cols, window_radius=6.0)
    assert len([v for v in g.vertices if v.kind == "turning-point"]) == 2
    assert len([e for e in g.edges if e.kind == "curve"]) == 6
    assert len(g.faces) == 5
    classes = classify_regions(g, s)
    kinds = sorted(c.kind for c in classes)
    assert kinds.count("half-plane") == 4
    assert kinds.count("horizontal-strip") == 1
    strip = [c for c in classes if c.kind == "horizontal-strip"][0]
    assert strip.tp_visits == 2


def test_empty_curve_set_single_face():
    s = airy()
    g = build_graph(s, [], [], window_radius=3.0)
    assert len(g.faces) == 1


def test_truncated_face_flagged():
    s = weber()
    lab = SheetLabeling.canonical(s, 3.0 + 0j)
    curves = []
    idx = 0
    for k, tp in enumerate(s.turning_points()):
        for g_ in initial_rays(s, lab, tp, tp_index=k):
            curves.append(trace_curve(s, g_, mass_cap=0.8,
                                      window_radius=6.0, index=idx))
            idx += 1
    assert any(c.terminus == "mass-cap" for c in curves)
    g = build_graph(s, curves, [], window_radius=6.0)
    classes = classify_regions(g, s)
    assert any(c.kind == "window-truncated" for c in classes)


def test_classification_stable_under_window_growth():
    s = weber()
    kinds = []
    for window in (6.0, 12.0):
        lab, curves, cols = traced(s, 3.0 + 0j, window=window)
        g = build_graph(s, curves, cols, window_radius=window)
        classes = classify_regions(g, s)
        kinds.append(sorted(c.kind for c in classes if c.kind != "window-truncated"))
    assert kinds[0] == kinds[1]


def test_half_edges_visited_once():
    s = weber()
    lab, curves, cols = traced(s, 3.0 + 0j, window=6.0)
    g = build_graph(s, curves, cols, window_radius=6.0)
    all_in_faces = [h for f in g.faces for h in f.cycle]
    exterior = 2 * len(g.edges) - len(all_in_faces)
    assert len(set(all_in_faces)) == len(all_in_faces)
    # the exterior cycle consumes the clockwise window arcs
    assert exterior == len([e for e in g.edges if e.kind == "window-arc"])


def test_airy_tame():
    s = airy()
    lab, curves, cols = traced(s, 2.0 + 0j, window=4.0)
    rep = check_tameness(s, curves, cols)
    assert rep.tame
    assert rep.ordered_collisions == 0


def test_bnr_tame_with_two_ordered_collisions():
    s = bnr()
    lab, curves, cols = traced(s, 2.0 + 0.5j, window=6.0, mass_cap=12.0)
    rep = check_tameness(s, curves, cols)
    assert rep.tame, rep.violations
    assert rep.ordered_collisions == 2


def test_segment_reported_not_tame():
    s = weber(1j)
    lab = SheetLabeling.canonical(s, 3.0 + 0.2j)
    curves = []
    idx = 0
    for k, tp in enumerate(s.turning_points()):
        for g_ in initial_rays(s, lab, tp, tp_index=k):
            curves.append(trace_curve(s, g_, mass_cap=4.0,
                                      window_radius=10.0, index=idx))
            idx += 1
    rep = check_tameness(s, curves, [])
    assert not rep.tame
    assert any("segment" in v for v in rep.violations)


def test_cyclic_collision_reported():
    from specnet.stokes_tracer import Collision
    col = Collision(point=0j, incident=[
        (0, 1.0, (1, 2), 0.1), (1, 1.0, (2, 3), 2.0), (2, 1.0, (3, 1), 4.0)],
        ordered=True, cyclic=True, index=0)
    s = bnr()
    rep = check_tameness(s, [], [col])
    assert not rep.tame
    assert any("cyclic" in v for v in rep.violations)
