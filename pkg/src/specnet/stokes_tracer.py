"""Tracing of (pre-)Stokes curves as mass-parametrized trajectories.

A curve of type (i, j) solves dz/ds = hbar / (xi_i(z) - xi_j(z)), which makes
the real central-charge integral equal to the parameter s exactly and keeps
its imaginary part pinned at zero, so stored masses are trustworthy weight
bookkeeping.  Sheets are continued along the trajectory itself.
"""

from __future__ import annotations

import cmath
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .algfun import SheetLabeling, SpectralData, TurningPoint, _match_roots
from .errors import (ContinuationError, TracingError,
                     UnsupportedTurningPointError)

TOL_IM = 1e-8
TOL_MASS_REL = 1e-7

# Cash-Karp embedded pair, 4th order propagated against 5th order estimate
_CK_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [3 / 10, -9 / 10, 6 / 5],
    [-11 / 54, 5 / 2, -70 / 27, 35 / 27],
    [1631 / 55296, 175 / 512, 575 / 13824, 44275 / 110592, 253 / 4096],
]
_CK_B5 = [37 / 378, 0, 250 / 621, 125 / 594, 0, 512 / 1771]
_CK_B4 = [2825 / 27648, 0, 18575 / 48384, 13525 / 55296, 277 / 14336, 1 / 4]


@dataclass
class Germ:
    """Initial data of one curve: a point just off the source with sheets."""

    source: complex
    source_kind: str              # "turning-point" | "collision"
    source_index: int
    angle: float
    pair: tuple[int, int]         # 1-indexed labels, curve type (i, j)
    seed_z: complex
    seed_mass: float
    seed_sheets: np.ndarray       # all sheet values at seed_z, label order


@dataclass
class StokesCurve:
    curve_type: tuple[int, int]
    source: complex
    source_kind: str
    source_index: int
    z: np.ndarray
    mass: np.ndarray
    xi_pair: np.ndarray           # shape (len, 2), values for (i, j)
    terminus: str                 # pole | mass-cap | turning-point | window | stalled
    terminus_detail: str = ""
    tp_pair_matched: bool = False
    generation: int = 0
    index: int = -1

    def point_at_mass(self, m: float) -> complex:
        return complex(np.interp(m, self.mass, self.z.real)
                       + 1j * np.interp(m, self.mass, self.z.imag))

    def pair_at_mass(self, m: float) -> tuple[complex, complex]:
        xi = self.xi_pair
        return (complex(np.interp(m, self.mass, xi[:, 0].real)
                        + 1j * np.interp(m, self.mass, xi[:, 0].imag)),
                complex(np.interp(m, self.mass, xi[:, 1].real)
                        + 1j * np.interp(m, self.mass, xi[:, 1].imag)))

    def tangent_at_mass(self, m: float, hbar: complex) -> complex:
        a, b = self.pair_at_mass(m)
        return hbar / (a - b)


@dataclass
class Collision:
    point: complex
    incident: list            # (curve_index, mass, local_pair, angle_in)
    ordered: bool
    cyclic: bool
    transverse: bool = True
    index: int = -1

    def curve_indices(self):
        return [inc[0] for inc in self.incident]


# ---------------------------------------------------------------------------
# labeling helpers
# ---------------------------------------------------------------------------

def labels_at(s: SpectralData, labeling: SheetLabeling, z: complex,
              dtp: float | None = None) -> np.ndarray:
    """Sheet values at z in label order, rerouting around turning points."""
    from .algfun import continue_values
    base = labeling.base
    candidates = [[base, z]]
    span = abs(base - z) + 1.0
    for k in (1, -1, 2, -2):
        mid = (base + z) / 2 + 1j * k * 0.37 * span * cmath.exp(
            1j * cmath.phase(z - base if z != base else 1.0))
        candidates.append([base, mid, z])
    last_err = None
    for path in candidates:
        try:
            return continue_values(s, np.array(labeling.values), path, dtp)
        except ContinuationError as err:
            last_err = err
    raise ContinuationError("no continuation route from %s to %s (%s)"
                            % (base, z, last_err))


def initial_rays(s: SpectralData, labeling: SheetLabeling, tp: TurningPoint,
                 tp_index: int = 0, seed_scale: float = 1e-5) -> list[Germ]:
    """Three curve germs from a simple turning point.

    Directions come from the local square-root expansion of the colliding
    pair; each germ carries the sheet ordering that makes its mass grow.
    """
    if tp.multiplicity != 1 or abs(tp.c2) < 1e-12:
        raise UnsupportedTurningPointError(
            "turning point %s is not a simple double branch" % tp.z)
    v = tp.z
    gap = _nearest_gap(s, v)
    delta = seed_scale * gap
    c = cmath.sqrt(tp.c2)
    theta0 = (2.0 / 3.0) * (cmath.phase(s.hbar) - cmath.phase(c))
    # one labeling route fixes the frame; the other seeds continue from it
    # along arcs around v so all three germs share consistent sheet names
    from .algfun import continue_values
    seeds = [v + delta * cmath.exp(1j * (theta0 + k * 2 * math.pi / 3))
             for k in range(3)]
    frames = [labels_at(s, labeling, seeds[0], dtp=0.3 * delta)]
    for k in (1, 2):
        arc = [v + delta * cmath.exp(1j * (theta0 + t * 2 * math.pi / 3))
               for t in np.linspace(k - 1, k, 33)]
        frames.append(continue_values(s, frames[-1], arc, dtp=0.0))
    germs = []
    for k in range(3):
        theta = theta0 + k * (2.0 * math.pi / 3.0)
        seed = seeds[k]
        sheets = frames[k]
        # colliding pair = two closest values at the seed
        n = len(sheets)
        pair = min(((a, b) for a in range(n) for b in range(a + 1, n)),
                   key=lambda ab: abs(sheets[ab[0]] - sheets[ab[1]]))
        i, j = pair
        dxi = sheets[i] - sheets[j]
        mass = ((2.0 / 3.0) * dxi * (seed - v) / s.hbar).real
        if mass < 0:
            i, j = j, i
            dxi, mass = -dxi, -mass
        germs.append(Germ(source=v, source_kind="turning-point",
                          source_index=tp_index, angle=theta % (2 * math.pi),
                          pair=(i + 1, j + 1), seed_z=seed, seed_mass=mass,
                          seed_sheets=sheets))
    germs.sort(key=lambda g: g.angle)
    return germs


def collision_germ(s: SpectralData, collision_point: complex,
                   sheets: np.ndarray, pair: tuple[int, int],
                   collision_index: int) -> Germ:
    """Germ of a new curve of the given type born at an ordered collision."""
    i, j = pair
    if abs(sheets[i - 1] - sheets[j - 1]) < 1e-12:
        raise TracingError("degenerate pair at collision %s" % collision_point)
    tangent = s.hbar / (sheets[i - 1] - sheets[j - 1])
    return Germ(source=collision_point, source_kind="collision",
                source_index=collision_index,
                angle=cmath.phase(tangent) % (2 * math.pi), pair=pair,
                seed_z=collision_point, seed_mass=0.0, seed_sheets=sheets)


def _nearest_gap(s: SpectralData, v: complex) -> float:
    pts = [tp.z for tp in s.turning_points() if abs(tp.z - v) > 1e-12]
    pts += [p for p, _ in s.finite_poles()]
    return min((abs(p - v) for p in pts), default=max(1.0, abs(v)))


# ---------------------------------------------------------------------------
# the tracer
# ---------------------------------------------------------------------------

class _SheetField:
    """Sheet values continued along the trajectory, matched step by step."""

    def __init__(self, s: SpectralData, z0: complex, sheets0: np.ndarray):
        self.s = s
        self.z = z0
        self.sheets = np.asarray(sheets0, dtype=complex)

    def eval(self, z: complex) -> np.ndarray:
        new = self.s.xi_at(z)
        sigma = _match_roots(self.sheets, new)
        if sigma is None:
            raise ContinuationError("ambiguous sheets near %s" % z)
        return new[sigma]

    def advance(self, z: complex):
        self.sheets = self.eval(z)
        self.z = z


def trace_curve(s: SpectralData, germ: Germ, mass_cap: float,
                dtp: float | None = None, window_radius: float | None = None,
                rtol: float = 1e-10, max_steps: int = 20000,
                generation: int = 0, index: int = -1) -> StokesCurve:
    """Integrate one curve in the mass parameter until a stop condition.

    Stops at mass_cap (exact landing), pole or turning-point proximity,
    window exit, or step collapse (partial curve, terminus "stalled").
    """
    if dtp is None:
        dtp = s.exclusion_radius()
    hbar = s.hbar
    tps = [tp for tp in s.turning_points()]
    poles = [p for p, _ in s.finite_poles()]
    i, j = germ.pair[0] - 1, germ.pair[1] - 1

    field_ = _SheetField(s, germ.seed_z, germ.seed_sheets)
    zs = [germ.source] if germ.source_kind == "turning-point" else []
    masses = [0.0] if zs else []
    pairs = ([(germ.seed_sheets[i], germ.seed_sheets[j])] if zs else [])
    # the polyline always records the seed itself
    zs.append(germ.seed_z)
    masses.append(germ.seed_mass)
    pairs.append((germ.seed_sheets[i], germ.seed_sheets[j]))

    z = germ.seed_z
    m = germ.seed_mass
    scale = max(1.0, abs(z))
    speed = abs(hbar / (germ.seed_sheets[i] - germ.seed_sheets[j]))
    h = max(min(1e-3 * max(dtp, 1e-6) / max(speed, 1e-12), mass_cap - m), 1e-14)
    terminus, detail, tp_matched = "mass-cap", "", False
    left_source_disk = germ.source_kind != "turning-point"

    def rhs(zz: complex, sheets_ref: np.ndarray) -> complex:
        new = s.xi_at(zz)
        sigma = _match_roots(sheets_ref, new)
        if sigma is None:
            raise ContinuationError("ambiguous sheets at %s" % zz)
        xs = new[sigma]
        d = xs[i] - xs[j]
        if d == 0:
            raise ContinuationError("pair degenerate at %s" % zz)
        return hbar / d

    steps = 0
    while m < mass_cap - 1e-15:
        if steps >= max_steps:
            terminus, detail = "stalled", "step budget exhausted"
            break
        steps += 1
        h = min(h, mass_cap - m)
        try:
            ks = [rhs(z, field_.sheets)]
            for row in _CK_A[1:]:
                zz = z + h * sum(a * k for a, k in zip(row, ks))
                ks.append(rhs(zz, field_.sheets))
            z5 = z + h * sum(b * k for b, k in zip(_CK_B5, ks))
            z4 = z + h * sum(b * k for b, k in zip(_CK_B4, ks))
        except ContinuationError:
            h *= 0.25
            if h < 1e-15:
                terminus, detail = "stalled", "sheet tracking collapse"
                break
            continue
        err = abs(z5 - z4)
        tol = rtol * max(scale, abs(z5)) + 1e-15
        if err > tol:
            h *= max(0.2, 0.9 * (tol / err) ** 0.25)
            if h < 1e-15:
                terminus, detail = "stalled", "step collapse near %s" % z
                break
            continue
        try:
            field_.advance(z5)
        except ContinuationError:
            h *= 0.25
            if h < 1e-15:
                terminus, detail = "stalled", "sheet tracking collapse"
                break
            continue
        z, m = z5, m + h
        scale = max(scale, abs(z))
        zs.append(z)
        masses.append(m)
        pairs.append((field_.sheets[i], field_.sheets[j]))
        if err > 0:
            h = min(h * min(5.0, 0.9 * (tol / err) ** 0.2), 0.25 + 0.1 * abs(z))
        # stop conditions
        hit_pole = next((p for p in poles if abs(z - p) < dtp), None)
        if hit_pole is not None:
            terminus, detail = "pole", "pole at %s" % hit_pole
            break
        if not left_source_disk and abs(z - germ.source) > 1.5 * dtp:
            left_source_disk = True
        hit_tp = next((tp for tp in tps
                       if abs(z - tp.z) < dtp
                       and (left_source_disk
                            or abs(tp.z - germ.source) > 1e-12)), None)
        if hit_tp is not None:
            terminus, detail = "turning-point", "turning point at %s" % hit_tp.z
            gap_ij = abs(field_.sheets[i] - field_.sheets[j])
            others = [abs(a - b)
                      for ai, a in enumerate(field_.sheets)
                      for bi, b in enumerate(field_.sheets)
                      if ai < bi and {ai, bi} != {i, j}]
            tp_matched = gap_ij <= min(others, default=math.inf)
            break
        if window_radius is not None and abs(z) > window_radius:
            # clamp the exit point onto the circle
            za, zb = zs[-2], zs[-1]
            ma, mb = masses[-2], masses[-1]
            for _ in range(60):
                zm = (za + zb) / 2
                if abs(zm) > window_radius:
                    zb = zm
                else:
                    za = zm
            t = abs((zb - zs[-2]) / (zs[-1] - zs[-2])) if zs[-1] != zs[-2] else 1.0
            zs[-1] = zb
            masses[-1] = ma + t * (mb - ma)
            terminus, detail = "window", ""
            break

    return StokesCurve(curve_type=germ.pair, source=germ.source,
                       source_kind=germ.source_kind,
                       source_index=germ.source_index,
                       z=np.array(zs), mass=np.array(masses),
                       xi_pair=np.array(pairs), terminus=terminus,
                       terminus_detail=detail, tp_pair_matched=tp_matched,
                       generation=generation, index=index)


def trace_many(s: SpectralData, germs: list[Germ], mass_cap: float,
               workers: int = 1, **kw) -> list[StokesCurve]:
    """Trace a batch of germs, optionally on a thread pool, index-ordered."""
    if workers <= 1:
        curves = [trace_curve(s, g, mass_cap, index=i, **kw)
                  for i, g in enumerate(germs)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(trace_curve, s, g, mass_cap, index=i, **kw)
                    for i, g in enumerate(germs)]
            curves = [f.result() for f in futs]
    return curves


# ---------------------------------------------------------------------------
# collisions
# ---------------------------------------------------------------------------

def _segment_intersection(a0, a1, b0, b1):
    """Parameters (t, u) in [0,1]^2 with a0+t(a1-a0) = b0+u(b1-b0), or None."""
    d1, d2 = a1 - a0, b1 - b0
    den = d1.real * (-d2.imag) - d1.imag * (-d2.real)
    if den == 0:
        return None
    rhs = b0 - a0
    t = (rhs.real * (-d2.imag) - rhs.imag * (-d2.real)) / den
    u = (d1.real * rhs.imag - d1.imag * rhs.real) / den
    if -1e-12 <= t <= 1 + 1e-12 and -1e-12 <= u <= 1 + 1e-12:
        return min(max(t, 0.0), 1.0), min(max(u, 0.0), 1.0)
    return None


def _hermite(curve: StokesCurve, k: int, hbar: complex):
    """Cubic Hermite model of segment k in the mass parameter."""
    m0, m1 = curve.mass[k], curve.mass[k + 1]
    z0, z1 = curve.z[k], curve.z[k + 1]
    t0 = hbar / (curve.xi_pair[k, 0] - curve.xi_pair[k, 1])
    t1 = hbar / (curve.xi_pair[k + 1, 0] - curve.xi_pair[k + 1, 1])
    dm = m1 - m0

    def val(mm):
        t = (mm - m0) / dm
        h00 = 2 * t ** 3 - 3 * t ** 2 + 1
        h10 = t ** 3 - 2 * t ** 2 + t
        h01 = -2 * t ** 3 + 3 * t ** 2
        h11 = t ** 3 - t ** 2
        return h00 * z0 + h10 * dm * t0 + h01 * z1 + h11 * dm * t1

    def deriv(mm):
        t = (mm - m0) / dm
        d00 = (6 * t ** 2 - 6 * t) / dm
        d10 = (3 * t ** 2 - 4 * t + 1)
        d01 = (-6 * t ** 2 + 6 * t) / dm
        d11 = (3 * t ** 2 - 2 * t)
        return d00 * z0 + d10 * t0 + d01 * z1 + d11 * t1

    return val, deriv, (m0, m1)


def detect_collisions(curves: list[StokesCurve], s: SpectralData,
                      labeling: SheetLabeling, tol_x: float | None = None,
                      dtp: float | None = None) -> list[Collision]:
    """Pairwise transverse intersections, refined and classified.

    Intersections inside turning-point exclusion disks and reconvergences
    of curves born at the same collision are not reported.
    """
    if dtp is None:
        dtp = s.exclusion_radius()
    scale = max([1.0] + [np.abs(c.z).max() for c in curves if len(c.z)])
    if tol_x is None:
        tol_x = 1e-9 * scale
    tps = [tp.z for tp in s.turning_points()]

    # spatial hash of segment bounding boxes
    seg_len = [np.abs(np.diff(c.z)) for c in curves]
    med = np.median(np.concatenate([sl for sl in seg_len if len(sl)])) if curves else 1.0
    cell = max(4 * med, 1e-9)
    grid: dict = {}
    for ci, c in enumerate(curves):
        for k in range(len(c.z) - 1):
            a, b = c.z[k], c.z[k + 1]
            for gx in range(int(min(a.real, b.real) // cell), int(max(a.real, b.real) // cell) + 1):
                for gy in range(int(min(a.imag, b.imag) // cell), int(max(a.imag, b.imag) // cell) + 1):
                    grid.setdefault((gx, gy), []).append((ci, k))

    raw_hits = []
    seen = set()
    for bucket in grid.values():
        for ai in range(len(bucket)):
            for bi in range(ai + 1, len(bucket)):
                (ca, ka), (cb, kb) = bucket[ai], bucket[bi]
                if ca == cb:
                    continue
                if (ca, ka, cb, kb) in seen:
                    continue
                seen.add((ca, ka, cb, kb))
                A, B = curves[ca], curves[cb]
                hit = _segment_intersection(A.z[ka], A.z[ka + 1],
                                            B.z[kb], B.z[kb + 1])
                if hit is None:
                    continue
                t, u = hit
                ma = A.mass[ka] + t * (A.mass[ka + 1] - A.mass[ka])
                mb = B.mass[kb] + u * (B.mass[kb + 1] - B.mass[kb])
                raw_hits.append((ca, ka, ma, cb, kb, mb))

    hits = []
    for ca, ka, ma, cb, kb, mb in raw_hits:
        A, B = curves[ca], curves[cb]
        va, da, (alo, ahi) = _hermite(A, ka, s.hbar)
        vb, db, (blo, bhi) = _hermite(B, kb, s.hbar)
        x, y = ma, mb
        ok = False
        for _ in range(25):
            F = va(x) - vb(y)
            if abs(F) < tol_x:
                ok = True
                break
            J11, J12 = da(x), -db(y)
            det = J11.real * J12.imag - J11.imag * J12.real
            if det == 0:
                break
            dx = (F.real * J12.imag - F.imag * J12.real) / det
            dy = (J11.real * F.imag - J11.imag * F.real) / det
            x, y = x - dx, y - dy
            x = min(max(x, alo - (ahi - alo)), ahi + (ahi - alo))
            y = min(max(y, blo - (bhi - blo)), bhi + (bhi - blo))
        if not ok:
            continue
        point = va(x)
        if any(abs(point - v) < dtp for v in tps):
            continue
        near_a = abs(point - A.source) < max(dtp, 1e-7)
        near_b = abs(point - B.source) < max(dtp, 1e-7)
        if near_a or near_b:
            continue
        hits.append((point, ca, x, cb, y))

    # cluster hits into collision points
    clusters: list[list] = []
    for point, ca, ma, cb, mb in hits:
        for cl in clusters:
            if abs(cl[0] - point) < max(100 * tol_x, 1e-7 * scale):
                cl[1].update({ca: ma, cb: mb})
                break
        else:
            clusters.append([point, {ca: ma, cb: mb}])

    out = []
    for point, members in clusters:
        roots = s.xi_at(point)
        glob = labels_at(s, labeling, point)
        sigma = _match_roots(roots, glob)
        incident = []
        dedup = set()
        for ci, mm in sorted(members.items()):
            c = curves[ci]
            xa, xb = c.pair_at_mass(mm)
            li = int(np.argmin(np.abs(roots - xa)))
            lj = int(np.argmin(np.abs(roots - xb)))
            pair = (int(sigma[li]) + 1, int(sigma[lj]) + 1)
            ang = cmath.phase(-c.tangent_at_mass(mm, s.hbar)) % (2 * math.pi)
            key = (ci,)
            if key in dedup:
                continue
            dedup.add(key)
            incident.append((ci, float(mm), pair, ang))
        types = [inc[2] for inc in incident]
        ordered = any(a[1] == b[0] and a[0] != b[1]
                      for a in types for b in types if a != b)
        cyclic = _has_type_cycle(types)
        out.append(Collision(point=point, incident=incident,
                             ordered=ordered, cyclic=cyclic))
    out.sort(key=lambda c: (round(c.point.real, 9), round(c.point.imag, 9)))
    for idx, c in enumerate(out):
        c.index = idx
    return out


def _has_type_cycle(types) -> bool:
    edges = {}
    for i, j in set(types):
        edges.setdefault(i, set()).add(j)
    visiting, done = set(), set()

    def dfs(u):
        if u in done:
            return False
        visiting.add(u)
        for v in edges.get(u, ()):
            if v in visiting or dfs(v):
                return True
        visiting.discard(u)
        done.add(u)
        return False

    return any(dfs(u) for u in list(edges))


def detect_stokes_segments(curves: list[StokesCurve]):
    """Curves running into a turning point whose branching pair they carry."""
    return [c for c in curves
            if c.terminus == "turning-point" and c.tp_pair_matched]


# ---------------------------------------------------------------------------
# independent verification helpers
# ---------------------------------------------------------------------------

def requadrature(curve: StokesCurve, s: SpectralData):
    """Re-integrate the central charge over the polyline, tracer-independent.

    Returns (masses, im_profile): cumulative Re and Im of the integral of
    (xi_i - xi_j)/hbar, from fresh sheet continuation and Gauss-Legendre
    quadrature per segment.
    """
    from .algfun import continue_values
    xs, ws = np.polynomial.legendre.leggauss(8)
    start = 1 if curve.source_kind == "turning-point" else 0
    sheets = np.array(s.xi_at(curve.z[start]))
    target = np.array([curve.xi_pair[start, 0], curve.xi_pair[start, 1]])
    i_idx = int(np.argmin(np.abs(sheets - target[0])))
    j_idx = int(np.argmin(np.abs(sheets - target[1])))
    current = sheets
    total = 0j
    base_re = curve.mass[start]
    re_out = [base_re]
    im_out = [0.0]
    for k in range(start, len(curve.z) - 1):
        za, zb = curve.z[k], curve.z[k + 1]
        mid, half = (za + zb) / 2, (zb - za) / 2
        new = continue_values(s, current, [za, zb], dtp=0.0)
        acc = 0j
        for x, wt in zip(xs, ws):
            znode = mid + half * x
            t = (x + 1) / 2
            guess_i = current[i_idx] * (1 - t) + new[i_idx] * t
            guess_j = current[j_idx] * (1 - t) + new[j_idx] * t
            roots = s.xi_at(znode)
            vi = roots[np.argmin(np.abs(roots - guess_i))]
            vj = roots[np.argmin(np.abs(roots - guess_j))]
            acc += wt * (vi - vj)
        current = new
        total += acc * half / s.hbar
        re_out.append(base_re + total.real)
        im_out.append(total.imag)
    return np.array(re_out), np.array(im_out)
