"""Exact WKB recursion for rank-2 potentials and cycle integrals.

Generators of the formal solution live in the quadratic extension
a(z) + b(z) sqrt(Q0(z)) of the rational function field, which is closed
under the ring operations and d/dz.  The recursion is exact; numerics
enter only in the contour quadrature of the resulting terms.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .algfun import RationalFunction, SpectralData
from .errors import (ConfigurationError, DegenerateCurveError, GeometryError,
                     QuadratureError)


# ---------------------------------------------------------------------------
# the ring of a + b sqrt(Q0)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SqrtQElement:
    """a + b sqrt(Q0), with the ambient Q0 supplied by the WKBSystem."""

    a: RationalFunction
    b: RationalFunction

    def is_zero(self) -> bool:
        return self.a.is_zero() and self.b.is_zero()

    def flip(self) -> "SqrtQElement":
        """Sheet flip sqrt(Q0) -> -sqrt(Q0)."""
        return SqrtQElement(self.a, -self.b)


class WKBSystem:
    """Rank-2 Schroedinger data ((hbar d)^2 - Q) psi = 0 with exact Q parts."""

    def __init__(self, spectral: SpectralData):
        if spectral.rank != 2:
            raise ConfigurationError("WKB recursion implemented for rank 2")
        if not spectral.leading(1).is_zero():
            raise ConfigurationError("expect B1 = 0 (Schroedinger normal form)")
        self.spectral = spectral
        self.q_parts = [(-c) for c in spectral.coeffs[1]]
        self.q0 = self.q_parts[0]
        if self.q0.is_zero():
            raise DegenerateCurveError("Q0 vanishes identically")

    def q(self, k: int) -> RationalFunction:
        return self.q_parts[k] if k < len(self.q_parts) else RationalFunction.zero()

    # ring operations ------------------------------------------------------

    def const(self, rf: RationalFunction) -> SqrtQElement:
        return SqrtQElement(rf, RationalFunction.zero())

    def zero(self) -> SqrtQElement:
        return SqrtQElement(RationalFunction.zero(), RationalFunction.zero())

    def add(self, x: SqrtQElement, y: SqrtQElement) -> SqrtQElement:
        return SqrtQElement(x.a + y.a, x.b + y.b)

    def sub(self, x: SqrtQElement, y: SqrtQElement) -> SqrtQElement:
        return SqrtQElement(x.a - y.a, x.b - y.b)

    def mul(self, x: SqrtQElement, y: SqrtQElement) -> SqrtQElement:
        return SqrtQElement(x.a * y.a + x.b * y.b * self.q0,
                            x.a * y.b + x.b * y.a)

    def ddz(self, x: SqrtQElement) -> SqrtQElement:
        # (b sqrt(Q0))' = (b' + b Q0'/(2 Q0)) sqrt(Q0)
        half = RationalFunction([(0.5, 0)])
        return SqrtQElement(
            x.a.derivative(),
            x.b.derivative() + x.b * self.q0.derivative() * half / self.q0)

    def div_2sqrtq0(self, x: SqrtQElement) -> SqrtQElement:
        # (a + b sqrt(Q0)) / (2 sqrt(Q0)) = b/2 + (a / (2 Q0)) sqrt(Q0)
        half = RationalFunction([(0.5, 0)])
        return SqrtQElement(x.b * half, x.a * half / self.q0)

    def value(self, x: SqrtQElement, z: complex, w: complex) -> complex:
        """Evaluate with the designated branch value w = sqrt(Q0)(z)."""
        return x.a(z) + x.b(z) * w


@dataclass
class WKBSeries:
    """Recursion output P_(-1) .. P_N, indexed by hbar power."""

    system: WKBSystem
    order: int
    terms: list  # terms[m + 1] = P_m as SqrtQElement

    def term(self, m: int) -> SqrtQElement:
        return self.terms[m + 1]


def wkb_recursion(spectral: SpectralData, order: int) -> WKBSeries:
    """Solve the generator recursion exactly up to the requested hbar order.

    The index convention is fixed by the residual identity: with
    S = sum_m hbar^m P_m, the combination hbar^2 (S' + S^2) - Q vanishes
    through order N+1.  Equivalently, for m >= 0,

        2 P_(-1) P_m + sum_(m1+m2=m-1) P_m1 P_m2 + P_(m-1)' = Q_(m+1).
    """
    sys = WKBSystem(spectral)
    one = RationalFunction([(1, 0)])
    terms = [SqrtQElement(RationalFunction.zero(), one)]  # P_(-1) = sqrt(Q0)
    for m in range(0, order + 1):
        rhs = sys.const(sys.q(m + 1))
        for m1 in range(0, m):
            m2 = m - 1 - m1
            rhs = sys.sub(rhs, sys.mul(terms[m1 + 1], terms[m2 + 1]))
        rhs = sys.sub(rhs, sys.ddz(terms[m]))
        terms.append(sys.div_2sqrtq0(rhs))
    return WKBSeries(system=sys, order=order, terms=terms)


def riccati_residual(wkb: WKBSeries):
    """Coefficients of hbar^2(S' + S^2) - Q for k = 0 .. N+1, all exactly zero."""
    sys, N = wkb.system, wkb.order
    out = []
    for k in range(0, N + 2):
        acc = sys.zero()
        if -1 <= k - 2 <= N:
            acc = sys.add(acc, sys.ddz(wkb.term(k - 2)))
        for m1 in range(-1, N + 1):
            m2 = k - 2 - m1
            if -1 <= m2 <= N:
                acc = sys.add(acc, sys.mul(wkb.term(m1), wkb.term(m2)))
        acc = sys.sub(acc, sys.const(sys.q(k)))
        out.append((k, acc))
    return out


def p_odd(wkb: WKBSeries):
    """Sheet-flip-odd part per hbar order: list of (m, SqrtQElement(0, b_m))."""
    zero = RationalFunction.zero()
    return [(m, SqrtQElement(zero, wkb.term(m).b))
            for m in range(-1, wkb.order + 1) if not wkb.term(m).b.is_zero()]


def p_even(wkb: WKBSeries):
    zero = RationalFunction.zero()
    return [(m, SqrtQElement(wkb.term(m).a, zero))
            for m in range(-1, wkb.order + 1) if not wkb.term(m).a.is_zero()]


def even_part_is_log_derivative(wkb: WKBSeries) -> bool:
    """Check 2 P_od P_ev + P_od' = 0 order by order (orders -1 .. N-1)."""
    sys, N = wkb.system, wkb.order
    odd = {m: SqrtQElement(RationalFunction.zero(), wkb.term(m).b)
           for m in range(-1, N + 1)}
    ev = {m: SqrtQElement(wkb.term(m).a, RationalFunction.zero())
          for m in range(0, N + 1)}
    for k in range(-1, N):
        acc = sys.ddz(odd[k]) if k in odd else sys.zero()
        for m2 in range(0, N + 1):
            m1 = k - m2
            if -1 <= m1 <= N:
                two = sys.const(RationalFunction([(2, 0)]))
                acc = sys.add(acc, sys.mul(two, sys.mul(odd[m1], ev[m2])))
        if not acc.is_zero():
            return False
    return True


# ---------------------------------------------------------------------------
# branch-tracked quadrature along polylines
# ---------------------------------------------------------------------------

_GL8 = np.polynomial.legendre.leggauss(8)
_GL16 = np.polynomial.legendre.leggauss(16)


def _sqrt_near(q0val: complex, ref: complex) -> complex:
    w = cmath.sqrt(q0val)
    return w if abs(w - ref) <= abs(-w - ref) else -w


def refine_branch_path(q0: RationalFunction, points, w_start: complex,
                       max_depth: int = 40):
    """Subdivide a polyline until sqrt(Q0) is tracked unambiguously.

    Returns (points, branch values) with consecutive branch moves small
    against the local separation 2|w| of the two square roots.
    """
    pts = [complex(points[0])]
    ws = [_sqrt_near(q0(points[0]), w_start)]
    if abs(ws[0] - w_start) > 0.25 * max(abs(w_start), 1e-300):
        raise QuadratureError("starting branch value does not match sqrt(Q0)")

    def extend(za, wa, zb, depth):
        wb = _sqrt_near(q0(zb), wa)
        if abs(wb - wa) > 0.3 * min(abs(wa), abs(wb)) or wb == 0:
            if depth >= max_depth:
                raise QuadratureError("branch tracking failed near %s" % zb)
            zm = (za + zb) / 2
            wm = extend(za, wa, zm, depth + 1)
            return extend(zm, wm, zb, depth + 1)
        pts.append(zb)
        ws.append(wb)
        return wb

    for zb in points[1:]:
        extend(pts[-1], ws[-1], complex(zb), 0)
    return pts, ws


def integrate_branch_terms(q0: RationalFunction, points, w_start: complex,
                           integrands, tol: float = 1e-10,
                           max_depth: int = 16):
    """Integrate functions f(z, w) along a polyline with w = sqrt(Q0) tracked.

    integrands: list of callables; returns (values, w_end).  Adaptive
    Gauss-Legendre per refined segment, 8 vs 16 nodes as error estimate.
    """
    pts, ws = refine_branch_path(q0, points, w_start)
    totals = [0j] * len(integrands)

    def nodes_eval(za, wa, zb, rule):
        xs, weights = rule
        mid, half = (za + zb) / 2, (zb - za) / 2
        vals = [0j] * len(integrands)
        w = wa
        for x, wt in zip(xs, weights):
            z = mid + half * x
            w = _sqrt_near(q0(z), w)
            for i, f in enumerate(integrands):
                vals[i] += wt * f(z, w)
        return [v * half for v in vals]

    def segment(za, wa, zb, wb, depth):
        coarse = nodes_eval(za, wa, zb, _GL8)
        fine = nodes_eval(za, wa, zb, _GL16)
        err = max(abs(c - f) for c, f in zip(coarse, fine))
        scale = max(max(abs(f) for f in fine), 1.0)
        if err <= tol * scale or depth >= max_depth:
            if err > 10 * tol * scale:
                raise QuadratureError(
                    "quadrature refinement stalled near %s (err %.3g)" % (za, err))
            for i, f in enumerate(fine):
                totals[i] += f
            return
        zm = (za + zb) / 2
        wm = _sqrt_near(q0(zm), wa)
        segment(za, wa, zm, wm, depth + 1)
        segment(zm, wm, zb, wb, depth + 1)

    for (za, wa), (zb, wb) in zip(zip(pts[:-1], ws[:-1]), zip(pts[1:], ws[1:])):
        segment(za, wa, zb, wb, 0)
    return totals, ws[-1]


# ---------------------------------------------------------------------------
# cycles and Voros symbols
# ---------------------------------------------------------------------------

@dataclass
class Cycle:
    """Closed polyline on the base with a designated starting branch.

    ``start_value`` is the sheet value of xi = sqrt(Q0) at polyline[0].
    ``kind`` is one of "pullback", "voros-edge", "tp-loop".
    """

    polyline: np.ndarray
    start_value: complex
    kind: str = "pullback"
    label: str = ""

    def reversed(self) -> "Cycle":
        return Cycle(self.polyline[::-1].copy(), self.start_value,
                     self.kind, self.label + "~rev")


def ellipse_polyline(f1: complex, f2: complex, pad: float = 0.6,
                     n: int = 256) -> np.ndarray:
    """Closed ccw ellipse polyline around the segment [f1, f2]."""
    center = (f1 + f2) / 2
    c = abs(f2 - f1) / 2
    a = c + pad
    b = math.sqrt(a * a - c * c) if a > c else pad
    rot = cmath.exp(1j * cmath.phase(f2 - f1)) if f2 != f1 else 1.0
    ts = np.linspace(0.0, 2 * math.pi, n, endpoint=False)
    pts = center + rot * (a * np.cos(ts) + 1j * b * np.sin(ts))
    return np.concatenate([pts, pts[:1]])


def circle_polyline(center: complex, radius: float, n: int = 128,
                    start_angle: float = 0.0, ccw: bool = True) -> np.ndarray:
    sgn = 1.0 if ccw else -1.0
    ts = start_angle + sgn * np.linspace(0.0, 2 * math.pi, n, endpoint=False)
    pts = center + radius * np.exp(1j * ts)
    return np.concatenate([pts, pts[:1]])


def voros_symbol(wkb: WKBSeries, cycle: Cycle, order: int | None = None,
                 tol: float = 1e-10):
    """Contour integrals of the odd generators around the cycle, per order.

    Returns {m: integral of P_m} for odd hbar orders m = -1, 1, 3, ...
    capped at ``order``; the branch of sqrt(Q0) is continued along the
    cycle starting from the cycle's designated value.
    """
    N = wkb.order if order is None else min(order, wkb.order)
    odd = [(m, el.b) for m, el in p_odd(wkb) if m <= N]
    integrands = [(lambda z, w, b=b: b(z) * w) for _, b in odd]
    vals, w_end = integrate_branch_terms(
        wkb.system.q0, cycle.polyline, cycle.start_value, integrands, tol=tol)
    return {m: v for (m, _), v in zip(odd, vals)}


def nearest_singularity_gap(spectral: SpectralData, v: complex) -> float:
    pts = [tp.z for tp in spectral.turning_points() if abs(tp.z - v) > 1e-12]
    pts += [p for p, _ in spectral.finite_poles()]
    return min((abs(p - v) for p in pts), default=math.inf)


def turning_point_normalization(wkb: WKBSeries, v: complex, z: complex,
                                sheet_value: complex, order: int | None = None,
                                radius: float | None = None,
                                tol: float = 1e-10):
    """Normalized primitives of the odd generators from the turning point v.

    Computed as half the integral over the minimal loop around v based at
    the lift of z (radial approach plus half a circle, branch continued
    throughout), signed so that the result is a primitive of the designated
    branch: d/dz of the order-(-1) value is sheet_value, and for the linear
    potential it reproduces the plain antiderivative from the zero.  Finite
    at every order because the loop keeps away from v.
    """
    spectral = wkb.system.spectral
    gap = nearest_singularity_gap(spectral, v)
    r = radius if radius is not None else 0.5 * min(gap, abs(z - v))
    if not (0 < r < abs(z - v) + 1e-15):
        raise GeometryError("no room for a loop of radius %r around %s" % (r, v))
    if gap <= r:
        raise GeometryError("loop around %s would hit another singularity" % v)
    N = wkb.order if order is None else min(order, wkb.order)
    odd = [(m, el.b) for m, el in p_odd(wkb) if m <= N]
    integrands = [(lambda z_, w_, b=b: b(z_) * w_) for _, b in odd]

    u = (z - v) / abs(z - v)
    entry = v + r * u
    radial = np.array([z, entry])
    vals_in, w_entry = integrate_branch_terms(
        wkb.system.q0, radial, sheet_value, integrands, tol=tol)
    circle = circle_polyline(v, r, n=256, start_angle=cmath.phase(u), ccw=True)
    vals_c, _ = integrate_branch_terms(
        wkb.system.q0, circle, w_entry, integrands, tol=tol)
    out = {}
    for (m, _), vi, vc in zip(odd, vals_in, vals_c):
        out[m] = -(vi + 0.5 * vc)
    return out
