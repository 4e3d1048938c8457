"""Exact rational-function arithmetic and spectral-curve bookkeeping.

Polynomials carry Gaussian-rational coefficients (arbitrary-precision
rational real and imaginary parts) so that symbolic layers are exact; the
numeric boundary is the evaluation call, which returns double-precision
complex numbers.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ContinuationError, DegenerateCurveError, ConfigurationError


# ---------------------------------------------------------------------------
# Gaussian rationals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianRational:
    re: Fraction
    im: Fraction

    @staticmethod
    def of(value) -> "GaussianRational":
        if isinstance(value, GaussianRational):
            return value
        if isinstance(value, complex):
            return GaussianRational(Fraction(value.real), Fraction(value.imag))
        if isinstance(value, (int, Fraction)):
            return GaussianRational(Fraction(value), Fraction(0))
        if isinstance(value, float):
            return GaussianRational(Fraction(value), Fraction(0))
        if isinstance(value, str):
            return GaussianRational(Fraction(value), Fraction(0))
        if isinstance(value, (tuple, list)) and len(value) == 2:
            return GaussianRational(Fraction(value[0]), Fraction(value[1]))
        raise ConfigurationError("cannot coerce %r to a Gaussian rational" % (value,))

    def __add__(self, o):
        o = GaussianRational.of(o)
        return GaussianRational(self.re + o.re, self.im + o.im)

    def __sub__(self, o):
        o = GaussianRational.of(o)
        return GaussianRational(self.re - o.re, self.im - o.im)

    def __neg__(self):
        return GaussianRational(-self.re, -self.im)

    def __mul__(self, o):
        o = GaussianRational.of(o)
        return GaussianRational(self.re * o.re - self.im * o.im,
                                self.re * o.im + self.im * o.re)

    def __truediv__(self, o):
        o = GaussianRational.of(o)
        d = o.re * o.re + o.im * o.im
        if d == 0:
            raise ZeroDivisionError("division by zero Gaussian rational")
        return GaussianRational((self.re * o.re + self.im * o.im) / d,
                                (self.im * o.re - self.re * o.im) / d)

    def is_zero(self) -> bool:
        return self.re == 0 and self.im == 0

    def to_complex(self) -> complex:
        return complex(self.re, self.im)


QQI_ZERO = GaussianRational(Fraction(0), Fraction(0))
QQI_ONE = GaussianRational(Fraction(1), Fraction(0))


# ---------------------------------------------------------------------------
# polynomials over the Gaussian rationals
# ---------------------------------------------------------------------------

class Poly:
    """Dense polynomial, coefficients low degree to high, trailing zeros trimmed."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs):
        cs = [GaussianRational.of(c) for c in coeffs]
        while cs and cs[-1].is_zero():
            cs.pop()
        self.coeffs = tuple(cs)

    @staticmethod
    def const(c) -> "Poly":
        return Poly([c])

    @staticmethod
    def x() -> "Poly":
        return Poly([0, 1])

    def degree(self) -> int:
        return len(self.coeffs) - 1  # -1 for the zero polynomial

    def is_zero(self) -> bool:
        return not self.coeffs

    def __add__(self, o: "Poly") -> "Poly":
        n = max(len(self.coeffs), len(o.coeffs))
        out = [QQI_ZERO] * n
        for i, c in enumerate(self.coeffs):
            out[i] = out[i] + c
        for i, c in enumerate(o.coeffs):
            out[i] = out[i] + c
        return Poly(out)

    def __neg__(self) -> "Poly":
        return Poly([-c for c in self.coeffs])

    def __sub__(self, o: "Poly") -> "Poly":
        return self + (-o)

    def __mul__(self, o: "Poly") -> "Poly":
        if self.is_zero() or o.is_zero():
            return Poly([])
        out = [QQI_ZERO] * (len(self.coeffs) + len(o.coeffs) - 1)
        for i, a in enumerate(self.coeffs):
            if a.is_zero():
                continue
            for j, b in enumerate(o.coeffs):
                out[i + j] = out[i + j] + a * b
        return Poly(out)

    def scale(self, c) -> "Poly":
        c = GaussianRational.of(c)
        return Poly([a * c for a in self.coeffs])

    def divmod(self, o: "Poly"):
        if o.is_zero():
            raise ZeroDivisionError("polynomial division by zero")
        rem = list(self.coeffs)
        dq = len(self.coeffs) - len(o.coeffs)
        if dq < 0:
            return Poly([]), self
        quo = [QQI_ZERO] * (dq + 1)
        lead = o.coeffs[-1]
        for k in range(dq, -1, -1):
            c = rem[k + len(o.coeffs) - 1] / lead
            quo[k] = c
            if not c.is_zero():
                for i, b in enumerate(o.coeffs):
                    rem[k + i] = rem[k + i] - c * b
        return Poly(quo), Poly(rem)

    def __mod__(self, o: "Poly") -> "Poly":
        return self.divmod(o)[1]

    def monic(self) -> "Poly":
        if self.is_zero():
            return self
        lead = self.coeffs[-1]
        return Poly([c / lead for c in self.coeffs])

    def derivative(self) -> "Poly":
        return Poly([c * GaussianRational.of(i)
                     for i, c in enumerate(self.coeffs)][1:])

    def __call__(self, z: complex) -> complex:
        acc = 0j
        for c in reversed(self.coeffs):
            acc = acc * z + c.to_complex()
        return acc

    def __eq__(self, o):
        return isinstance(o, Poly) and self.coeffs == o.coeffs

    def __hash__(self):
        return hash(self.coeffs)

    def __repr__(self):
        return "Poly(%s)" % (
            [(str(c.re) if c.im == 0 else "%s+%si" % (c.re, c.im))
             for c in self.coeffs],)

    def complex_coeffs(self) -> np.ndarray:
        return np.array([c.to_complex() for c in self.coeffs])

    def roots(self) -> np.ndarray:
        """Numeric roots, via the companion matrix."""
        if self.degree() < 1:
            return np.array([], dtype=complex)
        return np.roots(self.complex_coeffs()[::-1])


def poly_gcd(a: Poly, b: Poly) -> Poly:
    while not b.is_zero():
        a, b = b, (a % b).monic() if not (a % b).is_zero() else Poly([])
    return a.monic()


# ---------------------------------------------------------------------------
# rational functions
# ---------------------------------------------------------------------------

class RationalFunction:
    """Reduced fraction of Gaussian-rational polynomials with monic denominator."""

    __slots__ = ("num", "den")

    def __init__(self, num, den=None):
        num = num if isinstance(num, Poly) else Poly(num if isinstance(num, (list, tuple)) else [num])
        den = (den if isinstance(den, Poly)
               else Poly(den if isinstance(den, (list, tuple)) else [den])
               if den is not None else Poly([1]))
        if den.is_zero():
            raise ZeroDivisionError("zero denominator")
        g = poly_gcd(num, den)
        if g.degree() > 0:
            num = num.divmod(g)[0]
            den = den.divmod(g)[0]
        lead = den.coeffs[-1]
        self.num = num.scale(QQI_ONE / lead)
        self.den = den.scale(QQI_ONE / lead)

    @staticmethod
    def const(c) -> "RationalFunction":
        return RationalFunction(Poly([c]))

    @staticmethod
    def zero() -> "RationalFunction":
        return RationalFunction(Poly([]))

    @staticmethod
    def z() -> "RationalFunction":
        return RationalFunction(Poly([0, 1]))

    def is_zero(self) -> bool:
        return self.num.is_zero()

    def __add__(self, o: "RationalFunction") -> "RationalFunction":
        return RationalFunction(self.num * o.den + o.num * self.den,
                                self.den * o.den)

    def __neg__(self) -> "RationalFunction":
        return RationalFunction(-self.num, self.den)

    def __sub__(self, o):
        return self + (-o)

    def __mul__(self, o: "RationalFunction") -> "RationalFunction":
        return RationalFunction(self.num * o.num, self.den * o.den)

    def __truediv__(self, o: "RationalFunction") -> "RationalFunction":
        if o.is_zero():
            raise ZeroDivisionError("division by the zero rational function")
        return RationalFunction(self.num * o.den, self.den * o.num)

    def scale(self, c) -> "RationalFunction":
        return RationalFunction(self.num.scale(c), self.den)

    def derivative(self) -> "RationalFunction":
        return RationalFunction(
            self.num.derivative() * self.den - self.num * self.den.derivative(),
            self.den * self.den)

    def __call__(self, z: complex) -> complex:
        d = self.den(z)
        if d == 0:
            raise ZeroDivisionError("evaluation at a pole")
        return self.num(z) / d

    def __eq__(self, o):
        return (isinstance(o, RationalFunction)
                and self.num == o.num and self.den == o.den)

    def __hash__(self):
        return hash((self.num, self.den))

    def __repr__(self):
        return "RationalFunction(%r / %r)" % (self.num, self.den)

    def order_at(self, p) -> int:
        """Vanishing order at the finite point p (negative at a pole), exact."""
        p = GaussianRational.of(p)
        lin = Poly([GaussianRational(-p.re, -p.im), QQI_ONE])
        ord_ = 0
        num, den = self.num, self.den
        while not num.is_zero() and (num % lin).is_zero():
            num = num.divmod(lin)[0]
            ord_ += 1
        while not den.is_zero() and (den % lin).is_zero():
            den = den.divmod(lin)[0]
            ord_ -= 1
        return ord_

    def order_at_infinity(self) -> int:
        """Order of vanishing at infinity: deg(den) - deg(num)."""
        if self.is_zero():
            return 10 ** 9
        return self.den.degree() - self.num.degree()

    def finite_poles(self):
        """Pole locations and orders, multiplicities from exact square-free parts."""
        out = []
        den = self.den
        mult = 1
        while den.degree() > 0:
            sq = poly_gcd(den, den.derivative())
            simple = den.divmod(sq)[0]  # roots of multiplicity >= mult in self.den
            for r in simple.roots():
                out.append([complex(r), mult])
            den = sq
            mult += 1
        merged: list[list] = []
        for r, m in sorted(out, key=lambda t: (round(t[0].real, 9), round(t[0].imag, 9))):
            if merged and abs(merged[-1][0] - r) < 1e-8:
                merged[-1][1] = max(merged[-1][1], m)
            else:
                merged.append([r, m])
        return [(r, m) for r, m in merged]


def resultant(p_rows, q_rows):
    """Resultant of two polynomials whose coefficients are RationalFunctions.

    Coefficient lists are high degree to low.  Plain fraction-field Gaussian
    elimination on the Sylvester matrix; fine for the small ranks in use.
    """
    m, n = len(p_rows) - 1, len(q_rows) - 1
    size = m + n
    zero = RationalFunction.zero()
    rows = []
    for i in range(n):
        rows.append([zero] * i + list(p_rows) + [zero] * (size - i - m - 1))
    for i in range(m):
        rows.append([zero] * i + list(q_rows) + [zero] * (size - i - n - 1))
    det = RationalFunction.const(1)
    sign = 1
    for col in range(size):
        piv = None
        for r in range(col, size):
            if not rows[r][col].is_zero():
                piv = r
                break
        if piv is None:
            return RationalFunction.zero()
        if piv != col:
            rows[col], rows[piv] = rows[piv], rows[col]
            sign = -sign
        pval = rows[col][col]
        det = det * pval
        for r in range(col + 1, size):
            if rows[r][col].is_zero():
                continue
            f = rows[r][col] / pval
            for c in range(col, size):
                rows[r][c] = rows[r][c] - f * rows[col][c]
    return det.scale(sign)


# ---------------------------------------------------------------------------
# spectral data
# ---------------------------------------------------------------------------

@dataclass
class TurningPoint:
    z: complex
    pair: tuple[int, int] | None  # colliding sheet labels, 1-indexed, sorted
    multiplicity: int             # multiplicity of the discriminant zero
    c2: complex                   # limit of (xi_i - xi_j)^2 / (z - v)


class SpectralData:
    """Characteristic data xi^n + B1 xi^(n-1) + ... + Bn with corrections.

    ``coeffs[i]`` is the list of RationalFunctions giving the hbar-expansion
    of B_(i+1); the order-zero parts cut out the curve being quantized.
    """

    def __init__(self, rank: int, coeffs, hbar: complex):
        if rank < 1:
            raise ConfigurationError(
                "rank must be >= 1 (point-supported data has no characteristic"
                " polynomial in this input form)")
        if hbar == 0:
            raise ConfigurationError("hbar must be nonzero")
        if len(coeffs) != rank:
            raise ConfigurationError("need exactly rank coefficient slots")
        self.rank = rank
        self.coeffs = [list(c) if c else [RationalFunction.zero()] for c in coeffs]
        self.hbar = complex(hbar)
        self._tps: list[TurningPoint] | None = None
        self._disc: RationalFunction | None = None

    # -- structure -------------------------------------------------------

    def leading(self, i: int) -> RationalFunction:
        """Order-zero part of B_i, 1-indexed."""
        return self.coeffs[i - 1][0]

    def correction(self, i: int, order: int) -> RationalFunction:
        parts = self.coeffs[i - 1]
        return parts[order] if order < len(parts) else RationalFunction.zero()

    def with_hbar(self, hbar: complex) -> "SpectralData":
        return SpectralData(self.rank, self.coeffs, hbar)

    def charpoly_at(self, z: complex) -> np.ndarray:
        """Monic coefficient vector [1, B1(z), ..., Bn(z)]."""
        return np.array([1.0 + 0j] + [self.leading(i)(z) for i in range(1, self.rank + 1)])

    def xi_at(self, z: complex) -> np.ndarray:
        """Unordered sheet values at z."""
        if self.rank == 1:
            return np.array([-self.leading(1)(z)])
        return np.roots(self.charpoly_at(z))

    def discriminant(self) -> RationalFunction:
        if self._disc is None:
            if self.rank == 1:
                raise ConfigurationError("rank-1 data has no discriminant in xi")
            p = [RationalFunction.const(1)] + [self.leading(i)
                                               for i in range(1, self.rank + 1)]
            dp = [p[k].scale(self.rank - k) for k in range(self.rank)]
            res = resultant(p, dp)
            self._disc = res  # up to sign, which the zero locus ignores
            if res.is_zero():
                raise DegenerateCurveError("identically vanishing discriminant")
        return self._disc

    # -- singular loci -----------------------------------------------------

    def finite_poles(self):
        """Union of coefficient poles with their maximal orders."""
        acc: list[list] = []
        for i in range(1, self.rank + 1):
            for parts in [self.coeffs[i - 1]]:
                for rf in parts:
                    for p, m in rf.finite_poles():
                        for slot in acc:
                            if abs(slot[0] - p) < 1e-8:
                                slot[1] = max(slot[1], m)
                                break
                        else:
                            acc.append([p, m])
        acc.sort(key=lambda t: (round(t[0].real, 9), round(t[0].imag, 9)))
        return [(p, m) for p, m in acc]

    def quadratic_differential(self) -> RationalFunction:
        """Gauge invariant B1^2/4 - B2 of rank-2 data."""
        if self.rank != 2:
            raise ConfigurationError("quadratic differential needs rank 2")
        b1, b2 = self.leading(1), self.leading(2)
        return b1 * b1.scale(Fraction(1, 4)) - b2

    def turning_points(self) -> list[TurningPoint]:
        """Finite zeros of the discriminant not cancelled by coefficient poles."""
        if self._tps is not None:
            return self._tps
        if self.rank == 1:
            self._tps = []
            return self._tps
        disc = self.discriminant()
        num = disc.num
        if num.degree() < 1:
            self._tps = []
            return self._tps
        pole_pts = [p for p, _ in self.finite_poles()]
        sq = poly_gcd(num, num.derivative())
        roots = list(num.roots())
        clusters: list[list] = []
        for r in sorted(roots, key=lambda t: (t.real, t.imag)):
            for cl in clusters:
                if abs(cl[0] - r) < 1e-7 * max(1.0, abs(r)):
                    cl[1] += 1
                    break
            else:
                clusters.append([complex(r), 1])
        tps = []
        for v, mult in clusters:
            if any(abs(v - p) < 1e-7 * max(1.0, abs(v)) for p in pole_pts):
                continue
            if sq.degree() > 0 and abs(sq(v)) < 1e-6:
                mult = max(mult, 2)
            pair, c2 = self._branch_pair(v)
            tps.append(TurningPoint(z=v, pair=pair, multiplicity=mult, c2=c2))
        tps.sort(key=lambda t: (round(t.z.real, 9), round(t.z.imag, 9)))
        self._tps = tps
        return tps

    def _branch_pair(self, v: complex):
        """Square of the Puiseux slope of the colliding pair near v.

        (xi_i - xi_j)^2 is single valued, so the limit of the quotient by
        (z - v) is branch-free; two radii give a Richardson estimate.  Label
        identification relative to a SheetLabeling happens in the tracer.
        """
        scale = self.geometry_scale()
        eps = 1e-5 * max(scale, abs(v), 1e-9)
        c2_est = []
        for radius in (eps, eps / 2):
            xs = self.xi_at(v + radius)
            n = len(xs)
            best = None
            for a in range(n):
                for b in range(a + 1, n):
                    d = abs(xs[a] - xs[b])
                    if best is None or d < best[0]:
                        best = (d, a, b)
            if best is None:
                return None, 0j
            _, a, b = best
            c2_est.append((xs[a] - xs[b]) ** 2 / radius)
        c2 = 2 * c2_est[1] - c2_est[0]
        return None, c2

    def geometry_scale(self) -> float:
        """Characteristic length: min pairwise distance of singular points."""
        if self._tps is not None:
            pts = [tp.z for tp in self._tps]
        else:
            try:
                pts = [complex(r) for r in self.discriminant().num.roots()]
            except (DegenerateCurveError, ConfigurationError):
                pts = []
        pts = pts + [p for p, _ in self.finite_poles()]
        best = math.inf
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                best = min(best, abs(pts[i] - pts[j]))
        if not math.isfinite(best) or best == 0:
            best = max([abs(p) for p in pts], default=1.0) or 1.0
        return best

    def exclusion_radius(self) -> float:
        """Default turning-point exclusion radius delta_tp."""
        return 1e-3 * self.geometry_scale()


# ---------------------------------------------------------------------------
# sheet labeling and continuation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SheetLabeling:
    """Ordered sheet values at a base point away from branching."""

    base: complex
    values: tuple[complex, ...]

    @staticmethod
    def canonical(s: SpectralData, base: complex) -> "SheetLabeling":
        vals = sorted(s.xi_at(base), key=lambda x: (round(x.real, 12), round(x.imag, 12)))
        lab = SheetLabeling(base, tuple(vals))
        lab.validate()
        return lab

    def validate(self):
        n = len(self.values)
        for i in range(n):
            for j in range(i + 1, n):
                if abs(self.values[i] - self.values[j]) < 1e-12:
                    raise ConfigurationError("labeling base point is branched")


def _match_roots(prev: np.ndarray, new: np.ndarray, margin: float = 3.0):
    """Pair new roots to prev by nearest neighbor, enforcing a drift margin.

    Returns the permutation sigma with new[sigma[k]] continuing prev[k], or
    None when the assignment is ambiguous at the requested margin.
    """
    n = len(prev)
    cost = np.abs(prev[:, None] - new[None, :])
    rows, cols = linear_sum_assignment(cost)
    sigma = np.empty(n, dtype=int)
    sigma[rows] = cols
    drift = cost[rows, cols].max()
    sep = math.inf
    for i in range(n):
        for j in range(n):
            if sigma[i] != j:
                sep = min(sep, cost[i, j])
    if n > 1 and sep < margin * max(drift, 1e-300):
        return None
    return sigma


def continue_values(s: SpectralData, start_values: np.ndarray,
                    path, dtp: float | None = None,
                    max_depth: int = 48) -> np.ndarray:
    """Continue ordered sheet values along a polyline, subdividing adaptively."""
    if dtp is None:
        dtp = s.exclusion_radius()
    try:
        tps = [tp.z for tp in s.turning_points()]
    except DegenerateCurveError:
        tps = []
    current = np.asarray(start_values, dtype=complex)
    pts = list(path)
    for a, b in zip(pts[:-1], pts[1:]):
        for v in tps:
            if _segment_distance(a, b, v) < dtp:
                raise ContinuationError(
                    "continuation path passes within %.3g of turning point %s"
                    % (dtp, v))
        current = _continue_segment(s, current, a, b, 0, max_depth)
    return current


def _continue_segment(s, current, a, b, depth, max_depth):
    new = s.xi_at(b)
    sigma = _match_roots(current, new)
    if sigma is None:
        if depth >= max_depth:
            raise ContinuationError(
                "root matching stayed ambiguous after %d refinements near %s"
                % (max_depth, b))
        mid = (a + b) / 2
        current = _continue_segment(s, current, a, mid, depth + 1, max_depth)
        return _continue_segment(s, current, mid, b, depth + 1, max_depth)
    return new[sigma]


def _segment_distance(a: complex, b: complex, p: complex) -> float:
    d = b - a
    L2 = abs(d) ** 2
    if L2 == 0:
        return abs(p - a)
    t = ((p - a).real * d.real + (p - a).imag * d.imag) / L2
    t = min(1.0, max(0.0, t))
    return abs(a + t * d - p)


def sheets_at(s: SpectralData, labeling: SheetLabeling, z: complex,
              dtp: float | None = None) -> np.ndarray:
    """Sheet values at z ordered consistently with the labeling.

    Continuation runs along the straight segment from the base point; the
    caller reroutes when that segment passes a turning point too closely.
    """
    if s.rank == 1:
        return s.xi_at(z)
    return continue_values(s, np.array(labeling.values), [labeling.base, z], dtp)


def continue_sheets(s: SpectralData, labeling: SheetLabeling, path) -> np.ndarray:
    """Permutation of labels induced by continuation along a closed/open path.

    Returns sigma such that sheet k continues to the value labeled sigma[k]
    at the endpoint (labels via a fresh straight-line labeling there).
    """
    start = sheets_at(s, labeling, path[0])
    end = continue_values(s, start, path)
    ref = (np.array(labeling.values) if abs(path[-1] - labeling.base) < 1e-12
           else sheets_at(s, labeling, path[-1]))
    sigma = _match_roots(end, ref, margin=0.0)
    if sigma is None:
        raise ContinuationError("endpoint matching failed")
    return sigma


# ---------------------------------------------------------------------------
# rank-2 diagnostics
# ---------------------------------------------------------------------------

@dataclass
class GmnReport:
    ok: bool
    reasons: list[str]


def pole_order_at_infinity_qd(q: RationalFunction) -> int:
    """Pole order at infinity of q dz^2 under w = 1/z, dz^2 = w^-4 dw^2."""
    return 4 - q.order_at_infinity()


def check_weakly_gmn(s: SpectralData) -> GmnReport:
    """Pole and branch-point conditions for good rank-2 region structure."""
    if s.rank != 2:
        raise ConfigurationError("weak GMN check applies to rank 2")
    q = s.quadratic_differential()
    reasons = []
    poles = [(p, m) for p, m in q.finite_poles()]
    inf_ord = pole_order_at_infinity_qd(q)
    if inf_ord > 0:
        poles.append((None, inf_ord))
    for p, m in poles:
        if m < 2:
            reasons.append("pole at %s has order %d < 2" % ("infinity" if p is None else p, m))
    if not any(m >= 2 for _, m in poles):
        reasons.append("no pole of order >= 2")
    has_branch = q.num.degree() >= 1 or any(m % 2 == 1 for _, m in poles)
    if not has_branch:
        reasons.append("no branch point")
    return GmnReport(ok=not reasons, reasons=reasons)


@dataclass
class WkbRegularReport:
    ok: bool
    reasons: list[str]


def check_wkb_regular(s: SpectralData) -> WkbRegularReport:
    """Pole-order clauses on the hbar corrections of rank-2 potentials."""
    if s.rank != 2:
        raise ConfigurationError("regularity check applies to rank 2")
    if not s.leading(1).is_zero():
        raise ConfigurationError("regularity check expects B1 = 0 normal form")
    q0 = -s.leading(2)
    reasons = []
    n_orders = len(s.coeffs[1])
    for p, m in q0.finite_poles():
        pg = _snap_gaussian(p)
        if pg is None:
            reasons.append("pole %s is not exactly representable; clause skipped" % p)
            continue
        for i in range(1, n_orders):
            qi = -s.correction(2, i)
            if qi.is_zero():
                continue
            ord_p = -qi.order_at(pg)
            if m >= 3:
                if ord_p >= 1 + m / 2:
                    reasons.append(
                        "order-%d pole at %s: correction %d has pole order %d >= 1 + %d/2"
                        % (m, p, i, ord_p, m))
            elif m == 2:
                if i != 2:
                    if ord_p > 1:
                        reasons.append(
                            "double pole at %s: correction %d must be at most simple"
                            % (p, i))
                else:
                    if ord_p != 2:
                        reasons.append("double pole at %s: second correction must have a double pole" % p)
                    else:
                        lin = Poly([GaussianRational(-pg.re, -pg.im), QQI_ONE])
                        shifted = qi * RationalFunction(lin * lin)
                        lead = shifted(pg.to_complex())
                        if abs(lead + 0.25) > 1e-12:
                            reasons.append(
                                "double pole at %s: second correction leads with %s, not -1/4"
                                % (p, lead))
    return WkbRegularReport(ok=not reasons, reasons=reasons)


def _snap_gaussian(p: complex):
    """Return p as a small-denominator Gaussian rational when it is one."""
    best = None
    for den in (1, 2, 3, 4, 6, 8, 12, 16):
        re = Fraction(round(p.real * den), den)
        im = Fraction(round(p.imag * den), den)
        if abs(complex(re, im) - p) < 1e-9:
            best = GaussianRational(re, im)
            break
    return best
