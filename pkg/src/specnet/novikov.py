"""Arithmetic of truncated Novikov series with real exponents.

A series is a finite sum ``sum_k a_k T^(e_k)`` with 0 <= e_k < W strictly
increasing, where W is the truncation cutoff and the coefficients a_k live in
a pluggable ring: plain complex numbers, or polynomials in a formal parameter
hbar truncated at a declared order.  Square matrices over the series ring are
provided for monodromy bookkeeping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

#: relative tolerance below which two exponents are treated as equal
EXP_MERGE_TOL = 1e-9


def _exps_close(a: float, b: float) -> bool:
    return abs(a - b) <= EXP_MERGE_TOL * max(1.0, abs(a), abs(b))


# ---------------------------------------------------------------------------
# coefficient ring: complex scalars or truncated hbar-polynomials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HbarPoly:
    """Polynomial c0 + c1*hbar + ... truncated at a declared order.

    ``coeffs`` never stores entries beyond ``order`` and has no trailing
    zeros, so the zero element is always the empty tuple.
    """

    coeffs: tuple[complex, ...]
    order: int

    @staticmethod
    def make(coeffs, order: int) -> "HbarPoly":
        cs = [complex(c) for c in coeffs[: order + 1]]
        while cs and cs[-1] == 0:
            cs.pop()
        return HbarPoly(tuple(cs), order)

    def is_zero(self) -> bool:
        return not self.coeffs

    def __add__(self, other: "HbarPoly") -> "HbarPoly":
        n = max(len(self.coeffs), len(other.coeffs))
        cs = [0j] * n
        for i, c in enumerate(self.coeffs):
            cs[i] += c
        for i, c in enumerate(other.coeffs):
            cs[i] += c
        return HbarPoly.make(cs, min(self.order, other.order))

    def __neg__(self) -> "HbarPoly":
        return HbarPoly(tuple(-c for c in self.coeffs), self.order)

    def __mul__(self, other: "HbarPoly") -> "HbarPoly":
        order = min(self.order, other.order)
        cs = [0j] * (order + 1)
        for i, a in enumerate(self.coeffs):
            if i > order:
                break
            for j, b in enumerate(other.coeffs):
                if i + j > order:
                    break
                cs[i + j] += a * b
        return HbarPoly.make(cs, order)

    def evaluate(self, hbar_value: complex) -> complex:
        acc = 0j
        for c in reversed(self.coeffs):
            acc = acc * hbar_value + c
        return acc


Coefficient = complex | HbarPoly


def _as_pair(a: Coefficient, b: Coefficient):
    """Promote mixed operands to a common ring."""
    if isinstance(a, HbarPoly) and not isinstance(b, HbarPoly):
        return a, HbarPoly.make([complex(b)], a.order)
    if isinstance(b, HbarPoly) and not isinstance(a, HbarPoly):
        return HbarPoly.make([complex(a)], b.order), b
    return a, b


def coeff_add(a: Coefficient, b: Coefficient) -> Coefficient:
    a, b = _as_pair(a, b)
    return a + b if isinstance(a, HbarPoly) else complex(a) + complex(b)


def coeff_mul(a: Coefficient, b: Coefficient) -> Coefficient:
    a, b = _as_pair(a, b)
    return a * b if isinstance(a, HbarPoly) else complex(a) * complex(b)


def coeff_neg(a: Coefficient) -> Coefficient:
    return -a if isinstance(a, HbarPoly) else -complex(a)


def coeff_is_zero(a: Coefficient) -> bool:
    return a.is_zero() if isinstance(a, HbarPoly) else complex(a) == 0


def coeff_eval(a: Coefficient, hbar_value: complex) -> complex:
    return a.evaluate(hbar_value) if isinstance(a, HbarPoly) else complex(a)


def coeff_json(a: Coefficient):
    if isinstance(a, HbarPoly):
        return [[c.real, c.imag] for c in a.coeffs]
    a = complex(a)
    return [a.real, a.imag]


# ---------------------------------------------------------------------------
# series
# ---------------------------------------------------------------------------

class NovikovSeries:
    """Finite sum of ``coeff * T^exp`` terms below a shared cutoff W.

    Instances are immutable.  Exponents are kept strictly increasing; terms
    whose exponents agree within EXP_MERGE_TOL are combined on construction.
    """

    __slots__ = ("terms", "cutoff")

    def __init__(self, terms, cutoff: float = math.inf):
        if cutoff <= 0:
            raise ConfigurationError("cutoff must be positive")
        merged: list[list] = []
        for e, c in sorted(terms, key=lambda t: t[0]):
            e = float(e)
            if e < 0:
                raise ConfigurationError("negative Novikov exponent %r" % e)
            if e >= cutoff or coeff_is_zero(c):
                continue
            if merged and _exps_close(merged[-1][0], e):
                merged[-1][1] = coeff_add(merged[-1][1], c)
            else:
                merged.append([e, c])
        object.__setattr__(self, "terms", tuple(
            (e, c) for e, c in merged if not coeff_is_zero(c)))
        object.__setattr__(self, "cutoff", float(cutoff))

    def __setattr__(self, *_):
        raise AttributeError("NovikovSeries is immutable")

    # -- constructors --------------------------------------------------

    @staticmethod
    def zero(cutoff: float = math.inf) -> "NovikovSeries":
        return NovikovSeries((), cutoff)

    @staticmethod
    def monomial(exp: float, coeff: Coefficient = 1.0,
                 cutoff: float = math.inf) -> "NovikovSeries":
        return NovikovSeries([(exp, coeff)], cutoff)

    @staticmethod
    def one(cutoff: float = math.inf) -> "NovikovSeries":
        return NovikovSeries.monomial(0.0, 1.0, cutoff)

    # -- ring structure -------------------------------------------------

    def _check_cutoff(self, other: "NovikovSeries"):
        if self.cutoff != other.cutoff:
            raise ConfigurationError(
                "cutoff mismatch: %r vs %r" % (self.cutoff, other.cutoff))

    def __add__(self, other: "NovikovSeries") -> "NovikovSeries":
        self._check_cutoff(other)
        return NovikovSeries(self.terms + other.terms, self.cutoff)

    def __neg__(self) -> "NovikovSeries":
        return NovikovSeries(
            [(e, coeff_neg(c)) for e, c in self.terms], self.cutoff)

    def __sub__(self, other: "NovikovSeries") -> "NovikovSeries":
        return self + (-other)

    def __mul__(self, other: "NovikovSeries") -> "NovikovSeries":
        self._check_cutoff(other)
        out = []
        for ea, ca in self.terms:
            for eb, cb in other.terms:
                e = ea + eb
                if e >= self.cutoff:
                    break  # other.terms sorted, later exponents only larger
                out.append((e, coeff_mul(ca, cb)))
        return NovikovSeries(out, self.cutoff)

    def scale(self, c: Coefficient) -> "NovikovSeries":
        return NovikovSeries(
            [(e, coeff_mul(ci, c)) for e, ci in self.terms], self.cutoff)

    def shift(self, exp: float) -> "NovikovSeries":
        """Multiply by T^exp."""
        return NovikovSeries(
            [(e + exp, c) for e, c in self.terms], self.cutoff)

    def truncate(self, cutoff: float) -> "NovikovSeries":
        if cutoff > self.cutoff:
            raise ConfigurationError("cannot extend a truncated series")
        return NovikovSeries(self.terms, cutoff)

    def with_cutoff(self, cutoff: float) -> "NovikovSeries":
        """Reinterpret at a different cutoff; terms at or above it drop."""
        return NovikovSeries(self.terms, cutoff)

    def is_zero(self) -> bool:
        return not self.terms

    def __eq__(self, other) -> bool:
        if not isinstance(other, NovikovSeries):
            return NotImplemented
        return self.cutoff == other.cutoff and self.terms == other.terms

    def __hash__(self):
        return hash((self.cutoff, self.terms))

    def __repr__(self):
        if not self.terms:
            body = "0"
        else:
            body = " + ".join("(%r)T^%.6g" % (c, e) for e, c in self.terms)
        w = "inf" if math.isinf(self.cutoff) else "%.6g" % self.cutoff
        return "<NovikovSeries %s mod T^%s>" % (body, w)

    # -- queries ---------------------------------------------------------

    def valuation(self) -> float:
        """Smallest stored exponent; +inf for the zero series."""
        return self.terms[0][0] if self.terms else math.inf

    def leading(self) -> Coefficient:
        if not self.terms:
            raise ValueError("zero series has no leading coefficient")
        return self.terms[0][1]

    def evaluate_at(self, hbar_value: complex = 1.0) -> complex:
        """Substitute T^c -> exp(-c), evaluating hbar-polynomial coefficients."""
        return sum((coeff_eval(c, hbar_value) * math.exp(-e)
                    for e, c in self.terms), 0j)

    def to_json(self):
        return [{"exp": e, "coeff": coeff_json(c)} for e, c in self.terms]

    @staticmethod
    def from_json(data, cutoff: float = math.inf,
                  hbar_order: int | None = None) -> "NovikovSeries":
        terms = []
        for item in data:
            raw = item["coeff"]
            if raw and isinstance(raw[0], (list, tuple)):
                c: Coefficient = HbarPoly.make(
                    [complex(p[0], p[1]) for p in raw],
                    len(raw) - 1 if hbar_order is None else hbar_order)
            else:
                c = complex(raw[0], raw[1])
            terms.append((item["exp"], c))
        return NovikovSeries(terms, cutoff)


def close_to(a: NovikovSeries, b: NovikovSeries, tol: float = 1e-9) -> bool:
    """Term-by-term comparison after aligning exponents within tolerance."""
    diff = a - b.with_cutoff(a.cutoff)
    for _, c in diff.terms:
        if isinstance(c, HbarPoly):
            if any(abs(x) > tol for x in c.coeffs):
                return False
        elif abs(c) > tol:
            return False
    return True


# ---------------------------------------------------------------------------
# matrices
# ---------------------------------------------------------------------------

class NovikovMatrix:
    """Square matrix with NovikovSeries entries sharing one cutoff."""

    __slots__ = ("n", "rows", "cutoff")

    def __init__(self, rows):
        rows = tuple(tuple(row) for row in rows)
        n = len(rows)
        if any(len(r) != n for r in rows):
            raise ConfigurationError("matrix must be square")
        cutoffs = {s.cutoff for r in rows for s in r}
        if len(cutoffs) > 1:
            raise ConfigurationError("entries carry different cutoffs")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cutoff", cutoffs.pop() if cutoffs else math.inf)

    def __setattr__(self, *_):
        raise AttributeError("NovikovMatrix is immutable")

    @staticmethod
    def identity(n: int, cutoff: float = math.inf) -> "NovikovMatrix":
        one, zero = NovikovSeries.one(cutoff), NovikovSeries.zero(cutoff)
        return NovikovMatrix(
            [[one if i == j else zero for j in range(n)] for i in range(n)])

    @staticmethod
    def elementary(n: int, i: int, j: int, series: NovikovSeries,
                   diag: "np.ndarray | None" = None) -> "NovikovMatrix":
        """id + series * E_ij (0-indexed), optionally times a diagonal."""
        m = [[NovikovSeries.zero(series.cutoff) for _ in range(n)]
             for _ in range(n)]
        for k in range(n):
            d = 1.0 if diag is None else diag[k]
            m[k][k] = NovikovSeries.monomial(0.0, d, series.cutoff)
        m[i][j] = m[i][j] + series
        return NovikovMatrix(m)

    @staticmethod
    def diagonal(entries, cutoff: float = math.inf) -> "NovikovMatrix":
        n = len(entries)
        zero = NovikovSeries.zero(cutoff)
        return NovikovMatrix(
            [[NovikovSeries.monomial(0.0, entries[i], cutoff) if i == j
              else zero for j in range(n)] for i in range(n)])

    def __matmul__(self, other: "NovikovMatrix") -> "NovikovMatrix":
        if self.n != other.n:
            raise ConfigurationError("dimension mismatch")
        n = self.n
        out = []
        for i in range(n):
            row = []
            for j in range(n):
                acc = NovikovSeries.zero(self.cutoff)
                for k in range(n):
                    if self.rows[i][k].is_zero() or other.rows[k][j].is_zero():
                        continue
                    acc = acc + self.rows[i][k] * other.rows[k][j]
                row.append(acc)
            out.append(row)
        return NovikovMatrix(out)

    def __sub__(self, other: "NovikovMatrix") -> "NovikovMatrix":
        return NovikovMatrix(
            [[self.rows[i][j] - other.rows[i][j] for j in range(self.n)]
             for i in range(self.n)])

    def __eq__(self, other) -> bool:
        if not isinstance(other, NovikovMatrix):
            return NotImplemented
        return self.rows == other.rows

    def __hash__(self):
        return hash(self.rows)

    def entry(self, i: int, j: int) -> NovikovSeries:
        return self.rows[i][j]

    def evaluate_at(self, hbar_value: complex = 1.0) -> np.ndarray:
        return np.array([[s.evaluate_at(hbar_value) for s in row]
                         for row in self.rows])

    def to_json(self):
        return [[s.to_json() for s in row] for row in self.rows]

    def __repr__(self):
        return "<NovikovMatrix %dx%d mod T^%.6g>" % (self.n, self.n, self.cutoff)


def matrix_deviation(m: NovikovMatrix, w: float | None = None):
    """Nonzero entries of ``m - id`` as (row, col, series), 1-indexed.

    The caller checks consistency by testing all reported valuations
    against a weight; passing ``w`` filters to valuations < w.
    """
    dev = m - NovikovMatrix.identity(m.n, m.cutoff)
    out = []
    for i in range(m.n):
        for j in range(m.n):
            s = dev.rows[i][j]
            if s.is_zero():
                continue
            if w is not None and s.valuation() >= w:
                continue
            out.append((i + 1, j + 1, s))
    return out
