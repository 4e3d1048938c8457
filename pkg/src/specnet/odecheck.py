"""Independent numerical oracle: direct integration of the rank-2 equation.

Solutions are propagated as (psi, hbar psi'), framings are the recessive
lines deep inside anti-Stokes sectors at a pole, and the cross-ratio of four
framings gives the coordinate the exponentiated cycle integrals must match
asymptotically.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .algfun import SpectralData
from .errors import ConfigurationError, PrecisionError
from .wkb import voros_symbol


@dataclass
class TransferMatrix:
    """2x2 map of (psi, hbar psi') from path start to path end."""

    matrix: np.ndarray
    hbar: complex

    def __matmul__(self, other: "TransferMatrix") -> "TransferMatrix":
        return TransferMatrix(self.matrix @ other.matrix, self.hbar)

    def wronskian_defect(self) -> float:
        return abs(np.linalg.det(self.matrix) - 1.0)


@dataclass
class Framing:
    pole: str
    sector_angle: float
    direction: np.ndarray    # 2-vector at the common comparison point


def _q_of(s: SpectralData):
    if s.rank != 2 or not s.leading(1).is_zero():
        raise ConfigurationError("the oracle expects rank-2 normal form")
    parts = [(-c) for c in s.coeffs[1]]

    def q(z: complex, hbar: complex) -> complex:
        acc = 0j
        for k in reversed(range(len(parts))):
            acc = acc * hbar + parts[k](z)
        return acc

    return q


def integrate_schrodinger(s: SpectralData, path, hbar_value: complex,
                          rtol: float = 1e-12, atol: float = 1e-12) -> TransferMatrix:
    """High-order adaptive transfer matrix along a polyline."""
    q = _q_of(s)
    m = np.eye(2, dtype=complex)
    for a, b in zip(path[:-1], path[1:]):
        a, b = complex(a), complex(b)
        dz = b - a

        def rhs(t, y):
            z = a + t * dz
            qq = q(z, hbar_value)
            psi, dpsi = y[0::2], y[1::2]
            return np.ravel([dz * dpsi / hbar_value,
                             dz * qq * psi / hbar_value], order="F")

        y0 = np.ravel(np.eye(2, dtype=complex), order="F").astype(complex)
        # local frequency |sqrt(Q)|/|hbar| keys the step ceiling
        freq = max(abs(q(a, hbar_value)) ** 0.5, abs(q(b, hbar_value)) ** 0.5)
        max_step = min(1.0, 2.0 * abs(hbar_value) / max(freq * abs(dz), 1e-9))
        sol = solve_ivp(rhs, (0.0, 1.0), y0, method="DOP853",
                        rtol=rtol, atol=atol, max_step=max_step)
        if not sol.success:
            raise PrecisionError("integration failed on segment %s -> %s"
                                 % (a, b))
        step = np.reshape(sol.y[:, -1], (2, 2), order="F")
        m = step @ m
    out = TransferMatrix(matrix=m, hbar=hbar_value)
    # the determinant check is only meaningful while the entries stay small
    # enough that its cancellation error is below the tolerance
    scale = float(np.linalg.norm(m)) ** 2
    if out.wronskian_defect() > 1e-8 * max(1.0, scale * 1e-12):
        raise PrecisionError("Wronskian drifted by %.3g" % out.wronskian_defect())
    return out


def recessive_direction(s: SpectralData, z: complex, toward: complex,
                        hbar_value: complex) -> np.ndarray:
    """Leading-order decaying data at z for motion toward the pole."""
    q = _q_of(s)
    xi = cmath.sqrt(q(z, hbar_value))
    u = toward / abs(toward)
    if (xi * u / hbar_value).real > 0:
        xi = -xi
    v = np.array([1.0, xi], dtype=complex)
    return v / np.linalg.norm(v)


def framing_at_pole(s: SpectralData, sector_angle: float, hbar_value: complex,
                    depth: float = 6.0, anchor_radius: float = 2.5,
                    common_point: complex = 0j,
                    rtol: float = 1e-12) -> Framing:
    """Recessive line at the infinite pole, transported to the common point.

    Integration starts deep in the sector with the decaying leading-order
    data and runs inward; the contamination of the growing solution decays
    along the way, which is what makes the line stable under deepening.
    """
    z_far = depth * cmath.exp(1j * sector_angle)
    z_mid = anchor_radius * cmath.exp(1j * sector_angle)
    seed = recessive_direction(s, z_far, 2 * z_far, hbar_value)
    t = integrate_schrodinger(s, [z_far, z_mid, common_point], hbar_value,
                              rtol=rtol)
    v = t.matrix @ seed
    return Framing(pole="infinity", sector_angle=sector_angle,
                   direction=v / np.linalg.norm(v))


def fg_edge_coordinate(v1, v2, v3, v4) -> complex:
    """Cross-ratio of four framing vectors at one quadrilateral."""
    def d(a, b):
        return a[0] * b[1] - a[1] * b[0]

    den = d(v2, v3) * d(v1, v4)
    if den == 0:
        raise ConfigurationError("degenerate framing pair")
    return (d(v1, v2) * d(v3, v4)) / den


# ---------------------------------------------------------------------------
# the comparison
# ---------------------------------------------------------------------------

@dataclass
class VorosFgRow:
    hbar: complex
    x_fg: complex
    voros_sum: complex
    residual: float


@dataclass
class VorosFgReport:
    rows: list
    order: int
    ratio_band: tuple
    ratios: list
    passed: bool


def compare_voros_fg(s: SpectralData, wkb, cycle, hbar_list,
                     order: int, sector_angles=None,
                     depth: float = 6.0) -> VorosFgReport:
    """Residuals |log(-X_FG) - V^(N)| across an hbar list, with band check.

    The truncated cycle sum V^(N) carries an O(hbar^(N+1)) error, so each
    halving of hbar should shrink the residual by about 2^(N+1); the check
    accepts a factor-4 band around that rate.
    """
    if sector_angles is None:
        sector_angles = [math.pi / 4, 3 * math.pi / 4,
                         5 * math.pi / 4, 7 * math.pi / 4]
    sym = voros_symbol(wkb, cycle, order=order, tol=1e-12)
    rows = []
    for hb in hbar_list:
        framings = [framing_at_pole(s, ang, hb, depth=depth)
                    for ang in sector_angles]
        x = fg_edge_coordinate(*[f.direction for f in framings])
        v = sum(val * hb ** m for m, val in sym.items())
        log_mx = cmath.log(-x)
        resid = _mod_2pi_distance(log_mx, v)
        rows.append(VorosFgRow(hbar=hb, x_fg=x, voros_sum=v, residual=resid))
    ratios = []
    ok = True
    expected = 2.0 ** (order + 1)
    for r1, r2 in zip(rows[:-1], rows[1:]):
        if abs(r2.hbar - r1.hbar / 2) > 1e-12 * abs(r1.hbar):
            continue
        ratio = r1.residual / max(r2.residual, 1e-300)
        ratios.append(ratio)
        if not (expected / 4 <= ratio <= expected * 4):
            ok = False
    monotone = all(a.residual > b.residual for a, b in zip(rows[:-1], rows[1:]))
    return VorosFgReport(rows=rows, order=order,
                         ratio_band=(expected / 4, expected * 4),
                         ratios=ratios, passed=ok and monotone)


def _mod_2pi_distance(a: complex, b: complex) -> float:
    """|a - b| minimized over 2 pi i shifts and the cycle orientation."""
    best = math.inf
    for sgn in (1, -1):
        d = a - sgn * b
        k = round(d.imag / (2 * math.pi))
        best = min(best, abs(d - 2j * math.pi * k))
    return best
