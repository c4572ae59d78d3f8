"""Hyperbola-rectangle support geometry and atom weights for the limit law.

For two-atom laws with p-atoms at alpha, alpha' and q-atoms at beta, beta',
the spectrum of the model concentrates on H intersected with R, where H is
the hyperbola (x - alpha)(x - alpha') = (y - beta)(y - beta') and R is the
closed rectangle spanned by the four corner points alpha + i*beta, ...,
alpha' + i*beta'.  Writing gaps A = alpha' - alpha, B = beta' - beta and
centering z at ((alpha + alpha')/2, (beta + beta')/2), the hyperbola reads
(x')^2 - A^2/4 = (y')^2 - B^2/4, and a point of H lies in R exactly when the
shared level s = (x')^2 - A^2/4 is nonpositive.  That level is the
parameterization used throughout this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import TwoAtomLaw

__all__ = [
    "DegenerateGeometryError",
    "HyperbolaRectangle",
    "BrownAtomWeights",
    "make_geometry",
    "hyperbola_residual",
    "on_hyperbola",
    "in_rectangle",
    "hr_points",
    "dist_to_hr",
    "dist_to_hr_many",
    "atom_weights",
]


class DegenerateGeometryError(ValueError):
    """Raised when a one-atom law is passed where two atoms are required."""


@dataclass(frozen=True)
class HyperbolaRectangle:
    """Center, signed gaps and corners of the support geometry.

    Attributes
    ----------
    center_x, center_y : float
        Midpoints (alpha + alpha')/2 and (beta + beta')/2.
    gap_a, gap_b : float
        Signed gaps alpha' - alpha and beta' - beta; never zero.
    corners : tuple of complex
        The four points alpha + i*beta, alpha + i*beta', alpha' + i*beta,
        alpha' + i*beta', in that fixed order.
    """

    center_x: float
    center_y: float
    gap_a: float
    gap_b: float
    corners: tuple[complex, complex, complex, complex]

    def __post_init__(self) -> None:
        if self.gap_a == 0.0 or self.gap_b == 0.0:
            raise DegenerateGeometryError("gaps must be nonzero; laws must be two-atom")

    @property
    def alpha(self) -> float:
        return self.center_x - 0.5 * self.gap_a

    @property
    def alpha_prime(self) -> float:
        return self.center_x + 0.5 * self.gap_a

    @property
    def beta(self) -> float:
        return self.center_y - 0.5 * self.gap_b

    @property
    def beta_prime(self) -> float:
        return self.center_y + 0.5 * self.gap_b

    @property
    def center(self) -> complex:
        return complex(self.center_x, self.center_y)

    @property
    def scale(self) -> float:
        """Length scale max(|A|, |B|, 1) used by all tolerances."""
        return max(abs(self.gap_a), abs(self.gap_b), 1.0)

    @property
    def re_constant(self) -> float:
        """The constant value (A^2 - B^2)/4 of Re((z - center)^2) on H."""
        return 0.25 * (self.gap_a**2 - self.gap_b**2)

    @property
    def im_halfwidth(self) -> float:
        """The bound |A*B|/2 on |Im((z - center)^2)| over H intersect R."""
        return 0.5 * abs(self.gap_a * self.gap_b)


@dataclass(frozen=True)
class BrownAtomWeights:
    """Atom weights e_ij at the four corners plus the continuous remainder."""

    e00: float
    e01: float
    e10: float
    e11: float
    e_cont: float

    def __post_init__(self) -> None:
        total = self.e00 + self.e01 + self.e10 + self.e11 + self.e_cont
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {total!r}")

    @property
    def corner_weights(self) -> tuple[float, float, float, float]:
        """Weights in the corner order of :class:`HyperbolaRectangle`."""
        return (self.e00, self.e01, self.e10, self.e11)


def make_geometry(p_law: TwoAtomLaw, q_law: TwoAtomLaw) -> HyperbolaRectangle:
    """Build the hyperbola-rectangle geometry from a pair of two-atom laws.

    Raises
    ------
    DegenerateGeometryError
        If either law is one-atom (zero gap or weight 0/1); the constant-p
        and constant-q situations need separate handling by the caller.
    """
    if not p_law.is_two_atom:
        raise DegenerateGeometryError(f"p law is not two-atom: {p_law}")
    if not q_law.is_two_atom:
        raise DegenerateGeometryError(f"q law is not two-atom: {q_law}")
    a0, a1 = p_law.loc, p_law.loc_alt
    b0, b1 = q_law.loc, q_law.loc_alt
    corners = (complex(a0, b0), complex(a0, b1), complex(a1, b0), complex(a1, b1))
    return HyperbolaRectangle(
        center_x=0.5 * (a0 + a1),
        center_y=0.5 * (b0 + b1),
        gap_a=a1 - a0,
        gap_b=b1 - b0,
        corners=corners,
    )


def hyperbola_residual(geom: HyperbolaRectangle, z) -> np.ndarray | float:
    """|(x - alpha)(x - alpha') - (y - beta)(y - beta')|, elementwise."""
    z = np.asarray(z, dtype=np.complex128)
    x, y = z.real, z.imag
    res = np.abs(
        (x - geom.alpha) * (x - geom.alpha_prime) - (y - geom.beta) * (y - geom.beta_prime)
    )
    return res if res.ndim else float(res)


def on_hyperbola(geom: HyperbolaRectangle, z, tol: float = 1e-10):
    """Whether z satisfies the hyperbola equation within tol * scale^2."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    return hyperbola_residual(geom, z) <= tol * geom.scale**2

def in_rectangle(geom: HyperbolaRectangle, z):
    """Whether z lies in the closed rectangle of atom coordinates."""
    z = np.asarray(z, dtype=np.complex128)
    x, y = z.real, z.imag
    xlo, xhi = sorted((geom.alpha, geom.alpha_prime))
    ylo, yhi = sorted((geom.beta, geom.beta_prime))
    ok = (x >= xlo) & (x <= xhi) & (y >= ylo) & (y <= yhi)
    return ok if ok.ndim else bool(ok)


def _level_grid(geom: HyperbolaRectangle, m: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shared-level samples s in [-min(A^2,B^2)/4, 0] with |x'|, |y'| values."""
    a2 = geom.gap_a**2
    b2 = geom.gap_b**2
    s = np.linspace(-0.25 * min(a2, b2), 0.0, m)
    # the subtractions below are exact at the endpoint, so sqrt never sees -0.0-eps
    xp = np.sqrt(0.25 * a2 + s)
    yp = np.sqrt(0.25 * b2 + s)
    return s, xp, yp

_BRANCH_SIGNS = ((1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0))


def hr_points(geom: HyperbolaRectangle, m: int) -> np.ndarray:
    """Dense sampling of H intersect R along the shared-level parameterization.

    Each of the four sign branches (sx, sy) contributes the m points
    center + sx*|x'(s)| + i*sy*|y'(s)| for s uniform in [-min(A^2,B^2)/4, 0],
    endpoints included: s = 0 gives the four rectangle corners and the lower
    endpoint gives the hyperbola vertices (shared points are repeated).  The
    result is the concatenation branch by branch, 4*m points in total, all of
    which satisfy both closed membership conditions.
    """
    if not isinstance(m, int) or m < 2:
        raise ValueError(f"need at least 2 samples per branch, got {m!r}")
    _, xp, yp = _level_grid(geom, m)
    out = np.empty(4 * m, dtype=np.complex128)
    for i, (sx, sy) in enumerate(_BRANCH_SIGNS):
        out[i * m : (i + 1) * m] = (geom.center_x + sx * xp) + 1j * (geom.center_y + sy * yp)
    return out


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_min(f, lo: float, hi: float, iters: int = 80) -> float:
    """Golden-section minimum of f on [lo, hi] with absolute bracket control.

    Library scalar minimizers stop at a sqrt(eps)*|x| relative floor, which
    is ~1e-8 here and too coarse for on-curve distances; a fixed iteration
    count shrinks the bracket below 1e-13 times its width unconditionally.
    """
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return min(fc, fd, f(lo), f(hi))


def _refine_distance(geom: HyperbolaRectangle, z: complex, t_lo: float, t_hi: float) -> float:
    """Minimize |z - w(t)| over a t-interval of the curve, both mirror sides.

    The curve is reparameterized by the coordinate with the smaller gap
    (t = y' when A^2 >= B^2, else t = x'); the other coordinate is
    +-sqrt(c + t^2) with c = |A^2 - B^2|/4 >= 0.  Unlike the level s, this
    parameter has curve speed between 1 and sqrt(2) everywhere, so bracket
    precision eps in t locates the distance to O(eps).
    """
    a2, b2 = geom.gap_a**2, geom.gap_b**2
    c = 0.25 * abs(a2 - b2)
    cx, cy = geom.center_x, geom.center_y
    if a2 >= b2:
        def point(sign: float, t: float) -> complex:
            return complex(cx + sign * math.sqrt(c + t * t), cy + t)
    else:
        def point(sign: float, t: float) -> complex:
            return complex(cx + t, cy + sign * math.sqrt(c + t * t))
    best = math.inf
    for sign in (1.0, -1.0):
        best = min(best, _golden_min(lambda t: abs(z - point(sign, t)), t_lo, t_hi))
    return best


def dist_to_hr_many(geom: HyperbolaRectangle, zs, m: int = 512) -> np.ndarray:
    """Distances from each point of ``zs`` to H intersect R.

    Coarse minimum over ``hr_points(geom, m)`` followed by local refinement
    in the winning branch (see :func:`dist_to_hr`).  Exact zeros from the
    coarse pass are kept as zeros.
    """
    if not isinstance(m, int) or m < 2:
        raise ValueError(f"need at least 2 samples per branch, got {m!r}")
    zs = np.atleast_1d(np.asarray(zs, dtype=np.complex128))
    pts = hr_points(geom, m)
    _, xp, yp = _level_grid(geom, m)
    half = 0.5 * min(abs(geom.gap_a), abs(geom.gap_b))
    a_is_wide = geom.gap_a**2 >= geom.gap_b**2
    # t is the small-gap coordinate of the level samples; |t| grows with s
    t_abs = yp if a_is_wide else xp
    out = np.empty(zs.shape, dtype=np.float64)
    chunk = 2048
    for lo in range(0, zs.size, chunk):
        zc = zs[lo : lo + chunk]
        d = np.abs(zc[:, None] - pts[None, :])
        win = np.argmin(d, axis=1)
        coarse = d[np.arange(zc.size), win]
        for i, (z, j4, dc) in enumerate(zip(zc, win, coarse)):
            if dc == 0.0:
                out[lo + i] = 0.0
                continue
            j = int(j4) % m
            sx, sy = _BRANCH_SIGNS[int(j4) // m]
            tsign = sy if a_is_wide else sx
            jlo, jhi = max(0, j - 3), min(m - 1, j + 3)
            t1, t2 = tsign * float(t_abs[jlo]), tsign * float(t_abs[jhi])
            t_lo, t_hi = min(t1, t2), max(t1, t2)
            if jlo == 0:
                # near the vertex (t ~ 0) the mirror side is adjacent; cover it too
                t_hi = max(abs(t_lo), abs(t_hi))
                t_lo = -t_hi
            t_lo, t_hi = max(t_lo, -half), min(t_hi, half)
            out[lo + i] = min(float(dc), _refine_distance(geom, complex(z), t_lo, t_hi))
    return out


def dist_to_hr(geom: HyperbolaRectangle, z: complex, m: int = 512) -> float:
    """Distance from z to H intersect R.

    The coarse stage takes the minimum of |z - w| over ``hr_points(geom, m)``;
    the winning branch is then refined by a bounded 1-D minimization along
    the curve, tight enough that points on the set return ~0 (below
    1e-10 * scale).  The sampling resolution m only affects how good the
    coarse bracket is; 512 is ample for the geometries at hand.
    """
    return float(dist_to_hr_many(geom, [z], m)[0])


def atom_weights(a: float, b: float) -> BrownAtomWeights:
    """Corner atom weights of the limit law for p-weight a and q-weight b.

    e00 = max(0, a + b - 1) sits at alpha + i*beta, e01 = max(0, a - b) at
    alpha + i*beta', e10 = max(0, b - a) at alpha' + i*beta, e11 =
    max(0, 1 - a - b) at alpha' + i*beta', and e_cont = 1 - sum is the mass
    of the continuous part on H intersect R.  At most two of the four corner
    weights are nonzero, and the five fields always sum to 1 exactly.
    """
    if not 0.0 <= a <= 1.0 or not 0.0 <= b <= 1.0:
        raise ValueError("weights must lie in [0, 1]")
    e00 = max(0.0, a + b - 1.0)
    e01 = max(0.0, a - b)
    e10 = max(0.0, b - a)
    e11 = max(0.0, 1.0 - a - b)
    e_cont = 1.0 - (e00 + e01 + e10 + e11)
    return BrownAtomWeights(e00=e00, e01=e01, e10=e10, e11=e11, e_cont=e_cont)
