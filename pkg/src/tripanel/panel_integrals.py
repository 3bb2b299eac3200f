"""Closed-form panel integrals of the Laplace layer kernels.

Assembles the radial primitives over a polar decomposition into moments

    I_{a,b} = int_T s1^a s2^b / (s1^2 + s2^2 + c^2)^(3/2) dS     (a + b <= 3)
    J_{a,b} = int_T s1^a s2^b / (s1^2 + s2^2 + c^2)^(1/2) dS     (a + b <= 1)

over the planar triangle T of a normalized frame, then contracts them with
the rotated target normal and a panel polynomial to evaluate

    int_panel K(x, y) p(y) dS,   K(x, y) = (x - y).n(x) / (4 pi |x - y|^3)
    int_panel G(x, y) p(y) dS,   G(x, y) = -1 / (4 pi |x - y|)

exactly (up to roundoff) for flat triangular panels.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DivergentIntegral
from .geometry import PolarDecomposition, decompose_polar, normalize_frame
from .radial_kernels import RadialKind, definite_radial

FOUR_PI = 4.0 * math.pi

# Monomial exponent pairs (a, b) for s1^a s2^b, by total degree.
MONOMIALS = ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2),
             (3, 0), (2, 1), (1, 2), (0, 3))

_K_FIELD = {(0, 0): "i0", (1, 0): "ix", (0, 1): "iy",
            (2, 0): "ixx", (1, 1): "ixy", (0, 2): "iyy",
            (3, 0): "ixxx", (2, 1): "ixxy", (1, 2): "ixyy", (0, 3): "iyyy"}


@dataclass
class MomentSet:
    """Moments of 1/dist^3 (i*) and 1/dist (j*) against s1^a s2^b."""
    i0: float = 0.0
    ix: float = 0.0
    iy: float = 0.0
    ixx: float = 0.0
    iyy: float = 0.0
    ixy: float = 0.0
    ixxx: float = 0.0
    ixxy: float = 0.0
    ixyy: float = 0.0
    iyyy: float = 0.0
    j0: float = 0.0
    jx: float = 0.0
    jy: float = 0.0

    def k_moment(self, a: int, b: int) -> float:
        return getattr(self, _K_FIELD[(a, b)])


def _snap_height(c: float, dec: PolarDecomposition) -> float:
    """Treat sub-roundoff heights as exactly coplanar."""
    rmax = dec.slabs[-1].r_hi
    return 0.0 if abs(c) <= 1e-14 * max(1.0, rmax) else float(c)


def _d(kind, r_lo, r_hi, c, d=0.0):
    return definite_radial(kind, r_lo, r_hi, c, d)


def compute_k_moments(dec: PolarDecomposition, c: float, max_degree: int = 3,
                      min_degree: int = 0) -> MomentSet:
    """Assemble the 1/dist^3 moments of total degree min_degree..max_degree.

    Raises DivergentIntegral when c = 0, the decomposition starts at r = 0
    (target in the triangle's plane, on the closed triangle), and moments
    below degree 2 are requested: those have non-integrable singularities.
    Moments of degree >= 2 stay finite there (integrand ~ r^(a+b-2) dr),
    which is what the on-surface curvature correction integrates.
    """
    if max_degree not in (0, 1, 2, 3):
        raise ValueError(f"max_degree must be in 0..3, got {max_degree}")
    if min_degree not in (0, 1, 2, 3) or min_degree > max_degree:
        raise ValueError(f"min_degree must be in 0..max_degree, got {min_degree}")
    c = _snap_height(c, dec)
    on_triangle = c == 0.0 and dec.slabs[0].r_lo == 0.0
    if on_triangle and min_degree < 2:
        raise DivergentIntegral(
            "1/dist^3 moments below degree 2 diverge for a coplanar "
            "target on the triangle")
    m = MomentSet()
    for slab in dec.slabs:
        r0, r1 = slab.r_lo, slab.r_hi
        if slab.full_circle:
            if min_degree == 0:
                m.i0 += 2.0 * math.pi * _d(RadialKind.R1, r0, r1, c)
            if max_degree >= 2 and min_degree <= 2:
                half = math.pi * _d(RadialKind.R4, r0, r1, c)
                m.ixx += half
                m.iyy += half
            # odd angular moments vanish over the full circle
            continue
        # the bare R1 integral diverges at c = 0 from r = 0; every use
        # below then carries a d = 0 coefficient, so it is never touched
        dR1 = _d(RadialKind.R1, r0, r1, c) if (c != 0.0 or r0 > 0.0) else math.inf
        dR4 = _d(RadialKind.R4, r0, r1, c) if max_degree >= 2 else 0.0
        dJ1 = _d(RadialKind.J1, r0, r1, c) if max_degree >= 3 else 0.0
        for seg in slab.segments:
            if min_degree == 0:
                m.i0 += seg.dphi * dR1
            if max_degree >= 2 and min_degree <= 2:
                m.ixx += 0.5 * seg.dphi * dR4
                m.iyy += 0.5 * seg.dphi * dR4
            for sigma, bnd in ((1.0, seg.end), (-1.0, seg.start)):
                d, phi, sgn = bnd.d, bnd.phi, float(bnd.sign)
                lo = max(r0, d)  # r0 >= d up to merge rounding
                sin_p, cos_p = math.sin(phi), math.cos(phi)
                if min_degree == 0:
                    m.i0 += sigma * sgn * _d(RadialKind.R2, lo, r1, c, d)
                if max_degree < 1:
                    continue
                # R3 diverges only when both c = 0 and the integration
                # reaches r = 0; with d > 0 the lower limit is positive
                dR3 = (_d(RadialKind.R3, lo, r1, c, d)
                       if (c != 0.0 or lo > 0.0) else math.inf)
                if min_degree <= 1:
                    m.ix += sigma * (d * sin_p * dR1 + sgn * cos_p * dR3)
                    m.iy += sigma * (-d * cos_p * dR1 + sgn * sin_p * dR3)
                if max_degree < 2:
                    continue
                sin2, cos2 = math.sin(2.0 * phi), math.cos(2.0 * phi)
                dR5 = _d(RadialKind.R5, lo, r1, c, d)
                edge_part = (0.5 * d * d * sin2 * dR1
                             + 0.5 * sgn * d * cos2 * dR3) if d != 0.0 else 0.0
                m.ixx += sigma * (-0.25 * sin2 * dR4 + 0.5 * sgn * dR5 + edge_part)
                m.iyy += sigma * (0.25 * sin2 * dR4 + 0.5 * sgn * dR5 - edge_part)
                m.ixy += sigma * (-0.5 * sin_p * sin_p * dR4
                                  + ((-0.5 * d * d * cos2 * dR1
                                      + 0.5 * sgn * d * sin2 * dR3)
                                     if d != 0.0 else 0.0))
                if max_degree < 3:
                    continue
                dJ3 = _d(RadialKind.J3, lo, r1, c, d)
                dR6 = _d(RadialKind.R6cubic, lo, r1, c, d)
                # dT integrates Q r^3 / S^3, dU integrates Q^2 r / S^3
                dT = dJ3 - c * c * dR3 if c != 0.0 else dJ3
                if d != 0.0:
                    dU = dJ1 - (c * c + d * d) * dR1
                    fB = (d ** 3 * sin_p ** 3 * dR1
                          + 3.0 * sgn * d * d * sin_p * sin_p * cos_p * dR3
                          + 3.0 * d * sin_p * cos_p * cos_p * dU
                          + sgn * cos_p ** 3 * dR6) / 3.0
                    fBp = (d ** 3 * cos_p ** 3 * dR1
                           - 3.0 * sgn * d * d * cos_p * cos_p * sin_p * dR3
                           + 3.0 * d * cos_p * sin_p * sin_p * dU
                           - sgn * sin_p ** 3 * dR6) / 3.0
                else:
                    fB = sgn * cos_p ** 3 * dR6 / 3.0
                    fBp = -sgn * sin_p ** 3 * dR6 / 3.0
                m.ixxx += sigma * (d * sin_p * dR4 + sgn * cos_p * dT - fB)
                m.ixyy += sigma * fB
                m.ixxy += sigma * (-fBp)
                m.iyyy += sigma * (-d * cos_p * dR4 + sgn * sin_p * dT + fBp)
    return m


def compute_g_moments(dec: PolarDecomposition, c: float) -> tuple[float, float, float]:
    """Assemble the 1/dist moments (j0, jx, jy); finite for any target."""
    c = _snap_height(c, dec)
    j0 = jx = jy = 0.0
    for slab in dec.slabs:
        r0, r1 = slab.r_lo, slab.r_hi
        dJ1 = _d(RadialKind.J1, r0, r1, c)
        if slab.full_circle:
            j0 += 2.0 * math.pi * dJ1
            continue
        for seg in slab.segments:
            j0 += seg.dphi * dJ1
            for sigma, bnd in ((1.0, seg.end), (-1.0, seg.start)):
                d, phi, sgn = bnd.d, bnd.phi, float(bnd.sign)
                lo = max(r0, d)
                sin_p, cos_p = math.sin(phi), math.cos(phi)
                j0 += sigma * sgn * _d(RadialKind.J2, lo, r1, c, d)
                dJ3 = _d(RadialKind.J3, lo, r1, c, d)
                jx += sigma * (d * sin_p * dJ1 + sgn * cos_p * dJ3)
                jy += sigma * (-d * cos_p * dJ1 + sgn * sin_p * dJ3)
    return j0, jx, jy


class PanelPolynomial:
    """Polynomial on a panel, stored as a symmetric barycentric form.

    p(lam) = lam^T C lam with lam the barycentric coordinates of the
    panel's vertices (well-defined since sum(lam) = 1).  The declared
    degree marks the true total degree so frame conversion can zero out
    coefficients that are only roundoff.
    """

    def __init__(self, form, degree: int = 2):
        form = np.asarray(form, dtype=float)
        if form.shape != (3, 3):
            raise ValueError("barycentric form must be 3x3")
        if degree not in (0, 1, 2):
            raise ValueError("degree must be 0, 1 or 2")
        self.form = 0.5 * (form + form.T)
        self.degree = degree

    @classmethod
    def constant(cls, value: float) -> "PanelPolynomial":
        return cls(float(value) * np.ones((3, 3)), degree=0)

    @classmethod
    def linear(cls, vertex_values) -> "PanelPolynomial":
        """Linear interpolant of the three vertex values."""
        w = np.asarray(vertex_values, dtype=float)
        one = np.ones(3)
        return cls(0.5 * (np.outer(w, one) + np.outer(one, w)), degree=1)

    @classmethod
    def quadratic(cls, vertex_values, edge_midpoint_values) -> "PanelPolynomial":
        """Quadratic interpolant of vertex values and edge-midpoint values.

        edge_midpoint_values are at the midpoints of edges (v1,v2), (v2,v3),
        (v3,v1) in that order.
        """
        f = np.asarray(vertex_values, dtype=float)
        g = np.asarray(edge_midpoint_values, dtype=float)
        form = np.diag(f).astype(float)
        for k, (i, j) in enumerate(((0, 1), (1, 2), (2, 0))):
            form[i, j] = form[j, i] = 2.0 * g[k] - 0.5 * (f[i] + f[j])
        return cls(form, degree=2)

    def evaluate(self, lam) -> np.ndarray:
        """Evaluate at barycentric coordinates lam, shape (..., 3)."""
        lam = np.asarray(lam, dtype=float)
        return np.einsum("...i,ij,...j->...", lam, self.form, lam)

    def monomial_coeffs(self, planar_pts) -> dict:
        """Coefficients on s1^a s2^b in a planar frame.

        planar_pts holds the (3, 2) planar vertex positions in the vertex
        order of the barycentric form.  Returns {(a, b): coeff} for all six
        monomials of degree <= 2; entries above the declared degree are
        exactly zero.
        """
        pts = np.asarray(planar_pts, dtype=float)
        mat = np.vstack([pts.T, np.ones(3)])  # maps lam -> (s1, s2, 1)
        aff = np.linalg.inv(mat)              # maps (s1, s2, 1) -> lam
        cp = aff.T @ self.form @ aff
        coeffs = {(0, 0): cp[2, 2], (1, 0): 2.0 * cp[0, 2], (0, 1): 2.0 * cp[1, 2],
                  (2, 0): cp[0, 0], (1, 1): 2.0 * cp[0, 1], (0, 2): cp[1, 1]}
        for (a, b) in coeffs:
            if a + b > self.degree:
                coeffs[(a, b)] = 0.0
        return coeffs


def integrate_k_panel(panel, target, p: PanelPolynomial | None = None) -> float:
    """Closed-form integral of K(x, y) p(y) over a flat triangular panel.

    K(x, y) = (x - y).n(x) / (4 pi |x - y|^3) with n(x) the target normal.
    Raises DivergentIntegral when the target lies in the panel plane on the
    closed triangle; such targets must go through the on-surface path.
    """
    if p is None:
        p = PanelPolynomial.constant(1.0)
    if target.n is None:
        raise ValueError("K-kernel integration needs a target normal")
    frame = normalize_frame(panel, target)
    dec = decompose_polar(frame.planar_triangle)
    c = _snap_height(frame.c, dec)
    if c == 0.0 and dec.slabs[0].r_lo == 0.0:
        raise DivergentIntegral(
            "coplanar target on the panel; use the on-surface (curved) path")
    nu = frame.rotated_target_normal
    coef: dict[tuple[int, int], float] = {}
    for (a, b), qab in p.monomial_coeffs(frame.planar_points).items():
        if qab == 0.0:
            continue
        # numerator (x - y).n(x) = -s1 nu1 - s2 nu2 + c nu3 in the frame
        for key, w in (((a, b), c * nu[2] * qab),
                       ((a + 1, b), -nu[0] * qab),
                       ((a, b + 1), -nu[1] * qab)):
            if w != 0.0:
                coef[key] = coef.get(key, 0.0) + w
    if not coef:
        return 0.0
    deg = max(a + b for a, b in coef)
    m = compute_k_moments(dec, c, max_degree=deg)
    return sum(w * m.k_moment(a, b) for (a, b), w in coef.items()) / FOUR_PI


def integrate_g_panel(panel, target, p: PanelPolynomial | None = None) -> float:
    """Closed-form integral of G(x, y) p(y) = -p(y) / (4 pi |x - y|).

    Valid for any target position, including on the panel; p must have
    degree <= 1.
    """
    if p is None:
        p = PanelPolynomial.constant(1.0)
    if p.degree > 1:
        raise ValueError("G-kernel panel integrals support degree <= 1 only")
    frame = normalize_frame(panel, target)
    dec = decompose_polar(frame.planar_triangle)
    c = _snap_height(frame.c, dec)
    q = p.monomial_coeffs(frame.planar_points)
    j0, jx, jy = compute_g_moments(dec, c)
    return -(q[(0, 0)] * j0 + q[(1, 0)] * jx + q[(0, 1)] * jy) / FOUR_PI
