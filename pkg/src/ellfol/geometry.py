"""Shape parameters and inscribed ellipses.

A direction-and-eccentricity class of ellipses is encoded by a single complex
number ``c`` in one of two charts.  In the first chart the leaf coefficient is
``b = rho*(1, c)`` (first component positive real); in the second chart it is
``b = rho*(c, 1)``.  The two charts cover every direction: they are related by
``c -> 1/c``, and the second is used when the first component of ``b`` would be
small relative to the second.

The *reference ellipse* of a shape is the curve

    theta -> M(c) @ (cos theta, sin theta),

where ``M(c)`` has columns ``2*Re(b/rho)`` and ``-2*Im(b/rho)``.  Its singular
value decomposition gives the axis lengths ``alpha >= beta >= 0``, the axis
ratio ``gamma = beta/alpha`` and the orientation ``psi`` of the long axis.
``gamma = 0`` exactly when ``Im c = 0``; such shapes are line segments.

Scaling by ``rho`` and translating to a center ``a`` gives the real trace of
the complexified curve

    F(zeta) = a + b*zeta + conj(b)/zeta,

which restricts to the trace on ``|zeta| = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EllfolError

FIRST = "first"
SECOND = "second"

# first chart handles |c| up to this before a leaf is re-normalized into the
# second chart (|b1| < 0.1 |b2| triggers the switch)
CHART_SWITCH_RATIO = 10.0


def _trace_matrix(chart: str, c: complex) -> np.ndarray:
    """Columns are 2*Re(b/rho), -2*Im(b/rho) for the chart's coefficient."""
    if chart == FIRST:
        return np.array([[2.0, 0.0], [2.0 * c.real, -2.0 * c.imag]])
    return np.array([[2.0 * c.real, -2.0 * c.imag], [2.0, 0.0]])


@dataclass(frozen=True)
class ShapeParam:
    """Eccentricity/orientation of an ellipse class, in a fixed chart.

    gamma is the axis ratio in [0, 1]; psi in [0, pi) orients the long axis;
    alpha, beta are the reference-ellipse semi-axis lengths (alpha >= beta).
    """

    chart: str
    c: complex
    gamma: float
    psi: float
    alpha: float
    beta: float
    # right singular factor of the trace matrix; maps the zeta-frame angle
    # used by F(e^{i theta}) to the axes-frame angle used by curvature
    _vt: np.ndarray = field(repr=False, compare=False, default=None)
    _M: np.ndarray = field(repr=False, compare=False, default=None)

    @property
    def trace_matrix(self) -> np.ndarray:
        return self._M

    @property
    def unit_coefficient(self) -> np.ndarray:
        """Leaf coefficient at rho = 1: (1, c) or (c, 1) by chart."""
        if self.chart == FIRST:
            return np.array([1.0 + 0.0j, self.c])
        return np.array([self.c, 1.0 + 0.0j])

    def axes_angle(self, theta: float | np.ndarray):
        """Map the zeta-frame angle to the axes-frame angle of the trace."""
        ct, st = np.cos(theta), np.sin(theta)
        v = self._vt @ np.stack([ct, st])
        return np.arctan2(v[1], v[0])

    def conjugate(self) -> "ShapeParam":
        """Shape of the conjugate leaf (same real trace)."""
        return shape_from_c(np.conj(self.c), chart=self.chart)


def shape_from_c(c: complex, chart: str = FIRST) -> ShapeParam:
    """Build the shape parameter for coefficient chart coordinate ``c``.

    The axis data comes from the SVD of the 2x2 reference matrix whose
    columns are the real and (negated) imaginary parts of twice the unit
    coefficient; psi is the direction of the left singular vector of the
    larger singular value, normalized into [0, pi).
    """
    c = complex(c)
    if not (np.isfinite(c.real) and np.isfinite(c.imag)):
        raise EllfolError("shape coordinate must be finite",
                          module="geometry", operation="shape_from_c")
    M = _trace_matrix(chart, c)
    U, S, Vt = np.linalg.svd(M)
    psi = float(np.arctan2(U[1, 0], U[0, 0]))
    if psi < 0.0:
        psi += np.pi
        U = U.copy()
        Vt = Vt.copy()
        U[:, 0] *= -1.0
        Vt[0, :] *= -1.0
    if psi >= np.pi:  # guard the wrap at exactly pi
        psi -= np.pi
    alpha, beta = float(S[0]), float(abs(S[1]))
    gamma = beta / alpha if alpha > 0 else 0.0
    return ShapeParam(chart=chart, c=c, gamma=gamma, psi=psi,
                      alpha=alpha, beta=beta, _vt=Vt, _M=M)


def c_from_shape(gamma: float, psi: float) -> ShapeParam:
    """Shape parameter with the given axis ratio and orientation.

    Inverts the SVD construction of :func:`shape_from_c`.  Of the two
    conjugate coordinates producing the same trace, the one with
    ``Im c <= 0`` is returned.  The chart is chosen so the construction
    stays well conditioned for near-vertical segments.
    """
    if not (0.0 <= gamma <= 1.0):
        raise EllfolError("axis ratio must lie in [0, 1]",
                          module="geometry", operation="c_from_shape")
    psi = float(psi) % np.pi
    # first-chart alpha^2 = 4/(cos^2 psi + gamma^2 sin^2 psi); swap charts
    # when that blows up (near-vertical segments)
    denom = np.cos(psi) ** 2 + gamma ** 2 * np.sin(psi) ** 2
    if denom >= 0.01:
        a2 = 4.0 / denom
        re = a2 * (1.0 - gamma ** 2) * np.sin(psi) * np.cos(psi) / 4.0
        im = -gamma * a2 / 4.0
        return shape_from_c(re + 1j * im, chart=FIRST)
    # second chart: same formula for the mirrored angle pi/2 - psi
    psi_m = (np.pi / 2.0 - psi) % np.pi
    denom = np.cos(psi_m) ** 2 + gamma ** 2 * np.sin(psi_m) ** 2
    a2 = 4.0 / denom
    re = a2 * (1.0 - gamma ** 2) * np.sin(psi_m) * np.cos(psi_m) / 4.0
    im = -gamma * a2 / 4.0
    return shape_from_c(re + 1j * im, chart=SECOND)


def shape_from_coefficient(b: np.ndarray) -> tuple[ShapeParam, float, float]:
    """Normalize a leaf coefficient pair into (shape, rho, phase).

    Chooses the chart by the relative size of the components, so the chart
    coordinate stays bounded by roughly the switch ratio.  Returns the
    rotation ``phase`` such that ``b * exp(-i*phase)`` equals
    ``rho * shape.unit_coefficient``.
    """
    b = np.asarray(b, dtype=complex)
    if abs(b[0]) >= 0.1 * abs(b[1]):
        phase = float(np.angle(b[0]))
        rho = abs(b[0])
        c = b[1] / b[0]
        return shape_from_c(c, chart=FIRST), rho, phase
    phase = float(np.angle(b[1]))
    rho = abs(b[1])
    c = b[0] / b[1]
    return shape_from_c(c, chart=SECOND), rho, phase


@dataclass(frozen=True)
class InscribedEllipse:
    """A maximal inscribed ellipse: center, scale and shape, plus the
    complexified-curve coefficient ``b``.

    ``unique`` is False when the optimal center was a segment (bodies with
    parallel boundary segments); the reported center is then its midpoint.
    """

    center: np.ndarray
    rho: float
    shape: ShapeParam
    unique: bool = True

    @property
    def b(self) -> np.ndarray:
        return self.rho * self.shape.unit_coefficient

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))


def ellipse_real_point(E: InscribedEllipse, theta):
    """Point of the real trace at zeta-frame angle ``theta``.

    Equals ``ellipse_complex_point(E, exp(i*theta))``; vectorized over theta.
    """
    theta = np.asarray(theta, dtype=float)
    ct, st = np.cos(theta), np.sin(theta)
    M = E.shape.trace_matrix
    pts = E.rho * np.tensordot(M, np.stack([ct, st]), axes=1)
    return (pts.T + E.center).T if pts.ndim > 1 else pts + E.center


def ellipse_real_tangent(E: InscribedEllipse, theta):
    """Derivative of the trace with respect to the zeta-frame angle."""
    theta = np.asarray(theta, dtype=float)
    ct, st = np.cos(theta), np.sin(theta)
    M = E.shape.trace_matrix
    return E.rho * np.tensordot(M, np.stack([-st, ct]), axes=1)


def ellipse_complex_point(E: InscribedEllipse, zeta):
    """Point ``a + b*zeta + conj(b)/zeta`` of the complexified curve."""
    zeta = np.asarray(zeta, dtype=complex)
    if np.any(zeta == 0):
        raise EllfolError("zeta = 0 is outside the curve's domain",
                          module="geometry", operation="ellipse_complex_point")
    b = E.b
    out = np.multiply.outer(b, zeta) + np.multiply.outer(np.conj(b), 1.0 / zeta)
    return (out.T + E.center).T if out.ndim > 1 else out + E.center


def ellipse_curvature(E: InscribedEllipse, theta):
    """Curvature of the trace at axes-frame angle ``theta``.

    kappa(theta) = alpha*beta / (rho * (beta^2 cos^2 + alpha^2 sin^2)^(3/2)),
    so kappa(0) = kappa(pi) = alpha/(beta^2 rho) at the long-axis endpoints.
    """
    s = E.shape
    if s.gamma <= 0.0:
        raise EllfolError("curvature undefined for a degenerate (segment) shape",
                          module="geometry", operation="ellipse_curvature")
    theta = np.asarray(theta, dtype=float)
    denom = (s.beta ** 2 * np.cos(theta) ** 2 + s.alpha ** 2 * np.sin(theta) ** 2) ** 1.5
    return (s.alpha * s.beta) / (E.rho * denom)


def ellipse_curvature_zeta(E: InscribedEllipse, theta_zeta):
    """Curvature at the trace point ``ellipse_real_point(E, theta_zeta)``."""
    return ellipse_curvature(E, E.shape.axes_angle(theta_zeta))


def ellipse_support(shape: ShapeParam, u) -> float:
    """Support function of the reference trace (center 0, rho 1).

    For the set {M v : |v| <= 1} this is |M^T u|, equal to
    sqrt(alpha^2 (u.e_psi)^2 + beta^2 (u.e_psi_perp)^2) for unit u.
    """
    u = np.asarray(u, dtype=float)
    M = shape.trace_matrix
    return np.linalg.norm(u @ M, axis=-1)
