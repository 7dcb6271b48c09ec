"""Classify where the extremal function is smooth, by contact geometry.

A solved inscribed ellipse is classified by how its trace meets the body
boundary:

* two contacts: smooth of the body's class near the curve when the trace's
  curvature strictly exceeds the boundary's at **at least one** contact;
* three contacts: same conclusion when the margin is strict at **all
  three**;
* contacts lying in the interiors of two parallel straight boundary
  segments (and nowhere else): the extremal function is pluriharmonic near
  the curve;
* four or more contacts, or a whole contact continuum: a known candidate
  for nonsmoothness;
* contacts at boundary corners: the criteria need a twice-differentiable
  boundary and do not apply.

Degenerate (segment) leaves are always regular for the two-point system, so
they are classified smooth when the body is smooth at the endpoints.

The module also provides a finite-difference pluriharmonicity test (the
largest mixed second Wirtinger difference of the evaluated extremal
function) and a parameter-space scan that flags shapes failing the strict
criteria, together with how the flagged fraction decays under grid
refinement.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bodies import ConvexBody
from .errors import EllfolError
from .geometry import (InscribedEllipse, c_from_shape,
                       ellipse_curvature_zeta)
from .leaf import eval_V
from .solver import (CLUSTER_GAP, _body_scale, _contact_clusters, _gap_on,
                     contact_points, solve_extremal)

MARGIN_TOL = 1e-5
FLAT_PROBE = 1e-3  # boundary-parameter probe for segment interiors


@dataclass(frozen=True)
class SmoothnessVerdict:
    case: str  # pluriharmonic | two_contact | three_contact | four_plus |
    #            continuum | inapplicable
    curvature_margins: list
    verdict: str  # smooth_Cr | unresolved | known_nonsmooth_candidate
    notes: str = ""


def _flat_at(body, t):
    """Contact lies in the interior of a straight boundary segment."""
    for s in (t - FLAT_PROBE, t, t + FLAT_PROBE):
        k = body.curvature(s)
        if not np.isfinite(k) or abs(float(k)) > 1e-12:
            return False
    return True


def classify_leaf(body: ConvexBody, E: InscribedEllipse,
                  tol: float = MARGIN_TOL) -> SmoothnessVerdict:
    """Smoothness verdict for the extremal curve of a solved ellipse."""
    report = contact_points(body, E)
    if report.count_class == "continuum":
        return SmoothnessVerdict(
            case="continuum", curvature_margins=[0.0] * len(report.points),
            verdict="known_nonsmooth_candidate",
            notes="trace lies on the boundary")
    kappa_body = []
    for p in report.points:
        kb = float(body.curvature(p.boundary_param))
        if not np.isfinite(kb):
            return SmoothnessVerdict(
                case="inapplicable", curvature_margins=[],
                verdict="unresolved",
                notes="contact at a boundary corner; criteria need a C2 "
                      "boundary")
        kappa_body.append(kb)
    if E.shape.gamma <= 1e-13:
        margins = [np.inf] * len(report.points)
        return SmoothnessVerdict(
            case="two_contact", curvature_margins=margins,
            verdict="smooth_Cr",
            notes="segment leaf; the two-point system is always regular")
    margins = [float(ellipse_curvature_zeta(E, p.ellipse_angle)) - kb
               for p, kb in zip(report.points, kappa_body)]
    if report.count_class == "two":
        if all(_flat_at(body, p.boundary_param) for p in report.points):
            return SmoothnessVerdict(
                case="pluriharmonic", curvature_margins=margins,
                verdict="smooth_Cr",
                notes="contacts interior to two parallel boundary segments")
        verdict = "smooth_Cr" if max(margins) > tol else "unresolved"
        return SmoothnessVerdict(case="two_contact",
                                 curvature_margins=margins, verdict=verdict)
    if report.count_class == "three":
        verdict = "smooth_Cr" if min(margins) > tol else "unresolved"
        return SmoothnessVerdict(case="three_contact",
                                 curvature_margins=margins, verdict=verdict)
    return SmoothnessVerdict(case="four_plus", curvature_margins=margins,
                             verdict="known_nonsmooth_candidate")


def classify_point(body: ConvexBody, z,
                   tol: float = MARGIN_TOL) -> SmoothnessVerdict:
    """Verdict at a point outside the body, via the leaf through it."""
    sol = eval_V(body, z)
    if sol.on_body:
        raise EllfolError("point lies in the body; classification applies "
                          "to the complement", module="smoothness",
                          operation="classify_point")
    return classify_leaf(body, sol.ellipse, tol=tol)


def pluriharmonic_test(body: ConvexBody, z, h: float = 1e-3) -> float:
    """Largest mixed second Wirtinger difference of the evaluated function.

    Near-zero values certify pluriharmonicity numerically; across a corner
    of a maximum of two pluriharmonic pieces the statistic stays bounded
    away from zero as h shrinks.
    """
    z = np.asarray(z, dtype=complex).reshape(2)
    center = eval_V(body, z)

    def V(p):
        return eval_V(body, p, warm=center).value

    e = np.eye(2, dtype=complex)
    out = 0.0
    v0 = center.value
    for j in range(2):
        acc = 0.0
        for step in (h * e[j], 1j * h * e[j]):
            acc += V(z + step) + V(z - step)
        out = max(out, abs(acc - 4.0 * v0) / (4.0 * h * h))
    # mixed term: quarter of (d_x1 d_x2 + d_y1 d_y2) + i (d_x1 d_y2 - d_y1 d_x2)
    def cross(s1, s2):
        return (V(z + s1 + s2) - V(z + s1 - s2)
                - V(z - s1 + s2) + V(z - s1 - s2)) / (4.0 * h * h)

    re = cross(h * e[0], h * e[1]) + cross(1j * h * e[0], 1j * h * e[1])
    im = cross(h * e[0], 1j * h * e[1]) - cross(1j * h * e[0], h * e[1])
    out = max(out, abs(re + 1j * im) / 4.0)
    return float(out)


# ---------------------------------------------------------------------------
# parameter-space scan

@dataclass(frozen=True)
class ScanReport:
    grid_shape: tuple
    flagged: np.ndarray  # boolean grid over (axis-ratio, orientation) cells
    fraction: float
    gammas: np.ndarray
    psis: np.ndarray
    details: dict = field(default_factory=dict)


def _implicit_curvature(body, x, h=1e-6):
    """Boundary curvature at a point from the implicit description."""
    _, g0 = body.implicit_fn(x)
    _, gx = body.implicit_fn(x + np.array([h, 0.0]))
    _, gy = body.implicit_fn(x + np.array([0.0, h]))
    rxx = (gx[0] - g0[0]) / h
    rxy = 0.5 * ((gx[1] - g0[1]) + (gy[0] - g0[0])) / h
    ryy = (gy[1] - g0[1]) / h
    nrm = np.linalg.norm(g0)
    return (rxx * g0[1] ** 2 - 2 * rxy * g0[0] * g0[1] + ryy * g0[0] ** 2) \
        / nrm ** 3


def scan_bad_parameters(body: ConvexBody, grid: int = 64,
                        margin_tol: float = MARGIN_TOL,
                        gamma_min: float = 0.02) -> ScanReport:
    """Flag shape-parameter cells failing the strict smoothness criteria.

    The scan sweeps axis ratio and orientation (orientation rows include
    the circle shape exactly).  A cell is flagged when its extremal has a
    contact continuum, four or more contacts, a three-contact configuration
    with a non-strict curvature margin, or a two-contact configuration with
    both margins non-strict.  Contact detection uses a tolerance that
    scales with the squared cell size, so the flagged set tracks the
    one-parameter families of degenerate shapes as the grid refines.
    """
    if body.implicit_fn is None:
        raise EllfolError("scan needs an implicit body description",
                          module="smoothness", operation="scan_bad_parameters")
    gammas = np.linspace(gamma_min, 1.0, grid)
    psis = np.linspace(0.0, np.pi, grid, endpoint=False)
    cell2 = (gammas[1] - gammas[0]) ** 2 + (psis[1] - psis[0]) ** 2
    scale = _body_scale(body)
    gap_tol = max(2.0 * cell2 * scale, 1e-9 * scale)
    flagged = np.zeros((grid, grid), dtype=bool)
    counts = np.zeros((grid, grid), dtype=int)
    hint = None
    for i, gam in enumerate(gammas):
        for j, psi in enumerate(psis):
            shape = c_from_shape(gam, psi)
            try:
                E = solve_extremal(body, shape, hint=hint)
                hint = E
            except Exception:
                flagged[i, j] = True
                hint = None
                continue
            probe = np.linspace(0.0, 2 * np.pi, 1024, endpoint=False)
            g = _gap_on(body, shape, E.center, E.rho, probe)
            if (g <= gap_tol).mean() >= 0.2:
                flagged[i, j] = True  # contact continuum
                counts[i, j] = -1
                continue
            clusters = _contact_clusters(body, shape, E.center, E.rho,
                                         thresh=gap_tol)
            contacts = [phi for phi, val in clusters if val <= gap_tol]
            counts[i, j] = len(contacts)
            if len(contacts) >= 4:
                flagged[i, j] = True
                continue
            margins = []
            for phi in contacts:
                u = np.array([np.cos(phi), np.sin(phi)])
                theta = _trace_angle_for_normal_local(shape, u)
                pt = E.center + E.rho * (shape.trace_matrix
                                         @ np.array([np.cos(theta),
                                                     np.sin(theta)]))
                kb = _implicit_curvature(body, pt)
                margins.append(float(ellipse_curvature_zeta(E, theta)) - kb)
            if len(contacts) == 3 and min(margins) < margin_tol:
                flagged[i, j] = True
            elif len(contacts) == 2 and max(margins) < margin_tol:
                flagged[i, j] = True
    return ScanReport(grid_shape=(grid, grid), flagged=flagged,
                      fraction=float(flagged.mean()), gammas=gammas,
                      psis=psis, details={"contact_counts": counts})


def _trace_angle_for_normal_local(shape, u):
    M = shape.trace_matrix
    w = u @ M
    theta = np.arctan2(w[1], w[0])
    p = M @ np.array([np.cos(theta), np.sin(theta)])
    return float(theta if p @ u > 0 else theta + np.pi)


def refinement_slope(body: ConvexBody, grids=(64, 128, 256), **kw):
    """Log-log slope of the flagged fraction against cell size.

    A one-parameter family of bad shapes gives fractions proportional to
    the grid spacing, hence slope about 1.
    """
    fractions = []
    for n in grids:
        rep = scan_bad_parameters(body, grid=n, **kw)
        fractions.append(rep.fraction)
    logs = np.log(np.asarray(fractions))
    logn = np.log(np.asarray(grids, dtype=float))
    slope = -np.polyfit(logn, logs, 1)[0]
    return float(slope), fractions
