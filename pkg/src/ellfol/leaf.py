"""Evaluate the extremal function by locating the foliation leaf through a
point.

For a body K and a point z outside it, there is a complexified inscribed
ellipse (or line) through z on which the extremal function restricts to
log|zeta| of the curve parameter.  Locating that curve means solving

    a(c) + rho(c) * (e(c) * zeta + conj(e(c)) / zeta) = z

for the chart coordinate c and the parameter zeta (|zeta| >= 1), where
(a, rho) come from the inscribed-ellipse solver and e(c) is the chart's
unit coefficient.  The system is four real equations in four real
unknowns; it is solved by a damped Newton iteration whose zeta columns are
analytic and whose c columns are finite differences (the solver map has no
closed form), warm-starting the inscribed-ellipse solves along the way.

Far from the body, the curve looks like z ~ rho*e(c)*zeta, which gives the
initial guess c = z2/z1, zeta = z1/rho.  Points at moderate distance are
reached by continuation along the straight ray from 4z down to z.  If the
iteration fails anywhere, a coarse grid over both shape charts supplies a
restart, with local grid refinement as a second fallback.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bodies import ConvexBody
from .errors import EvalError
from .geometry import (FIRST, SECOND, InscribedEllipse, ShapeParam,
                       ellipse_complex_point, shape_from_c)
from .solver import solve_extremal

FD_STEP = 1e-6
NEWTON_TOL = 1e-12
MAX_ITER = 40
CHART_SWITCH = 2.0
FALLBACK_GRID = 64


@dataclass(frozen=True)
class LeafSolution:
    """Leaf location of a query point: value = log|zeta| with |zeta| >= 1."""

    shape: ShapeParam | None
    zeta: complex
    value: float
    residual: float
    ellipse: InscribedEllipse | None
    on_body: bool = False


def _as_point(z):
    z = np.asarray(z, dtype=complex).reshape(2)
    return z


def _leaf_point(E, zeta):
    b = E.b
    return E.center + b * zeta + np.conj(b) / zeta


def _residual(body, chart, c, zeta, z, hint=None):
    shape = shape_from_c(c, chart)
    E = solve_extremal(body, shape, hint=hint)
    return _leaf_point(E, zeta) - z, E


def _switch_chart(chart, c, zeta):
    phase = c / abs(c)
    return (SECOND if chart == FIRST else FIRST), 1.0 / c, zeta * phase


def _newton(body, z, chart, c, zeta, hint=None, tol_scale=1.0):
    """Damped Newton for the leaf equations; returns (chart, c, zeta, E, res)."""
    tol = NEWTON_TOL * (1.0 + np.linalg.norm(z)) * tol_scale
    R, E = _residual(body, chart, c, zeta, z, hint=hint)
    rnorm = np.linalg.norm(R)
    for _ in range(MAX_ITER):
        if rnorm <= tol:
            return chart, c, zeta, E, rnorm
        if abs(c) > CHART_SWITCH:
            chart, c, zeta = _switch_chart(chart, c, zeta)
            R, E = _residual(body, chart, c, zeta, z, hint=None)
            rnorm = np.linalg.norm(R)
        # analytic zeta block
        dFdz = E.b - np.conj(E.b) / (zeta * zeta)
        # finite-difference c block, warm-started from the current ellipse
        Rre, _ = _residual(body, chart, c + FD_STEP, zeta, z, hint=E)
        Rim, _ = _residual(body, chart, c + 1j * FD_STEP, zeta, z, hint=E)
        J = np.empty((4, 4))
        J[:, 0] = _ri((Rre - R) / FD_STEP)
        J[:, 1] = _ri((Rim - R) / FD_STEP)
        J[:, 2] = _ri(dFdz)
        J[:, 3] = _ri(1j * dFdz)
        rvec = _ri(R)
        try:
            step = np.linalg.solve(J, -rvec)
        except np.linalg.LinAlgError:
            step = np.linalg.solve(J.T @ J + 1e-10 * np.eye(4), -J.T @ rvec)
        lam = 1.0
        for _ in range(30):
            c_t = c + lam * (step[0] + 1j * step[1])
            z_t = zeta + lam * (step[2] + 1j * step[3])
            if abs(z_t) < 1e-6:
                lam *= 0.5
                continue
            try:
                Rt, Et = _residual(body, chart, c_t, z_t, z, hint=E)
            except Exception:
                lam *= 0.5
                continue
            if np.linalg.norm(Rt) < rnorm:
                break
            lam *= 0.5
        else:
            # stagnation at the solver's noise floor is acceptance, not error
            if rnorm <= 1e-9 * (1.0 + np.linalg.norm(z)):
                return chart, c, zeta, E, rnorm
            raise EvalError("line search failed", residual=float(rnorm),
                            module="leaf", operation="eval_V")
        c, zeta, R, E, rnorm = c_t, z_t, Rt, Et, np.linalg.norm(Rt)
    if rnorm <= 1e-8 * (1.0 + np.linalg.norm(z)):
        return chart, c, zeta, E, rnorm
    raise EvalError("leaf iteration did not converge",
                    residual=float(rnorm), module="leaf", operation="eval_V")


def _ri(v):
    return np.array([v[0].real, v[0].imag, v[1].real, v[1].imag])


def _asymptotic_start(body, z):
    z = np.asarray(z, dtype=complex)
    if abs(z[0]) >= abs(z[1]):
        chart, c = FIRST, complex(z[1] / z[0])
    else:
        chart, c = SECOND, complex(z[0] / z[1])
    shape = shape_from_c(c, chart)
    E = solve_extremal(body, shape)
    lead = z[0] if chart == FIRST else z[1]
    zeta = complex(lead / E.rho)
    return chart, c, zeta, E


def _canonical(chart, c, zeta):
    """Map a converged root to the standard sheet (|zeta| >= 1)."""
    if abs(zeta) < 1.0:
        c, zeta = np.conj(c), 1.0 / zeta
    return chart, c, zeta


def eval_V(body: ConvexBody, z, tol: float = 1e-9,
           warm: LeafSolution | None = None) -> LeafSolution:
    """Extremal-function value at z via the leaf through z.

    Points of the body itself (real, inside) return value 0 with the
    on-body flag set.  ``warm`` (a solution at a nearby point) seeds the
    iteration directly, skipping the continuation.  Raises ``EvalError``
    with the best residual if the leaf equations cannot be solved.
    """
    z = _as_point(z)
    if np.abs(z.imag).max() <= 1e-12 and body.contains(z.real, tol=1e-12):
        return LeafSolution(shape=None, zeta=1.0 + 0.0j, value=0.0,
                            residual=0.0, ellipse=None, on_body=True)
    znorm = np.linalg.norm(z)
    best_err = np.inf
    if warm is not None and warm.shape is not None:
        try:
            chart, c, zeta, E, res = _newton(
                body, z, warm.shape.chart, warm.shape.c, complex(warm.zeta),
                hint=warm.ellipse)
            return _package(body, chart, c, zeta, z, res)
        except EvalError:
            pass
    try:
        chart, c, zeta, E = _asymptotic_start(body, z)
        if znorm >= 50.0:
            chart, c, zeta, E, res = _newton(body, z, chart, c, zeta, hint=E)
        else:
            # continuation along the ray t*z, t: 4 -> 1
            for t in np.linspace(4.0, 1.0, 8):
                chart, c, zeta, E, res = _newton(body, t * z, chart, c, zeta,
                                                 hint=E)
        return _package(body, chart, c, zeta, z, res)
    except EvalError as exc:
        best_err = exc.residual if exc.residual is not None else np.inf
    # fallback: coarse grid over both shape charts
    start = _fallback_start(body, z)
    try:
        chart, c, zeta, E, res = _newton(body, z, *start)
        return _package(body, chart, c, zeta, z, res)
    except EvalError as exc:
        err = exc.residual if exc.residual is not None else np.inf
        raise EvalError(
            "leaf location failed from both the asymptotic start and the "
            "fallback grid", residual=float(min(best_err, err)),
            module="leaf", operation="eval_V") from None


def _package(body, chart, c, zeta, z, res):
    chart, c, zeta = _canonical(chart, c, zeta)
    shape = shape_from_c(c, chart)
    E = solve_extremal(body, shape)
    resid = float(np.linalg.norm(_leaf_point(E, zeta) - z))
    value = float(np.log(abs(zeta)))
    if abs(zeta) < 1.0:  # inside-the-circle roundoff
        value = 0.0
        zeta = zeta / abs(zeta)
    return LeafSolution(shape=shape, zeta=complex(zeta), value=value,
                        residual=resid, ellipse=E, on_body=False)


# ---------------------------------------------------------------------------
# shape-chart leaf tables (fallback starts, brute-force oracle, level sets)

def leaf_table(body: ConvexBody, n: int):
    """Solved extremal data on cell-centered n x n grids of both charts.

    Returns a dict with arrays 'c', 'center', 'b' and the chart label per
    grid; cached on the body.
    """
    key = ("leaf_table", n)
    hit = body.cache.get(key)
    if hit is not None:
        return hit
    tables = []
    for chart in (FIRST, SECOND):
        step = 2.0 / n
        axis = -1.0 + step * (np.arange(n) + 0.5)
        cs = (axis[:, None] + 1j * axis[None, :]).ravel()
        centers = np.empty((cs.size, 2))
        coeffs = np.empty((cs.size, 2), dtype=complex)
        hint = None
        for k, cval in enumerate(cs):
            shape = shape_from_c(complex(cval), chart)
            try:
                E = solve_extremal(body, shape, hint=hint)
                hint = E
            except Exception:
                centers[k] = np.nan
                coeffs[k] = np.nan
                hint = None
                continue
            centers[k] = E.center
            coeffs[k] = E.b
        tables.append({"chart": chart, "c": cs, "center": centers,
                       "b": coeffs})
    body.cache[key] = tables
    return tables


def _zeta_candidates(table, z):
    """Per-cell curve parameter and mismatch against the off-chart component.

    Solves the chart component's quadratic exactly, takes the root outside
    the unit circle, and measures the remaining mismatch in the other
    component for the cell's coefficient and its conjugate.
    """
    z = np.asarray(z, dtype=complex)
    b = table["b"]
    a = table["center"]
    lead = 0 if table["chart"] == FIRST else 1
    other = 1 - lead
    rho = np.abs(b[:, lead])
    w = (z[lead] - a[:, lead]) / rho
    disc = np.sqrt(w * w - 4.0)
    r1 = (w + disc) / 2.0
    r2 = (w - disc) / 2.0
    zeta = np.where(np.abs(r1) >= np.abs(r2), r1, r2)
    resid_direct = np.abs(a[:, other] + b[:, other] * zeta
                          + np.conj(b[:, other]) / zeta - z[other])
    resid_conj = np.abs(a[:, other] + np.conj(b[:, other]) * zeta
                        + b[:, other] / zeta - z[other])
    conj = resid_conj < resid_direct
    return zeta, np.where(conj, resid_conj, resid_direct), conj


def _fallback_start(body, z):
    tables = leaf_table(body, FALLBACK_GRID)
    best = None
    for table in tables:
        zeta, resid, conj = _zeta_candidates(table, z)
        resid = np.where(np.isfinite(resid), resid, np.inf)
        k = int(np.argmin(resid))
        if best is None or resid[k] < best[0]:
            cval = np.conj(table["c"][k]) if conj[k] else table["c"][k]
            # the lead coefficient is real, so the conjugate leaf keeps zeta
            best = (float(resid[k]), table["chart"], complex(cval),
                    complex(zeta[k]))
    _, chart, c, zeta = best
    return chart, c, zeta


def eval_V_bruteforce(body: ConvexBody, z, grid: int = 128,
                      full_output: bool = False):
    """Grid-minimum upper bound for the extremal function.

    Scans solved extremal curves over shape-chart grids; among curves
    passing near z (the admissible set), the smallest log|zeta| is
    returned.  Every admissible curve overestimates the true value by at
    most its passage distance times a local gradient bound, which is the
    basis of the reported error bound.
    """
    z = _as_point(z)
    tables = leaf_table(body, grid)
    found = []
    for table in tables:
        zeta, resid, conj = _zeta_candidates(table, z)
        ok = np.isfinite(resid) & (np.abs(zeta) >= 1.0)
        if not ok.any():
            continue
        vals = np.where(ok, np.log(np.maximum(np.abs(zeta), 1.0)), np.inf)
        found.append((table, zeta, resid, vals, ok))
    if not found:
        return (np.inf, np.inf) if full_output else np.inf
    dmin = min(float(np.where(f[4], f[2], np.inf).min()) for f in found)
    accept = max(2.0 * dmin, 1e-9)
    value = np.inf
    spread_vals = []
    grad_est = 0.0
    for table, zeta, resid, vals, ok in found:
        sel = ok & (resid <= accept)
        if not sel.any():
            continue
        vmin = float(vals[sel].min())
        spread_vals.append(vals[sel])
        if vmin < value:
            value = vmin
            k = int(np.argmin(np.where(sel, vals, np.inf)))
            b = table["b"][k]
            zk = zeta[k]
            deriv = b - np.conj(b) / (zk * zk)
            grad_est = 1.0 / max(np.linalg.norm(deriv) * abs(zk), 1e-12)
    if not np.isfinite(value):
        return (np.inf, np.inf) if full_output else np.inf
    spread = float(np.concatenate(spread_vals).max() - value) \
        if spread_vals else 0.0
    err_bound = accept * grad_est + spread
    if full_output:
        return value, err_bound
    return value


def level_set(body: ConvexBody, lam: float, resolution: int = 32):
    """Samples of the boundary of {V < log(lam)}, swept leaf by leaf.

    Returns an array of shape (n_curves, resolution, 2): for each grid
    shape, the points F(lam * e^{i theta}); every sample satisfies
    V = log(lam) exactly by the on-leaf identity.
    """
    if lam <= 1.0:
        raise EvalError("level parameter must exceed 1",
                        module="leaf", operation="level_set")
    tables = leaf_table(body, resolution)
    theta = np.linspace(0.0, 2.0 * np.pi, resolution, endpoint=False)
    zeta = lam * np.exp(1j * theta)
    slices = []
    for table in tables:
        b = table["b"]
        a = table["center"]
        good = np.isfinite(b[:, 0])
        pts = (a[good, None, :] + b[good, None, :] * zeta[None, :, None]
               + np.conj(b[good, None, :]) / zeta[None, :, None])
        slices.append(pts)
    return np.concatenate(slices, axis=0)
