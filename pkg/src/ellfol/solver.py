"""Maximal inscribed ellipses of a fixed shape, and their boundary contacts.

For a shape ``s`` the inscribed-ellipse problem is the linear program

    maximize   rho
    subject to a.u + rho * h_s(u) <= h_K(u)   for every unit direction u,

in the variables (a, rho), where h_s is the support function of the
reference trace and h_K that of the body.  The semi-infinite constraint
family is handled by an exchange method: solve on a finite direction set
(256 to start), locate the worst violated directions of the continuum by a
4096-direction probe sweep with parabolic refinement of the local maxima,
add those as cuts and repeat until the worst violation is at rounding
level.  Polyhedral bodies skip the exchange: containment in an
intersection of halfspaces is equivalent to the finitely many facet
constraints, so one exact solve suffices.

Degenerate shapes (segments) are solved by maximizing the chord length
over the offset of the chord line; the linear program has no width in that
limit.

Bodies whose boundary contains parallel segments can have a whole segment
of optimal centers.  The reported center is then the midpoint of the
optimal set (computed by bounding the optimal face in both coordinate
directions) and the result is flagged non-unique.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, linprog, minimize_scalar

from .bodies import ConvexBody
from .errors import SolverError
from .geometry import (InscribedEllipse, ShapeParam, ellipse_real_point,
                       ellipse_real_tangent, ellipse_support)

_TWO_PI = 2.0 * np.pi

N_INITIAL = 256
N_PROBE = 4096
VIOLATION_TOL = 1e-10
DEGENERATE_GAMMA = 1e-13
CENTER_UNIQUE_TOL = 1e-6


def _dirs(phi):
    return np.stack([np.cos(phi), np.sin(phi)], axis=-1)


_LP_OPTIONS = {"primal_feasibility_tolerance": 1e-9,
               "dual_feasibility_tolerance": 1e-9}


def _solve_lp(A, b):
    res = linprog(c=[0.0, 0.0, -1.0], A_ub=A, b_ub=b,
                  bounds=[(None, None), (None, None), (0.0, None)],
                  method="highs", options=_LP_OPTIONS)
    if not res.success:
        raise SolverError(f"inscribed-ellipse linear program failed: {res.message}",
                          module="solver", operation="solve_extremal")
    return res.x[:2], float(res.x[2])


def _violation_on(body, shape, a, rho, U, hK=None):
    if hK is None:
        hK = np.atleast_1d(body.support(U))
    return U @ a + rho * ellipse_support(shape, U) - hK


def _parabolic_peaks(phi, g, top=8):
    """Refined angular positions of the local maxima of a periodic sample."""
    left, right = np.roll(g, 1), np.roll(g, -1)
    cand = np.nonzero((g >= left) & (g >= right))[0]
    if len(cand) == 0:
        cand = np.array([int(np.argmax(g))])
    cand = cand[np.argsort(g[cand])[::-1][:top]]
    h = phi[1] - phi[0]
    denom = g[cand - 1] - 2.0 * g[cand] + g[(cand + 1) % len(g)]
    safe = np.where(np.abs(denom) > 0, denom, 1.0)
    off = np.where(np.abs(denom) > 0,
                   0.5 * (g[cand - 1] - g[(cand + 1) % len(g)]) / safe, 0.0)
    off = np.clip(off, -1.0, 1.0)
    return (phi[cand] + off * h) % _TWO_PI


def _center_extent(body, shape, U, hK, rho):
    """Bounding box of the optimal-center face at scale rho (slightly shrunk)."""
    hE = ellipse_support(shape, U)
    b_ub = hK - (rho - 1e-11) * hE
    lo, hi = np.empty(2), np.empty(2)
    for j in range(2):
        for sign, dest in ((1.0, hi), (-1.0, lo)):
            cvec = np.zeros(2)
            cvec[j] = -sign
            res = linprog(c=cvec, A_ub=U, b_ub=b_ub,
                          bounds=[(None, None)] * 2, method="highs")
            if not res.success:
                raise SolverError("center-extent linear program failed",
                                  module="solver", operation="solve_extremal")
            dest[j] = res.x[j]
    return lo, hi


def _finish(body, shape, a, rho, U, hK):
    unique = True
    if not body.strictly_convex:
        lo, hi = _center_extent(body, shape, U, hK, rho)
        a = 0.5 * (lo + hi)
        unique = bool((hi - lo).max() <= CENTER_UNIQUE_TOL)
    return InscribedEllipse(center=a, rho=rho, shape=shape, unique=unique)


def _solve_polyhedral(body, shape):
    N, h = body.facets
    hE = ellipse_support(shape, N)
    a, rho = _solve_lp(np.column_stack([N, hE]), h)
    return _finish(body, shape, a, rho, N, h)


def _gap_on(body, shape, a, rho, phi):
    """h_K(u) - a.u - rho*h_E(u) at direction angles phi (>= 0 iff inscribed)."""
    U = _dirs(np.atleast_1d(phi))
    return (np.atleast_1d(body.support(U)) - U @ a
            - rho * ellipse_support(shape, U))


def _refine_gap_min(body, shape, a, rho, phi0, window):
    r = minimize_scalar(
        lambda p: float(_gap_on(body, shape, a, rho, p)[0]),
        bounds=(phi0 - window, phi0 + window), method="bounded",
        options={"xatol": 1e-14})
    return float(r.x), float(r.fun)


def _contact_clusters(body, shape, a, rho, thresh, min_sep=4e-3):
    """(angle, gap) for each local minimum of the gap curve below thresh.

    Minima are refined by parabolic interpolation of the probe samples;
    good to a few parts in 1e-11 of the body scale, which the contact
    polish then sharpens.
    """
    probe = np.linspace(0.0, _TWO_PI, N_PROBE, endpoint=False)
    g = _gap_on(body, shape, a, rho, probe)
    left, right = np.roll(g, 1), np.roll(g, -1)
    idx = np.nonzero((g <= left) & (g <= right) & (g < thresh))[0]
    if len(idx) == 0:
        idx = np.array([int(np.argmin(g))])
    h = probe[1] - probe[0]
    gm, g0, gp = g[idx - 1], g[idx], g[(idx + 1) % len(g)]
    denom = gm - 2.0 * g0 + gp
    safe = np.where(np.abs(denom) > 0, denom, 1.0)
    off = np.where(np.abs(denom) > 0, np.clip(0.5 * (gm - gp) / safe, -1, 1), 0.0)
    angles = (probe[idx] + off * h) % _TWO_PI
    vals = g0 - 0.125 * (gm - gp) * off
    out = []
    for phi, val in sorted(zip(angles, vals), key=lambda t: t[1]):
        if all(min(abs(phi - p), _TWO_PI - abs(phi - p)) > min_sep
               for p, _ in out):
            out.append((float(phi), float(val)))
    return out[:6]


def _flat_angles(body):
    if body.flat_normals is None:
        return np.empty(0)
    return np.arctan2(body.flat_normals[:, 1], body.flat_normals[:, 0]) % _TWO_PI


LOCK_ANGLE_TOL = 1e-3


def _body_scale(body):
    s = body.cache.get("scale")
    if s is None:
        probe = np.linspace(0.0, _TWO_PI, 256, endpoint=False)
        s = float(np.abs(np.atleast_1d(body.support(_dirs(probe)))).max())
        body.cache["scale"] = s
    return s


def _solve_exchange(body, shape):
    """Coarse LP stage; returns (a, rho) ready for the contact polish."""
    phi_cuts = np.linspace(0.0, _TWO_PI, N_INITIAL, endpoint=False)
    flats = _flat_angles(body)
    if len(flats):
        phi_cuts = np.concatenate([phi_cuts, flats])
    probe = np.linspace(0.0, _TWO_PI, N_PROBE, endpoint=False)
    U_probe = _dirs(probe)
    hK_probe = np.atleast_1d(body.support(U_probe))
    scale = float(np.abs(hK_probe).max())
    a, rho, worst = np.zeros(2), 0.0, np.inf
    for _ in range(10):
        U = _dirs(phi_cuts)
        hK = np.atleast_1d(body.support(U))
        a, rho = _solve_lp(np.column_stack([U, ellipse_support(shape, U)]), hK)
        g = _violation_on(body, shape, a, rho, U_probe, hK_probe)
        peaks = _parabolic_peaks(probe, g)
        gp = _violation_on(body, shape, a, rho, _dirs(peaks))
        worst = float(max(g.max(), gp.max()))
        if worst <= 3e-5 * scale:
            return a, rho
        phi_cuts = np.concatenate([phi_cuts, peaks[gp > 0.0]])
    raise SolverError("cutting-plane stage did not reach polish accuracy",
                      violation=worst, module="solver",
                      operation="solve_extremal")


# ---------------------------------------------------------------------------
# degenerate shapes: longest chord in a fixed direction

def _ray_boundary_hit(body, p, v):
    """Distance along p + t v to the boundary, t >= 0, exact root solve."""
    if body.facets is not None:
        N, h = body.facets
        num = h - N @ p
        den = N @ v
        pos = den > 1e-14
        if not np.any(pos):
            raise SolverError("unbounded chord direction", module="solver",
                              operation="solve_extremal")
        return float((num[pos] / den[pos]).min())
    # smooth boundary: roots of cross(x(tau) - p, v) along the parametrization
    tau = np.linspace(0.0, _TWO_PI, 512, endpoint=False)
    X = body.boundary(tau)
    f = (X[:, 0] - p[0]) * v[1] - (X[:, 1] - p[1]) * v[0]
    hits = []
    for k in np.nonzero(np.sign(f) != np.sign(np.roll(f, -1)))[0]:
        t0, t1 = tau[k], tau[k] + (tau[1] - tau[0])

        def fn(s):
            x = body.boundary(s)
            return (x[0] - p[0]) * v[1] - (x[1] - p[1]) * v[0]

        root = brentq(fn, t0, t1, xtol=1e-15)
        x = body.boundary(root)
        t = (x - p) @ v
        if t >= -1e-12:
            hits.append(t)
    if not hits:
        raise SolverError("chord does not meet the boundary", module="solver",
                          operation="solve_extremal")
    return float(max(hits))


def _solve_degenerate(body, shape):
    """Longest chord in the segment direction; midpoint rule on plateaus."""
    v = np.array([np.cos(shape.psi), np.sin(shape.psi)])
    nvec = np.array([-v[1], v[0]])
    s_lo = -float(body.support(-nvec))
    s_hi = float(body.support(nvec))
    pad = 1e-9 * (s_hi - s_lo)

    def chord(s):
        p = s * nvec
        tp = _ray_boundary_hit(body, p, v)
        tm = _ray_boundary_hit(body, p, -v)
        return tp + tm, tp, tm

    r = minimize_scalar(lambda s: -chord(s)[0],
                        bounds=(s_lo + pad, s_hi - pad),
                        method="bounded", options={"xatol": 1e-12})
    s_best, best_len = float(r.x), -float(r.fun)
    unique = True
    if not body.strictly_convex:
        # plateau of maximizing offsets -> parallel boundary segments
        grid = np.linspace(s_lo + pad, s_hi - pad, 65)
        lens = np.array([chord(s)[0] for s in grid])
        flat = np.abs(lens - best_len) <= 1e-9 * max(1.0, best_len)
        if flat.sum() > 1:
            run = np.nonzero(flat)[0]
            lo_edge = _plateau_edge(chord, best_len, grid, run[0], -1,
                                    s_lo + pad)
            hi_edge = _plateau_edge(chord, best_len, grid, run[-1], +1,
                                    s_hi - pad)
            if hi_edge - lo_edge > CENTER_UNIQUE_TOL * max(1.0, s_hi - s_lo):
                unique = False
            s_best = 0.5 * (lo_edge + hi_edge)
    length, tp, tm = chord(s_best)
    center = s_best * nvec + 0.5 * (tp - tm) * v
    # the reference trace has half-length alpha, so rho = (length/2) / alpha
    rho = 0.5 * length / shape.alpha
    return InscribedEllipse(center=center, rho=rho, shape=shape, unique=unique)


def _plateau_edge(chord, best_len, grid, idx, direction, bound):
    """Bisect for the offset where the chord drops below the plateau."""
    inside = grid[idx]
    outside = bound if (idx + direction < 0 or idx + direction >= len(grid)) \
        else grid[idx + direction]
    target = best_len - 1e-8 * max(1.0, best_len)
    if chord(outside)[0] >= target:
        return outside
    for _ in range(60):
        mid = 0.5 * (inside + outside)
        if chord(mid)[0] >= target:
            inside = mid
        else:
            outside = mid
    return 0.5 * (inside + outside)


def _trace_angle_for_normal(shape, u):
    """Trace angle whose outward normal is parallel to (and aligned with) u."""
    M = shape.trace_matrix
    w = u @ M
    theta = np.arctan2(w[1], w[0])
    p = M @ np.array([np.cos(theta), np.sin(theta)])
    return theta if p @ u > 0 else theta + np.pi


def _polish_free(body, shape, a, rho, angles0, locked, scale):
    """Newton on the contact system in implicit form.

    Each free contact at trace angle theta contributes two equations:
    the trace point lies on the boundary, r(x(theta)) = 0, and the trace
    is tangent there, grad r . x'(theta) = 0.  A contact locked on a
    support-function kink contributes the tangency equation
    h_K(n) - a.n - rho*h_E(n) = 0 instead (its touch point along the
    straight segment is not determined).  With exactly two contacts the
    closing equation makes the tangent lines parallel.  The system is
    regular exactly when the trace and boundary curvatures differ at the
    contacts, and stays well conditioned at boundary points of vanishing
    curvature.
    """
    if body.implicit_fn is None:
        raise SolverError("body has no implicit description to polish against",
                          module="solver", operation="solve_extremal")
    M = shape.trace_matrix
    k = len(angles0)
    free_idx = [i for i, L in enumerate(locked) if not L]
    add_parallel = (k == 2 and len(free_idx) >= 1)
    thetas0 = [_trace_angle_for_normal(shape, _dirs(np.array([phi]))[0])
               if not L else phi
               for phi, L in zip(angles0, locked)]
    x = np.concatenate([a, [rho], [thetas0[i] for i in free_idx]])
    n_unknown = x.size

    locked_rows = []
    for phi, L in zip(angles0, locked):
        if L:
            n = _dirs(np.array([phi]))[0]
            locked_rows.append((n, float(body.support(n)),
                                float(ellipse_support(shape, n))))

    def tangent(theta):
        return M @ np.array([-np.sin(theta), np.cos(theta)])

    def residuals(x):
        a_, rho_ = x[:2], x[2]
        R = []
        thetas = []
        j = 3
        for i, (phi, L) in enumerate(zip(angles0, locked)):
            if L:
                thetas.append(phi)
            else:
                thetas.append(x[j])
                j += 1
        li = 0
        for i, L in enumerate(locked):
            if L:
                n, hK, hE = locked_rows[li]
                li += 1
                R.append(hK - a_ @ n - rho_ * hE)
            else:
                th = thetas[i]
                pt = a_ + rho_ * (M @ np.array([np.cos(th), np.sin(th)]))
                val, grad = body.implicit_fn(pt)
                R.append(val)
                R.append(grad @ tangent(th))
        if add_parallel:
            t1 = tangent(thetas[0]) if not locked[0] else \
                np.array([-np.sin(angles0[0] + np.pi / 2),
                          np.cos(angles0[0] + np.pi / 2)])
            t2 = tangent(thetas[1]) if not locked[1] else \
                np.array([-np.sin(angles0[1] + np.pi / 2),
                          np.cos(angles0[1] + np.pi / 2)])
            R.append(t1[0] * t2[1] - t1[1] * t2[0])
        return np.asarray(R)

    R = residuals(x)
    h_fd = 1e-7
    for _ in range(40):
        if np.linalg.norm(R) <= 3e-14 * max(1.0, scale):
            break
        J = np.empty((R.size, n_unknown))
        for j in range(n_unknown):
            xp = x.copy()
            xp[j] += h_fd
            J[:, j] = (residuals(xp) - R) / h_fd
        try:
            if J.shape[0] == J.shape[1]:
                step = np.linalg.solve(J, -R)
            else:
                step, *_ = np.linalg.lstsq(J, -R, rcond=None)
        except np.linalg.LinAlgError:
            step = np.linalg.solve(J.T @ J + 1e-12 * np.eye(n_unknown),
                                   -J.T @ R)
        # the linear-program stage already lands close; a step cap keeps the
        # iteration from wandering into a smaller tangency basin
        cap = 0.05 * max(1.0, scale)
        nrm = np.linalg.norm(step[:3])
        if nrm > cap:
            step = step * (cap / nrm)
        base = np.linalg.norm(R)
        lam = 1.0
        for _ in range(25):
            Rt = residuals(x + lam * step)
            if np.linalg.norm(Rt) <= base * (1.0 - 1e-4 * lam) or lam < 1e-8:
                break
            lam *= 0.5
        if np.linalg.norm(Rt) >= base and base > 1e-13 * max(1.0, scale):
            raise SolverError("contact polish stagnated",
                              violation=float(base), module="solver",
                              operation="solve_extremal")
        x = x + lam * step
        R = Rt
    else:
        raise SolverError("contact polish did not converge",
                          violation=float(np.linalg.norm(R)),
                          module="solver", operation="solve_extremal")
    a_out, rho_out = x[:2].copy(), float(x[2])
    normals = []
    j = 3
    for i, (phi, L) in enumerate(zip(angles0, locked)):
        if L:
            normals.append(phi % _TWO_PI)
        else:
            th = x[j]
            j += 1
            tv = tangent(th)
            nv = np.array([tv[1], -tv[0]])
            pt = a_out + rho_out * (M @ np.array([np.cos(th), np.sin(th)]))
            if nv @ (pt - a_out) < 0:
                nv = -nv
            normals.append(float(np.arctan2(nv[1], nv[0])) % _TWO_PI)
    return a_out, rho_out, normals


def _slide_interval(body, shape, a, rho, direction, locked_angles, scale):
    """Range of center offsets along ``direction`` keeping the trace inside.

    Away from the locked flat contacts, the deepest intrusion of the trace
    into the complement is tracked through the body's implicit function,
    refined in the trace angle; its sign change in the offset marks the
    edge of the slide.
    """
    M = shape.trace_matrix
    theta = np.linspace(0.0, _TWO_PI, 512, endpoint=False)
    keep = np.ones_like(theta, dtype=bool)
    for phi in locked_angles:
        n = _dirs(np.array([phi]))[0]
        th_flat = _trace_angle_for_normal(shape, n)
        d = np.abs((theta - th_flat + np.pi) % _TWO_PI - np.pi)
        keep &= d > 0.15
    theta = theta[keep]
    circ = np.stack([np.cos(theta), np.sin(theta)])

    def worst_excess(s):
        pts = (a + s * direction)[:, None] + rho * (M @ circ)
        vals = body.implicit_fn(pts)[0]
        k = int(np.argmax(vals))

        def neg(th):
            p = a + s * direction + rho * (M @ np.array([np.cos(th),
                                                         np.sin(th)]))
            return -body.implicit_fn(p)[0]

        r = minimize_scalar(neg, bounds=(theta[k] - 0.02, theta[k] + 0.02),
                            method="bounded", options={"xatol": 1e-12})
        return max(float(vals[k]), -float(r.fun))

    span = 2.0 * scale
    coarse = np.linspace(-span, span, 33)
    vals = np.array([worst_excess(s) for s in coarse])
    k = int(np.argmin(vals))
    if vals[k] > 0:
        raise SolverError("trace does not fit between the parallel segments",
                          module="solver", operation="solve_extremal")
    s0 = float(coarse[k])
    edges = []
    for bound in (span, -span):
        if worst_excess(bound) < 0:
            edges.append(bound)
            continue
        edges.append(brentq(worst_excess, s0, bound, xtol=1e-14))
    return min(edges), max(edges)


def _snap_to_flat(phi, flats, snap=8e-3):
    """Snap a cluster angle onto a support-function kink it sits next to.

    Parabolic refinement is biased at kink minima (the gap curve is not
    smooth there), so nearby clusters are moved onto the kink exactly.
    """
    if len(flats) == 0:
        return phi
    d = np.abs((phi - flats + np.pi) % _TWO_PI - np.pi)
    k = int(np.argmin(d))
    return float(flats[k]) if d[k] < snap else phi


def _locked_pair(angles, locked):
    """Indices of two locked contacts with antiparallel normals, if any."""
    idx = [i for i, L in enumerate(locked) if L]
    for i in idx:
        for j in idx:
            if i < j and abs(abs((angles[i] - angles[j] + np.pi) % _TWO_PI
                                 - np.pi) - np.pi) < 1e-6:
                return i, j
    return None


def _solve_between_flats(body, shape, pair_angle, scale):
    """Exact solve when the trace is wedged between two parallel segments.

    The scale and the center component along the common normal come from a
    2x2 linear solve; the transverse component is the midpoint of the
    offsets keeping the trace inside (parallel segments allow sliding).
    """
    n = _dirs(np.array([pair_angle]))[0]
    hp = float(body.support(n))
    hm = float(body.support(-n))
    ep = float(ellipse_support(shape, n))
    em = float(ellipse_support(shape, -n))
    rho = (hp + hm) / (ep + em)
    t = hp - rho * ep
    v = np.array([-n[1], n[0]])
    a0 = t * n
    lo, hi = _slide_interval(body, shape, a0, rho, v,
                             [pair_angle, (pair_angle + np.pi) % _TWO_PI],
                             scale)
    a = a0 + 0.5 * (lo + hi) * v
    unique = hi - lo <= CENTER_UNIQUE_TOL * max(1.0, scale)
    return InscribedEllipse(center=a, rho=rho, shape=shape, unique=unique)


def _shrink_to_feasible(body, shape, a, rho):
    probe = np.linspace(0.0, _TWO_PI, N_PROBE, endpoint=False)
    g = _gap_on(body, shape, a, rho, probe)
    hE = ellipse_support(shape, _dirs(probe))
    return InscribedEllipse(center=a, rho=float(rho + (g / hE).min()),
                            shape=shape)


def _parabolic_minima(phi, g, h):
    """(angle, value) of interpolated local minima of uniform samples."""
    left, right = np.roll(g, 1), np.roll(g, -1)
    idx = np.nonzero((g <= left) & (g <= right))[0]
    gm, g0, gp = g[idx - 1], g[idx], g[(idx + 1) % len(g)]
    denom = gm - 2.0 * g0 + gp
    safe = np.where(np.abs(denom) > 0, denom, 1.0)
    off = np.where(np.abs(denom) > 0, np.clip(0.5 * (gm - gp) / safe, -1, 1),
                   0.0)
    return (phi[idx] + off * h), (g0 - 0.125 * (gm - gp) * off)


VERIFY_TOL = 2e-11


def _verify(body, shape, a, rho, scale, contact_normals):
    """Check inscribedness against the direction continuum.

    Away from the known contact normals, interpolated minima of the gap
    curve must be nonnegative; near each contact the curve is rescanned on
    a fine local grid (closely spaced contact pairs produce structure the
    global grid cannot resolve).  Returns (ok, worst violation, dip
    angles for a repair attempt).
    """
    probe = np.linspace(0.0, _TWO_PI, N_PROBE, endpoint=False)
    g = _gap_on(body, shape, a, rho, probe)
    dips = []
    worst = 0.0
    ang, val = _parabolic_minima(probe, g, probe[1] - probe[0])
    near_contact = np.zeros(len(ang), dtype=bool)
    for cn in contact_normals:
        near_contact |= np.abs((ang - cn + np.pi) % _TWO_PI - np.pi) < 0.03
    for aa, vv in zip(ang[~near_contact], val[~near_contact]):
        if vv < -VERIFY_TOL * scale:
            dips.append(float(aa % _TWO_PI))
            worst = max(worst, -float(vv))
    for cn in contact_normals:
        local = cn + np.linspace(-0.03, 0.03, 1025)
        gl = _gap_on(body, shape, a, rho, local)
        ang, val = _parabolic_minima(local, gl, local[1] - local[0])
        interior = (ang > local[1]) & (ang < local[-2])
        for aa, vv in zip(ang[interior], val[interior]):
            if vv < -VERIFY_TOL * scale:
                dips.append(float(aa % _TWO_PI))
                worst = max(worst, -float(vv))
    return (len(dips) == 0), worst, dips


def _solve_smooth(body, shape, hint=None):
    scale = _body_scale(body)
    if hint is not None:
        a, rho = hint.center, hint.rho
        rho_ref = None  # a hint for a nearby shape does not bound this one
    else:
        a, rho = _solve_exchange(body, shape)
        rho_ref = rho
    clusters = _contact_clusters(body, shape, a, rho, thresh=1e-4 * scale)
    flats = _flat_angles(body)
    best = None  # (worst, E)
    for _ in range(3):
        angles = [_snap_to_flat(phi, flats) for phi, _ in clusters]
        locked = [bool(len(flats)) and
                  float(np.min(np.abs((phi - flats + np.pi) % _TWO_PI - np.pi)))
                  < LOCK_ANGLE_TOL
                  for phi in angles]
        pair = _locked_pair(angles, locked)
        normals = list(angles)
        try:
            if pair is not None:
                try:
                    E = _solve_between_flats(body, shape, angles[pair[0]],
                                             scale)
                    normals = [angles[pair[0]],
                               (angles[pair[0]] + np.pi) % _TWO_PI]
                except SolverError:
                    pair = None  # too wide to wedge between the segments
            if pair is None:
                if len(angles) == 1:
                    # a single cluster can only happen at rounding level;
                    # treat the antipode as the partner contact
                    angles.append((angles[0] + np.pi) % _TWO_PI)
                    locked.append(False)
                a2, rho2, normals = _polish_free(body, shape, a, rho, angles,
                                                 locked, scale)
                E = InscribedEllipse(center=a2, rho=rho2, shape=shape)
        except SolverError:
            if hint is not None:
                return _solve_smooth(body, shape, hint=None)
            E = _shrink_to_feasible(body, shape, a, rho)
            normals = [phi for phi, _ in clusters]
        ok, worst, dips = _verify(body, shape, E.center, E.rho, scale, normals)
        if ok and rho_ref is not None and E.rho < rho_ref - 1e-4 * scale:
            # feasible but clearly below the linear-program stage: the polish
            # landed in a non-maximal tangency configuration
            if hint is not None:
                return _solve_smooth(body, shape, hint=None)
            E = _shrink_to_feasible(body, shape, a, rho)
            ok, worst, dips = _verify(body, shape, E.center, E.rho, scale,
                                      normals)
        if ok and (rho_ref is None or E.rho >= rho_ref - 1e-4 * scale):
            return E
        if best is None or worst < best[0]:
            best = (worst, E)
        # repair attempt: previous contacts plus the violated directions
        merged = [(phi, 0.0) for phi in normals] + [(d, -worst) for d in dips]
        dedup = []
        for phi, val in sorted(merged, key=lambda t: t[1]):
            if all(min(abs(phi - p), _TWO_PI - abs(phi - p)) > 2e-4
                   for p, _ in dedup):
                dedup.append((phi, val))
        clusters = dedup[:6]
        a, rho = E.center, E.rho
    if hint is not None:
        return _solve_smooth(body, shape, hint=None)
    # feasibility rescue: shrink the best attempt onto the continuum
    E = best[1]
    a, rho = E.center, E.rho
    for _ in range(3):
        ok, worst, dips = _verify(body, shape, a, rho, scale,
                                  [0.0])  # no exclusions beyond a token
        if ok:
            break
        rho -= 1.2 * worst / max(float(ellipse_support(shape, _dirs(
            np.array([dips[0]]))[0])), 1e-9)
    return InscribedEllipse(center=a, rho=float(rho), shape=shape,
                            unique=E.unique)


def solve_extremal(body: ConvexBody, shape: ShapeParam,
                   hint: InscribedEllipse | None = None) -> InscribedEllipse:
    """Inscribed ellipse of maximal scale for the given shape.

    ``hint`` (a solution for a nearby shape) skips the linear-program stage
    and goes straight to the contact polish; the result is verified against
    the full direction continuum either way.  Results are memoized on the
    body, keyed by the exact chart coordinate.
    """
    key = ("extremal", shape.chart, shape.c)
    hit = body.cache.get(key)
    if hit is not None:
        return hit
    if shape.gamma <= DEGENERATE_GAMMA:
        E = _solve_degenerate(body, shape)
    elif body.facets is not None:
        E = _solve_polyhedral(body, shape)
    else:
        E = _solve_smooth(body, shape, hint=hint)
    body.cache[key] = E
    return E


def leaf_coefficient(E: InscribedEllipse) -> np.ndarray:
    """Coefficient pair b of the complexified curve a + b*zeta + conj(b)/zeta."""
    return E.b


# ---------------------------------------------------------------------------
# contact detection

CLUSTER_GAP = 0.02  # radians between distinct contact points
CONTINUUM_FRACTION = 0.2


@dataclass(frozen=True)
class ContactPoint:
    boundary_param: float
    ellipse_angle: float  # zeta-frame angle on the trace
    point: np.ndarray
    gap: float


@dataclass(frozen=True)
class ContactReport:
    points: list
    count_class: str  # two | three | four_plus | continuum
    unique: bool

    def __len__(self):
        return len(self.points)


def _outward_normals(E, theta):
    tang = ellipse_real_tangent(E, theta)
    n = np.stack([tang[1], -tang[0]])
    n = n / np.linalg.norm(n, axis=0)
    rel = ellipse_real_point(E, theta) - E.center[:, None]
    flip = np.sign(np.sum(n * rel, axis=0))
    return n * np.where(flip == 0, 1.0, flip)


def _support_gap(body, E, theta):
    """h_K(n) - sup of the ellipse in direction n, at trace normal n(theta)."""
    n = _outward_normals(E, np.atleast_1d(np.asarray(theta, dtype=float)))
    U = n.T
    hK = np.atleast_1d(body.support(U))
    return hK - (U @ E.center + E.rho * ellipse_support(E.shape, U))


def _boundary_param_at(body, point, n_grid=2048):
    """Boundary parameter closest to a given contact point."""
    t = np.linspace(0.0, _TWO_PI, n_grid, endpoint=False)
    d = np.linalg.norm(body.boundary(t) - point, axis=1)
    k = int(np.argmin(d))
    step = _TWO_PI / n_grid

    def dist(s):
        return float(np.linalg.norm(body.boundary(s) - point))

    r = minimize_scalar(dist, bounds=(t[k] - step, t[k] + step),
                        method="bounded", options={"xatol": 1e-12})
    return float(r.x) % _TWO_PI


def contact_points(body: ConvexBody, E: InscribedEllipse,
                   tol: float = 1e-7, n_grid: int = 4096) -> ContactReport:
    """All trace points where the ellipse touches the body boundary.

    Local minima of the support gap over the trace's normal directions are
    refined continuously and kept when the refined gap is below ``tol``;
    an active set filling a substantial angular fraction is classified as a
    continuum (the trace lies on the boundary).
    """
    if E.shape.gamma <= DEGENERATE_GAMMA:
        thetas = [0.0, np.pi]  # segment endpoints
    else:
        theta = np.linspace(0.0, _TWO_PI, n_grid, endpoint=False)
        gap = _support_gap(body, E, theta)
        if float(gap.min()) < -100 * max(tol, 1e-9):
            raise SolverError(
                "ellipse is not inscribed up to tolerance "
                f"(support gap {gap.min():.3e})",
                module="solver", operation="contact_points")
        if (gap <= tol).mean() >= CONTINUUM_FRACTION:
            stride = n_grid // 16
            pts = [ContactPoint(boundary_param=np.nan, ellipse_angle=float(th),
                                point=ellipse_real_point(E, th), gap=float(g))
                   for th, g in zip(theta[::stride], gap[::stride])]
            return ContactReport(points=pts, count_class="continuum",
                                 unique=E.unique)
        thetas = _refined_gap_minima(body, E, theta, gap, tol)
        if not thetas:
            raise SolverError(
                "no contact found below tolerance; the ellipse does not "
                f"look extremal (smallest gap {gap.min():.3e})",
                module="solver", operation="contact_points")
    pts = []
    for th in thetas:
        p = ellipse_real_point(E, th)
        n = _outward_normals(E, np.array([th]))[:, 0]
        tb = _boundary_param_at(body, p)
        g = float(_support_gap(body, E, th)[0]) if E.shape.gamma > DEGENERATE_GAMMA \
            else float(body.support(n) - p @ n)
        pts.append(ContactPoint(boundary_param=tb, ellipse_angle=float(th),
                                point=p, gap=g))
    count_class = {2: "two", 3: "three"}.get(len(pts), "four_plus")
    return ContactReport(points=pts, count_class=count_class, unique=E.unique)


def _refined_gap_minima(body, E, theta, gap, tol):
    """Contact angles: continuously refined local minima of the gap curve."""
    left, right = np.roll(gap, 1), np.roll(gap, -1)
    coarse_keep = max(float(tol) * 2, 1e-4)
    idx = np.nonzero((gap <= left) & (gap <= right) & (gap < coarse_keep))[0]
    if len(idx) == 0:
        idx = np.array([int(np.argmin(gap))])
    step = theta[1] - theta[0]
    out = []
    for k in idx:
        r = minimize_scalar(
            lambda s: float(_support_gap(body, E, np.array([s]))[0]),
            bounds=(theta[k] - step, theta[k] + step), method="bounded",
            options={"xatol": 1e-13})
        th, val = float(r.x) % _TWO_PI, float(r.fun)
        if val > tol:
            continue
        if all(min(abs(th - t0), _TWO_PI - abs(th - t0)) > CLUSTER_GAP
               for t0 in out):
            out.append(th)
    return sorted(out)
