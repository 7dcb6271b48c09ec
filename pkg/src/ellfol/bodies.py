"""Planar convex bodies described by support function, boundary and curvature.

Named kinds:

* ``disk``           unit disk
* ``square``         [-1, 1]^2
* ``superellipse``   |x|^(2n) + |y|^(2n) <= 1, n >= 1
* ``polygon``        convex vertex list
* ``stadium``        segment of half-length d thickened by radius r
* ``custom``         caller-provided callables (used for affine images)

All support functions are exact: polygons use the vertex maximum, the
superellipse uses the dual-norm identity (the polar of the 2n-ball is the
q-ball with q = 2n/(2n-1)).  Boundary parametrizations use t in [0, 2*pi),
proportional to arc length for the piecewise kinds.  Curvature returns NaN
at polygon vertices, where it is undefined.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import BodyError, ConfigError

_TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class ConvexBody:
    kind: str
    params: dict
    support_fn: Callable[[np.ndarray], np.ndarray]
    boundary_fn: Callable[[np.ndarray], np.ndarray]
    curvature_fn: Callable[[np.ndarray], np.ndarray]
    smoothness_class: str  # "analytic" | "smooth" | "piecewise"
    strictly_convex: bool
    # (normals, offsets) when the body is an intersection of halfspaces
    facets: tuple | None = None
    # outward normals of straight boundary segments (support-function kinks)
    flat_normals: np.ndarray | None = None
    # closed-form support point (boundary maximizer of x.u), when available
    support_point_fn: Callable[[np.ndarray], np.ndarray] | None = None
    # implicit description r(x) with K = {r <= 0}: x -> (value, gradient)
    implicit_fn: Callable[[np.ndarray], tuple] | None = None
    # caches attached by the solver / evaluator; not part of the value
    cache: dict = field(default_factory=dict, repr=False, compare=False)

    def support(self, u):
        """h(u) = max over the body of x . u; vectorized over rows of u."""
        return self.support_fn(np.asarray(u, dtype=float))

    def boundary(self, t):
        """Boundary point at parameter t in [0, 2*pi); vectorized."""
        return self.boundary_fn(np.asarray(t, dtype=float) % _TWO_PI)

    def curvature(self, t):
        """Boundary curvature at parameter t; NaN where undefined."""
        return self.curvature_fn(np.asarray(t, dtype=float) % _TWO_PI)

    def gauge_excess(self, x, n_dirs=512):
        """max_u (x.u - h(u)) over unit directions: <= 0 inside the body."""
        x = np.asarray(x, dtype=float)
        if self.facets is not None:
            N, h = self.facets
            return float((N @ x - h).max())
        phi = np.linspace(0.0, _TWO_PI, n_dirs, endpoint=False)
        U = np.stack([np.cos(phi), np.sin(phi)], axis=1)
        vals = U @ x - self.support(U)
        k = int(np.argmax(vals))
        # local refinement around the best direction
        from scipy.optimize import minimize_scalar
        lo, hi = phi[k] - _TWO_PI / n_dirs, phi[k] + _TWO_PI / n_dirs

        def neg(p):
            u = np.array([np.cos(p), np.sin(p)])
            return -(x @ u - self.support(u))

        r = minimize_scalar(neg, bounds=(lo, hi), method="bounded",
                            options={"xatol": 1e-12})
        return max(float(vals[k]), -float(r.fun))

    def contains(self, x, tol=1e-9):
        return self.gauge_excess(x) <= tol

    def support_point(self, u):
        """A boundary point achieving h(u); unique off support kinks."""
        u = np.asarray(u, dtype=float)
        if self.support_point_fn is not None:
            return self.support_point_fn(u)
        t = np.linspace(0.0, _TWO_PI, 1024, endpoint=False)
        vals = self.boundary(t) @ u
        k = int(np.argmax(vals))
        from scipy.optimize import minimize_scalar
        step = _TWO_PI / 1024
        r = minimize_scalar(lambda s: -float(self.boundary(s) @ u),
                            bounds=(t[k] - step, t[k] + step),
                            method="bounded", options={"xatol": 1e-13})
        return self.boundary(float(r.x))


def _scale_invariant(h):  # subadditivity etc. are checked in tests, not here
    return h


# ---------------------------------------------------------------------------
# named bodies

def _disk_body():
    def support(u):
        return np.linalg.norm(u, axis=-1)

    def boundary(t):
        return np.stack([np.cos(t), np.sin(t)], axis=-1)

    def curvature(t):
        return np.ones_like(np.asarray(t, dtype=float))

    def support_point(u):
        u = np.asarray(u, dtype=float)
        return u / np.linalg.norm(u)

    def implicit(x):
        x = np.asarray(x, dtype=float)
        return x[0] ** 2 + x[1] ** 2 - 1.0, np.stack([2.0 * x[0], 2.0 * x[1]])

    return ConvexBody("disk", {}, support, boundary, curvature,
                      smoothness_class="analytic", strictly_convex=True,
                      support_point_fn=support_point, implicit_fn=implicit)


def _superellipse_body(n):
    n = float(n)
    if n < 1.0:
        raise BodyError(f"superellipse exponent must be >= 1, got {n}",
                        module="bodies", operation="make_body")
    if n == 1.0:
        return _disk_body()
    p = 2.0 * n
    q = p / (p - 1.0)

    def support(u):
        return (np.abs(u[..., 0]) ** q + np.abs(u[..., 1]) ** q) ** (1.0 / q)

    def boundary(t):
        ct, st = np.cos(t), np.sin(t)
        x = np.sign(ct) * np.abs(ct) ** (1.0 / n)
        y = np.sign(st) * np.abs(st) ** (1.0 / n)
        return np.stack([x, y], axis=-1)

    def curvature(t):
        xy = boundary(t)
        x, y = xy[..., 0], xy[..., 1]
        rx = p * np.sign(x) * np.abs(x) ** (p - 1.0)
        ry = p * np.sign(y) * np.abs(y) ** (p - 1.0)
        rxx = p * (p - 1.0) * np.abs(x) ** (p - 2.0)
        ryy = p * (p - 1.0) * np.abs(y) ** (p - 2.0)
        grad = np.hypot(rx, ry)
        return (rxx * ry ** 2 + ryy * rx ** 2) / grad ** 3

    def support_point(u):
        u = np.asarray(u, dtype=float)
        nq = (np.abs(u[0]) ** q + np.abs(u[1]) ** q) ** (1.0 / q)
        return np.sign(u) * (np.abs(u) / nq) ** (q - 1.0)

    def implicit(x):
        x = np.asarray(x, dtype=float)
        val = np.abs(x[0]) ** p + np.abs(x[1]) ** p - 1.0
        grad = p * np.sign(x) * np.abs(x) ** (p - 1.0)
        return val, grad

    return ConvexBody("superellipse", {"n": n}, support, boundary, curvature,
                      smoothness_class="smooth", strictly_convex=True,
                      support_point_fn=support_point, implicit_fn=implicit)


def _order_ccw(V):
    cen = V.mean(axis=0)
    ang = np.arctan2(V[:, 1] - cen[1], V[:, 0] - cen[0])
    return V[np.argsort(ang)]


def _polygon_body(vertices, kind="polygon", vertex_snap=1e-9):
    V = np.asarray(vertices, dtype=float)
    if V.ndim != 2 or V.shape[1] != 2 or len(V) < 3:
        raise BodyError("polygon needs at least three planar vertices",
                        module="bodies", operation="make_body")
    V = _order_ccw(V)
    m = len(V)
    for i in range(m):
        a, b, c = V[i], V[(i + 1) % m], V[(i + 2) % m]
        cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if cross <= 0:
            raise BodyError(
                f"vertices {a.tolist()}, {b.tolist()}, {c.tolist()} are not in "
                "strictly convex position",
                module="bodies", operation="make_body")
    edges = np.roll(V, -1, axis=0) - V
    lengths = np.linalg.norm(edges, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    perim = cum[-1]

    def support(u):
        u = np.atleast_2d(u)
        vals = u @ V.T
        out = vals.max(axis=1)
        return out if out.size > 1 else float(out[0])

    def boundary(t):
        scalar = np.asarray(t).ndim == 0
        s = np.atleast_1d((np.asarray(t, dtype=float) % _TWO_PI) / _TWO_PI * perim)
        idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, m - 1)
        frac = (s - cum[idx]) / lengths[idx]
        pts = V[idx] + edges[idx] * frac[..., None]
        return pts[0] if scalar else pts

    def curvature(t):
        scalar = np.asarray(t).ndim == 0
        s = np.atleast_1d((np.asarray(t, dtype=float) % _TWO_PI) / _TWO_PI * perim)
        out = np.zeros_like(s)
        # undefined within snapping distance of a vertex
        dist = np.minimum.reduce([np.abs(s - cs) for cs in cum])
        out[dist <= vertex_snap * perim] = np.nan
        return float(out[0]) if scalar else out

    normals = np.stack([edges[:, 1], -edges[:, 0]], axis=1) / lengths[:, None]
    offsets = np.sum(normals * V, axis=1)

    def support_point(u):
        return V[int(np.argmax(V @ np.asarray(u, dtype=float)))]

    return ConvexBody(kind, {"vertices": V}, support, boundary, curvature,
                      smoothness_class="piecewise", strictly_convex=False,
                      facets=(normals, offsets), support_point_fn=support_point)


def _stadium_body(half_length, radius):
    d, r = float(half_length), float(radius)
    if d <= 0 or r <= 0:
        raise BodyError("stadium needs positive half-length and radius",
                        module="bodies", operation="make_body")

    def support(u):
        return d * np.abs(u[..., 0]) + r * np.linalg.norm(u, axis=-1)

    arc = np.pi * r
    seg = 2.0 * d
    cum = np.array([0.0, arc, arc + seg, 2 * arc + seg, 2 * (arc + seg)])
    perim = cum[-1]

    def boundary(t):
        s = np.atleast_1d((np.asarray(t, dtype=float) % _TWO_PI) / _TWO_PI * perim)
        pts = np.empty(s.shape + (2,))
        # right cap from (d,-r) to (d,r), then top segment, left cap, bottom
        m0 = s < cum[1]
        ang = -np.pi / 2 + s[m0] / r
        pts[m0] = np.stack([d + r * np.cos(ang), r * np.sin(ang)], axis=-1)
        m1 = (s >= cum[1]) & (s < cum[2])
        pts[m1] = np.stack([d - (s[m1] - cum[1]), np.full(m1.sum(), r)], axis=-1)
        m2 = (s >= cum[2]) & (s < cum[3])
        ang = np.pi / 2 + (s[m2] - cum[2]) / r
        pts[m2] = np.stack([-d + r * np.cos(ang), r * np.sin(ang)], axis=-1)
        m3 = s >= cum[3]
        pts[m3] = np.stack([-d + (s[m3] - cum[3]), np.full(m3.sum(), -r)], axis=-1)
        return pts if np.asarray(t).ndim else pts[0]

    def curvature(t):
        s = np.atleast_1d((np.asarray(t, dtype=float) % _TWO_PI) / _TWO_PI * perim)
        on_arc = (s < cum[1]) | ((s >= cum[2]) & (s < cum[3]))
        out = np.where(on_arc, 1.0 / r, 0.0)
        return out if np.asarray(t).ndim else float(out[0])

    def support_point(u):
        u = np.asarray(u, dtype=float)
        un = u / np.linalg.norm(u)
        cap = np.array([np.sign(un[0]) * d if un[0] != 0 else 0.0, 0.0])
        return cap + r * un

    def implicit(x):
        x = np.asarray(x, dtype=float)
        ex = np.maximum(np.abs(x[0]) - d, 0.0)
        qn = np.hypot(ex, x[1])
        safe = np.maximum(qn, 1e-300)
        grad = np.stack([np.sign(x[0]) * ex / safe, x[1] / safe])
        return qn - r, grad

    return ConvexBody("stadium", {"half_length": d, "radius": r},
                      support, boundary, curvature,
                      smoothness_class="piecewise", strictly_convex=False,
                      flat_normals=np.array([[0.0, 1.0], [0.0, -1.0]]),
                      support_point_fn=support_point, implicit_fn=implicit)


def make_body(kind: str, **params) -> ConvexBody:
    """Construct a named convex body; see the module docstring for kinds."""
    kind = kind.lower()
    if kind == "disk":
        return _disk_body()
    if kind == "square":
        return _polygon_body([(-1, -1), (1, -1), (1, 1), (-1, 1)], kind="square")
    if kind == "superellipse":
        return _superellipse_body(params.get("n", 2))
    if kind == "polygon":
        if "vertices" not in params:
            raise BodyError("polygon requires a vertex list",
                            module="bodies", operation="make_body")
        return _polygon_body(params["vertices"])
    if kind == "stadium":
        return _stadium_body(params.get("half_length", 1.0),
                             params.get("radius", 1.0))
    if kind == "custom":
        return ConvexBody("custom", dict(params),
                          params["support"], params["boundary"],
                          params["curvature"],
                          smoothness_class=params.get("smoothness_class", "smooth"),
                          strictly_convex=params.get("strictly_convex", False))
    raise BodyError(f"unknown body kind {kind!r}",
                    module="bodies", operation="make_body")


def affine_image(body: ConvexBody, A, t) -> ConvexBody:
    """The body A K + t for an invertible 2x2 matrix A.

    Support, boundary and curvature transform in closed form, so the image
    is as exact as the source.
    """
    A = np.asarray(A, dtype=float)
    t = np.asarray(t, dtype=float)
    detA = float(np.linalg.det(A))
    if abs(detA) < 1e-12:
        raise BodyError("affine map must be invertible",
                        module="bodies", operation="affine_image")
    if body.kind in ("polygon", "square"):
        V = body.params["vertices"] @ A.T + t
        return _polygon_body(V)

    def support(u):
        u = np.asarray(u, dtype=float)
        return body.support(u @ A) + u @ t

    def boundary(s):
        return body.boundary(s) @ A.T + t

    def curvature(s):
        s_arr = np.asarray(s, dtype=float)
        eps = 1e-6
        p0 = body.boundary(s_arr - eps)
        p1 = body.boundary(s_arr)
        p2 = body.boundary(s_arr + eps)
        d1 = (p2 - p0) / (2 * eps)
        # curvature of the image: kappa' = kappa * det A * |r'|^3 / |A r'|^3
        speed = np.linalg.norm(d1, axis=-1)
        speed_img = np.linalg.norm(d1 @ A.T, axis=-1)
        k = body.curvature(s_arr)
        return k * abs(detA) * speed ** 3 / speed_img ** 3

    flats = None
    if body.flat_normals is not None:
        flats = body.flat_normals @ np.linalg.inv(A)  # rows n A^{-1} = (A^{-T} n)^T
        flats = flats / np.linalg.norm(flats, axis=1)[:, None]

    def support_point(u):
        return A @ body.support_point(np.asarray(u, dtype=float) @ A) + t

    implicit = None
    if body.implicit_fn is not None:
        Ainv = np.linalg.inv(A)

        def implicit(x):
            x = np.asarray(x, dtype=float)
            val, grad = body.implicit_fn(Ainv @ (x - (t[:, None] if x.ndim > 1
                                                      else t)))
            return val, Ainv.T @ grad

    return ConvexBody("custom", {"source": body.kind, "A": A, "t": t},
                      support, boundary, curvature,
                      smoothness_class=body.smoothness_class,
                      strictly_convex=body.strictly_convex,
                      flat_normals=flats, support_point_fn=support_point,
                      implicit_fn=implicit)


def scale_body(body: ConvexBody, factor: float) -> ConvexBody:
    return affine_image(body, np.eye(2) * float(factor), np.zeros(2))


# ---------------------------------------------------------------------------
# plain-text configuration

def parse_body_config(text: str) -> ConvexBody:
    """Parse a key-value body description.

    Example::

        kind = superellipse
        n = 2

    Polygon vertices are comma-separated pairs, one pair per whitespace
    token: ``vertices = 0,0 2,0 2,1 0,1``.
    """
    kv = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}",
                              line=lineno, module="bodies",
                              operation="parse_body_config")
        key, val = (s.strip() for s in line.split("=", 1))
        kv[key.lower()] = (val, lineno)
    if "kind" not in kv:
        raise ConfigError("missing 'kind'", module="bodies",
                          operation="parse_body_config")
    kind = kv.pop("kind")[0].lower()
    params = {}
    for key, (val, lineno) in kv.items():
        if key == "vertices":
            try:
                params["vertices"] = [tuple(float(x) for x in pair.split(","))
                                      for pair in val.split()]
            except ValueError:
                raise ConfigError(f"bad vertex list {val!r}", line=lineno,
                                  module="bodies",
                                  operation="parse_body_config") from None
        else:
            try:
                params[key] = float(val)
            except ValueError:
                raise ConfigError(f"expected a number for {key!r}, got {val!r}",
                                  line=lineno, module="bodies",
                                  operation="parse_body_config") from None
    try:
        return make_body(kind, **params)
    except TypeError as exc:
        raise ConfigError(str(exc), module="bodies",
                          operation="parse_body_config") from None


def load_body_config(path) -> ConvexBody:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_body_config(fh.read())
