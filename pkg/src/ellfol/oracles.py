"""Closed-form extremal functions used as ground truth.

The one-variable building block is the inverse Joukowski map
``h(z) = z + sqrt(z^2 - 1)`` with the branch ``|h| >= 1``; ``log|h|`` is the
Green function of the complement of [-1, 1] with pole at infinity.

For the square [-1,1]^2 the extremal function is the maximum of the two
coordinate Green functions.  For the real unit disk we use

    V(z) = 1/2 * log+ h(u),   u = |z1|^2 + |z2|^2 + |z1^2 + z2^2 - 1|,

i.e. with the Joukowski factor applied to u.  Without that factor the
formula fails the on-curve identity V(a + b*zeta + conj(b)/zeta) = log|zeta|
(already at zeta = 2 on the circle curve it would give log(2.125)/2 instead
of log 2); with it the identity holds identically, which is what the tests
pin down.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import EllfolError


@dataclass(frozen=True)
class OracleFn:
    """A named evaluator z -> V(z) >= 0 with a note on its zero set."""

    name: str
    evaluator: Callable
    domain_note: str = ""

    def __call__(self, *args):
        return self.evaluator(*args)


def joukowski_inverse(zeta):
    """h(zeta) = zeta + sqrt(zeta^2 - 1) on the branch with |h| >= 1.

    The branch is selected by comparing the two square-root candidates,
    which is robust arbitrarily close to the cut [-1, 1]; on the cut itself
    |h| = 1 exactly.
    """
    zeta = np.asarray(zeta, dtype=complex)
    s = np.sqrt(zeta * zeta - 1.0)
    plus, minus = zeta + s, zeta - s
    out = np.where(np.abs(plus) >= np.abs(minus), plus, minus)
    return out if out.ndim else complex(out)


def green_interval(zeta):
    """log|h(zeta)|, clamped at 0 for roundoff on the cut."""
    return np.maximum(np.log(np.abs(joukowski_inverse(zeta))), 0.0)


def V_square(z):
    """max(log|h(z1)|, log|h(z2)|): extremal function of [-1,1]^2."""
    z = np.asarray(z, dtype=complex)
    return np.maximum(green_interval(z[..., 0]), green_interval(z[..., 1]))


def V_disk(z):
    """Extremal function of the real unit disk (corrected closed form)."""
    z = np.asarray(z, dtype=complex)
    z1, z2 = z[..., 0], z[..., 1]
    u = np.abs(z1) ** 2 + np.abs(z2) ** 2 + np.abs(z1 ** 2 + z2 ** 2 - 1.0)
    u = np.maximum(u, 1.0)  # roundoff guard inside the disk
    return 0.5 * np.log(u + np.sqrt(u * u - 1.0))


def green_disk_1d(radius=1.0):
    """One-variable extremal function of a disk of given radius in C."""
    r = float(radius)

    def ev(w):
        return np.maximum(np.log(np.abs(np.asarray(w, dtype=complex)) / r), 0.0)

    return OracleFn(f"disk1d(r={r})", ev, "zero on |w| <= r")


def interval_1d():
    """One-variable extremal function of [-1, 1] in C."""
    return OracleFn("interval1d", green_interval, "zero on [-1, 1]")


def V_product(V1: OracleFn, V2: OracleFn) -> OracleFn:
    """Extremal function of a product body: pointwise maximum of factors."""

    def ev(z):
        z = np.asarray(z, dtype=complex)
        return np.maximum(V1(z[..., 0]), V2(z[..., 1]))

    return OracleFn(f"max({V1.name},{V2.name})", ev,
                    "zero on the product of the factor bodies")


def V_poly_preimage(V: OracleFn, P, P_hat, degree: int,
                    n_check: int = 256) -> OracleFn:
    """Extremal function of the preimage body: z -> degree * V(P(z)).

    Valid when the top-degree homogeneous part ``P_hat`` vanishes only at the
    origin; this is verified on a grid of unit directions before building
    the evaluator.
    """
    phi = np.linspace(0.0, 2 * np.pi, n_check, endpoint=False)
    U = np.stack([np.cos(phi), np.sin(phi)], axis=1).astype(complex)
    vals = np.abs(np.asarray([P_hat(u) for u in U])).max(axis=1)
    if vals.min() < 1e-9:
        raise EllfolError(
            "leading homogeneous part vanishes away from the origin; the "
            "composition rule does not apply",
            module="oracles", operation="V_poly_preimage")

    def ev(z):
        return degree * V(np.asarray(P(np.asarray(z, dtype=complex)), dtype=complex))

    return OracleFn(f"{degree}*{V.name}(P(.))", ev,
                    "zero on the polynomial preimage of the base body")


def oracle_by_name(name: str) -> OracleFn:
    name = name.lower()
    if name == "square":
        return OracleFn("square", V_square, "zero on [-1,1]^2")
    if name == "disk":
        return OracleFn("disk", V_disk, "zero on the real unit disk")
    if name == "interval_product":
        return V_product(interval_1d(), interval_1d())
    raise EllfolError(f"unknown oracle {name!r}",
                      module="oracles", operation="oracle_by_name")
