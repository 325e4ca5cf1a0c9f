"""Reference and physical domains bounded by a positive profile curve.

A planar domain is described on a reference rectangle (x in some unit
interval, y in [0, 1]) and stretched in the x direction by a width profile
x_phys = x * L(y).  Square domains are the special case L == 1; symmetric
domains use a centered reference interval [-1/2, 1/2] with L(y) = 2 S(y),
where S is the half-width.  Domains whose profile is 1-periodic can further
be wrapped onto a cylinder of circumference 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from .exceptions import GeometryError

_FD_STEP = 1e-6
_FD_RTOL = 1e-6
_EDGE_TOL = 1e-12


class DomainKind(Enum):
    SQUARE = "square"
    XNORMAL = "xnormal"
    SYMMETRIC = "symmetric"


@dataclass(frozen=True)
class ProfileFn:
    """Width profile y -> L(y) together with its derivative.

    Both callables must accept scalars and ndarrays.  The derivative is
    user-supplied, never differenced internally; consistency with a centered
    finite difference of ``value`` is checked at construction to guard
    mismatched pairs.
    """

    value: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"

    def __post_init__(self):
        ys = np.clip(np.linspace(0.0, 1.0, 101), _FD_STEP, 1.0 - _FD_STEP)
        vals = np.asarray(self.value(ys), dtype=float)
        if not np.all(np.isfinite(vals)) or np.min(vals) <= 0.0:
            raise GeometryError(
                f"profile '{self.name}' must be positive on [0, 1] "
                f"(min sampled value {np.min(vals):.3e})"
            )
        fd = (self.value(ys + _FD_STEP) - self.value(ys - _FD_STEP)) / (2 * _FD_STEP)
        dv = np.asarray(self.derivative(ys), dtype=float)
        scale = np.maximum(1.0, np.abs(dv))
        worst = np.max(np.abs(fd - dv) / scale)
        if worst > _FD_RTOL:
            raise GeometryError(
                f"profile '{self.name}': derivative disagrees with finite "
                f"differences of value (max relative gap {worst:.3e})"
            )

    def __call__(self, y):
        return self.value(y)

    def deriv(self, y):
        return self.derivative(y)


def _const_one(y):
    return np.ones_like(np.asarray(y, dtype=float))


def _const_zero(y):
    return np.zeros_like(np.asarray(y, dtype=float))


#: L == 1, the unit square profile.
UNIT = ProfileFn(_const_one, _const_zero, name="unit")

#: Cap half-width S(y) = 1 - y^2/2, stored as L = 2S.
CAP = ProfileFn(lambda y: 2.0 - np.asarray(y, dtype=float) ** 2,
                lambda y: -2.0 * np.asarray(y, dtype=float),
                name="cap")

#: Jar half-width S(y) = 1 + sin(2 pi y)/2, stored as L = 2S.
JAR = ProfileFn(lambda y: 2.0 + np.sin(2 * np.pi * np.asarray(y, dtype=float)),
                lambda y: 2 * np.pi * np.cos(2 * np.pi * np.asarray(y, dtype=float)),
                name="jar")


@dataclass(frozen=True)
class DomainSpec:
    """A domain kind plus its width profile.

    The reference x interval is [0, 1] for square and one-sided domains and
    [-1/2, 1/2] for symmetric ones, so that x_phys = x * L(y) sweeps
    [0, L(y)] and [-S(y), S(y)] respectively.
    """

    kind: DomainKind
    profile: ProfileFn = field(default=UNIT)
    name: str = ""

    def __post_init__(self):
        if self.kind is DomainKind.SQUARE and self.profile is not UNIT:
            raise GeometryError("square domains take the unit profile")

    @property
    def reference_x_interval(self) -> tuple[float, float]:
        if self.kind is DomainKind.SYMMETRIC:
            return (-0.5, 0.5)
        return (0.0, 1.0)

    @property
    def x_offset(self) -> float:
        return self.reference_x_interval[0]

    def width(self, y):
        return self.profile(y)

    def area(self, n_quad: int = 20) -> float:
        """Domain area, integral of L(y) over [0, 1] by Gauss quadrature."""
        xg, wg = np.polynomial.legendre.leggauss(n_quad)
        yq = 0.5 * (xg + 1.0)
        return float(0.5 * np.sum(wg * self.profile(yq)))


SQUARE = DomainSpec(DomainKind.SQUARE, UNIT, name="square")
CAP_DOMAIN = DomainSpec(DomainKind.SYMMETRIC, CAP, name="cap")
JAR_DOMAIN = DomainSpec(DomainKind.SYMMETRIC, JAR, name="jar")

_REGISTRY: dict[str, DomainSpec] = {}


def register_domain(name: str, domain: DomainSpec) -> None:
    """Register a custom domain for lookup as ``custom:<name>``."""
    _REGISTRY[name] = domain


def domain_from_name(name: str) -> DomainSpec:
    """Resolve a CLI/config domain string: square | cap | jar | custom:<name>."""
    builtin = {"square": SQUARE, "cap": CAP_DOMAIN, "jar": JAR_DOMAIN}
    if name in builtin:
        return builtin[name]
    if name.startswith("custom:"):
        key = name.split(":", 1)[1]
        if key in _REGISTRY:
            return _REGISTRY[key]
        raise GeometryError(f"no registered domain named '{key}'")
    raise GeometryError(f"unknown domain '{name}' (expected square|cap|jar|custom:<name>)")


def _check_reference_point(domain: DomainSpec, x, y) -> None:
    x0, x1 = domain.reference_x_interval
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x < x0 - _EDGE_TOL) or np.any(x > x1 + _EDGE_TOL) \
            or np.any(y < -_EDGE_TOL) or np.any(y > 1.0 + _EDGE_TOL):
        raise GeometryError(
            f"point outside reference rectangle [{x0}, {x1}] x [0, 1]"
        )


def map_to_physical(domain: DomainSpec, p):
    """Map a reference point (x, y) to the physical point (x * L(y), y)."""
    x, y = np.asarray(p[0], dtype=float), np.asarray(p[1], dtype=float)
    _check_reference_point(domain, x, y)
    return np.stack(np.broadcast_arrays(x * domain.profile(y), y), axis=-1)


def map_to_reference(domain: DomainSpec, p):
    """Inverse map: physical (x_L, y) back to the reference rectangle."""
    xl, y = np.asarray(p[0], dtype=float), np.asarray(p[1], dtype=float)
    if np.any(y < -_EDGE_TOL) or np.any(y > 1.0 + _EDGE_TOL):
        raise GeometryError("physical point outside the y range [0, 1]")
    x = xl / domain.profile(y)
    _check_reference_point(domain, x, y)
    return np.stack(np.broadcast_arrays(x, y), axis=-1)


def hhat(domain: DomainSpec, p) -> np.ndarray:
    """Geometry tensor of the stretched Laplacian at a reference point.

    Returns the symmetric positive definite 2x2 matrix
    [[1/L + x^2 L'^2 / L, -x L'], [-x L', L]] whose determinant is
    identically 1.
    """
    x, y = float(p[0]), float(p[1])
    _check_reference_point(domain, x, y)
    L = float(domain.profile(y))
    if L <= 0.0:
        raise GeometryError(f"profile nonpositive at y={y}: L={L}")
    dL = float(domain.profile.deriv(y))
    off = -x * dL
    return np.array([[1.0 / L + x * x * dL * dL / L, off], [off, L]])


def wrap_to_cylinder(p) -> np.ndarray:
    """Wrap physical points (x, y) with y in [0, 1] onto a cylinder.

    Returns (x, sin(2 pi y) / 2 pi, cos(2 pi y) / 2 pi); y = 0 and y = 1
    land on the same point, so 1-periodic profiles give a closed surface.
    """
    p = np.asarray(p, dtype=float)
    x, y = p[..., 0], p[..., 1]
    if np.any(y < -_EDGE_TOL) or np.any(y > 1.0 + _EDGE_TOL):
        raise GeometryError("cylinder wrap needs y in [0, 1]")
    ang = 2 * np.pi * y
    return np.stack(
        [x, np.sin(ang) / (2 * np.pi), np.cos(ang) / (2 * np.pi)], axis=-1
    )
