"""Problem library: manufactured test problems and the two-species
electrodeposition kinetics with presets and initial data."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .exceptions import ConfigError
from .fem1d import BCKind
from .geometry import CAP_DOMAIN, SQUARE, DomainSpec

#: homogeneous equilibrium of the two-species kinetics
EQUILIBRIUM = (0.0, 0.5)


def equilibrium_consistent_D(C: float, alpha: float, gamma_k: float) -> float:
    """The loss-rate coefficient that makes (0, alpha) a kinetics equilibrium.

    g(0, alpha) = 0 forces D = C (1-alpha)(1 - gamma_k (1-alpha)) /
    (alpha (1 + gamma_k alpha)); any other D shifts the base state and, for
    the parameter sets used here, removes the diffusion-driven instability
    entirely.
    """
    return C * (1 - alpha) * (1 - gamma_k * (1 - alpha)) \
        / (alpha * (1 + gamma_k * alpha))


@dataclass(frozen=True)
class DIBParams:
    """Parameters of the electrodeposition reaction-diffusion kinetics.

    ``gamma_k`` is the kinetic gamma, distinct from the elliptic reaction
    coefficient used elsewhere.  ``rho`` rescales space and time: the system
    is integrated on the reference domain with kinetics multiplied by rho,
    and physical coordinates scale by sqrt(rho) at export time.  Leaving
    ``D`` unset slaves it to C so the equilibrium sits at (0, alpha); an
    explicit D is honored as given.
    """

    alpha: float = 0.5
    gamma_k: float = 0.2
    A1: float = 10.0
    A2: float = 30.0
    B: float = 25.0
    C: float = 7.0
    D: float | None = None
    k2: float = 2.5
    k3: float = 1.5
    d_theta: float = 20.0
    rho: float = 400.0

    def __post_init__(self):
        if self.D is None:
            object.__setattr__(
                self, "D",
                equilibrium_consistent_D(self.C, self.alpha, self.gamma_k))
        for name in ("alpha", "gamma_k", "A1", "A2", "B", "C", "D",
                     "k2", "k3", "d_theta", "rho"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"kinetics parameter {name} must be positive")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if not 0 < self.gamma_k < 1:
            raise ConfigError("gamma_k must lie in (0, 1)")

    def replace(self, **kw) -> "DIBParams":
        from dataclasses import replace as _replace
        return _replace(self, **kw)


def dib_kinetics(eta, theta, p: DIBParams):
    """Entrywise reaction rates (f, g) of the two-species model."""
    eta = np.asarray(eta, dtype=float)
    theta = np.asarray(theta, dtype=float)
    f = p.A1 * (1.0 - theta) * eta - p.A2 * eta ** 3 - p.B * (theta - p.alpha)
    g = (p.C * (1.0 + p.k2 * eta) * (1.0 - theta)
         * (1.0 - p.gamma_k * (1.0 - theta))
         - p.D * theta * (1.0 + p.gamma_k * theta) * (1.0 + p.k3 * eta))
    return f, g


_PRESETS = {
    # spots and worms on moderate domains (D slaved to C = 7)
    "spots_worms": DIBParams(A2=30.0, B=25.0, C=7.0),
    # holes (reversed spots), D slaved to C = 3
    "holes": DIBParams(A2=1.0, B=30.0, C=3.0),
}


def dib_presets(name: str) -> DIBParams:
    """Named parameter sets; override individual fields with ``.replace``."""
    try:
        return _PRESETS[name]
    except KeyError:
        raise ConfigError(
            f"unknown kinetics preset '{name}' (have: {sorted(_PRESETS)})"
        ) from None


@dataclass(frozen=True)
class InitialData:
    """Seedable random perturbation of the homogeneous equilibrium.

    The generator is the counter-based Philox4x64 keyed by ``seed``, so
    fields are bit-reproducible across platforms for a fixed grid.
    """

    amplitude: float = 1e-4
    seed: int = 20240 # default key; any 64-bit value works

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self.seed))


def initial_fields(shape, data: InitialData):
    """Equilibrium plus amplitude * uniform(0,1) deviates, both species."""
    qy, qx = int(shape[0]), int(shape[1])
    if qy <= 0 or qx <= 0:
        raise ConfigError("grid dimensions must be positive")
    rng = data.generator()
    eta = EQUILIBRIUM[0] + data.amplitude * rng.random((qy, qx))
    theta = EQUILIBRIUM[1] + data.amplitude * rng.random((qy, qx))
    return eta, theta


def effective_domain_size(domain: DomainSpec, rho: float) -> float:
    """rho times the domain area; governs which intrinsic pattern fits."""
    return float(rho) * domain.area()


# ---------------------------------------------------------------------------
# manufactured problems
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ManufacturedProblem:
    """Exact solution plus matching source for a convergence study."""

    name: str
    kind: str  # "elliptic" | "parabolic"
    domain: DomainSpec
    bc: BCKind
    gamma: float
    d_u: float | None
    exact: Callable
    source: Callable
    t_final: float | None = None


def _sq_exact(x, y):
    return np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y)


def _sq_source(x, y):
    return 8.0 * np.pi ** 2 * _sq_exact(x, y)


def _cap_exact(x, y):
    # product form vanishing on the whole cap boundary
    return y * (y - 1.0) * (-y ** 2 / 2 + x + 1.0) * (y ** 2 / 2 + x - 1.0)


def _cap_source(x, y):
    # minus the Laplacian of the exact solution, expanded by hand and
    # guarded by a finite-difference test
    return (-2.0 * x ** 2 + 7.5 * y ** 4 - 5.0 * y ** 3
            - 14.0 * y ** 2 + 8.0 * y + 2.0)


def _heat_exact(x, y, t):
    return _cap_exact(x, y) * np.exp(t)


_HEAT_DU = 0.1


def _heat_source(u, x, y, t):
    # exact solution grows like exp(t): u_t - d Lap u = e^t (u0 + d * (-Lap u0))
    return np.exp(t) * (_cap_exact(x, y) + _HEAT_DU * _cap_source(x, y))


def _ones(x, y):
    return np.ones_like(np.asarray(x, dtype=float))


_PROBLEMS = {
    "poisson_square": ManufacturedProblem(
        name="poisson_square", kind="elliptic", domain=SQUARE,
        bc=BCKind.DIRICHLET, gamma=0.0, d_u=None,
        exact=_sq_exact, source=_sq_source),
    # reaction-dominated smoke test with the constant exact solution
    "smoke_constant": ManufacturedProblem(
        name="smoke_constant", kind="elliptic", domain=SQUARE,
        bc=BCKind.NEUMANN, gamma=1.0, d_u=None,
        exact=_ones, source=_ones),
    "poisson_cap": ManufacturedProblem(
        name="poisson_cap", kind="elliptic", domain=CAP_DOMAIN,
        bc=BCKind.DIRICHLET, gamma=0.0, d_u=None,
        exact=_cap_exact, source=_cap_source),
    "heat_cap": ManufacturedProblem(
        name="heat_cap", kind="parabolic", domain=CAP_DOMAIN,
        bc=BCKind.DIRICHLET, gamma=0.0, d_u=_HEAT_DU,
        exact=_heat_exact, source=_heat_source, t_final=1.0),
}


def manufactured_problem(name: str) -> ManufacturedProblem:
    try:
        return _PROBLEMS[name]
    except KeyError:
        raise ConfigError(
            f"unknown problem '{name}' (have: {sorted(_PROBLEMS)})"
        ) from None
