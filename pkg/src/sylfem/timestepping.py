"""Implicit-diffusion / explicit-reaction Euler stepping in matrix form.

Each step solves one multiterm Sylvester equation per species through the
matrix-oriented PCG, warm-started at the previous state, with the step
operator and its preconditioner factorized once before the loop.  A sparse
vector-form stepper (Kronecker assembly + reused LU factorization) provides
the reference trajectory for equivalence tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse.linalg as spla

from .exceptions import ConfigError, SolverError
from .fem1d import BCKind, DirectionSet
from .geometry import DomainSpec
from .operators import (expand_with_boundary, full_node_grid,
                        parabolic_operator, to_kronecker, unvec, vec)
from .solvers import (Preconditioner, make_preconditioner, mo_pcg,
                      relative_residual, timestep_residual)


@dataclass(frozen=True)
class TimeGrid:
    """Fixed-step time axis: n_steps = ceil(t_final / tau)."""

    tau: float
    t_final: float

    def __post_init__(self):
        if self.tau <= 0 or self.t_final <= 0:
            raise ConfigError("tau and t_final must be positive")

    @property
    def n_steps(self) -> int:
        return max(1, math.ceil(self.t_final / self.tau - 1e-9))


@dataclass(frozen=True)
class InnerSolver:
    """Configuration of the per-step linear solver."""

    method: str = "mo-pcg"      # 'mo-pcg' | 'direct'
    precond: str = "auto"       # auto | identity | parabolic | parabolic_lumped
    rule: str = "tau"           # 'tau' (residual drop by tau) | 'residual'
    tol: float = 1e-10          # used when rule == 'residual'
    max_iter: int = 400

    def stopping(self, tau: float):
        if self.rule == "tau":
            return timestep_residual(tau)
        if self.rule == "residual":
            return relative_residual(self.tol)
        raise ConfigError(f"unknown stopping rule '{self.rule}'")


class BlowUpError(SolverError):
    """Non-finite state encountered; carries the last finite state."""

    def __init__(self, step: int, species: str, state):
        super().__init__(f"solution blew up at step {step} (species {species})")
        self.step = step
        self.species = species
        self.state = state


@dataclass
class Trajectory:
    """Final state and per-step metrics of one integration."""

    final: tuple[np.ndarray, ...]
    increments: np.ndarray           # (n_steps,) or (n_steps, 2)
    iterations: np.ndarray           # inner iterations, same layout
    times: np.ndarray
    steady_step: int | None = None
    snapshots: list = field(default_factory=list)  # (step, state copies)
    diagnostics: dict = field(default_factory=dict)


#: states beyond this magnitude are treated as divergence even while finite
BLOWUP_LIMIT = 1e100


def _check_finite(U: np.ndarray, step: int, species: str, last) -> None:
    if not np.all(np.isfinite(U)) or np.max(np.abs(U)) > BLOWUP_LIMIT:
        raise BlowUpError(step, species, last)


def _step_solver(op, precond, stop, inner: InnerSolver):
    """Bind the per-step linear solve; 'direct' reuses one LU factorization."""
    if inner.method == "mo-pcg":
        def solve(rhs, warm):
            rep = mo_pcg(op, rhs, precond=precond, stop=stop,
                         u0=warm, max_iter=inner.max_iter)
            if rep.stop_reason == "max_iter":
                raise SolverError(
                    f"inner PCG did not converge in {inner.max_iter} iterations"
                )
            return rep.solution, rep.iterations
        return solve
    if inner.method == "direct":
        lu = spla.splu(to_kronecker(op).tocsc())

        def solve(rhs, warm):
            return unvec(lu.solve(vec(rhs)), op.shape), 0
        return solve
    raise ConfigError(f"unknown inner solver method '{inner.method}'")


def _parabolic_precond(x, y, d_u, tau, lumped, inner: InnerSolver):
    if inner.method != "mo-pcg":
        return None
    name = inner.precond
    if name == "auto":
        name = "parabolic_lumped" if lumped else "parabolic"
    if name == "identity":
        return Preconditioner()
    return make_preconditioner(name, x, y, d_u=d_u, tau=tau, lumped=lumped)


def imex_euler_heat(domain: DomainSpec, x: DirectionSet, y: DirectionSet,
                    d_u: float, source: Callable, u0: np.ndarray,
                    grid: TimeGrid, inner: InnerSolver | None = None,
                    lumped: bool = False) -> Trajectory:
    """Integrate u_t - d_u Lap u = source(u, x, y, t) from the nodal state u0.

    The source is evaluated nodally at the physical grid coordinates and the
    old time level; diffusion is implicit.
    """
    inner = inner or InnerSolver()
    tau = grid.tau
    op, rhs_of = parabolic_operator(x, y, d_u, tau, lumped=lumped)
    precond = _parabolic_precond(x, y, d_u, tau, lumped, inner)
    solve = _step_solver(op, precond, inner.stopping(tau), inner)
    # sources are sampled over all nodes: they need not vanish on a
    # Dirichlet boundary even though the state does
    X, Y = full_node_grid(domain, x, y)

    U = np.array(u0, dtype=float, copy=True)
    increments = np.empty(grid.n_steps)
    iters = np.empty(grid.n_steps, dtype=int)
    times = (1 + np.arange(grid.n_steps)) * tau
    for k in range(grid.n_steps):
        t_k = k * tau
        Ufull = expand_with_boundary(U, x, y)
        W = Ufull + tau * np.asarray(source(Ufull, X, Y, t_k), dtype=float)
        _check_finite(W, k, "u", U)
        U_new, it = solve(rhs_of(W), U)
        _check_finite(U_new, k, "u", U)
        increments[k] = np.linalg.norm(U_new - U)
        iters[k] = it
        U = U_new
    return Trajectory(final=(U,), increments=increments, iterations=iters,
                      times=times)


def imex_euler_rds(domain: DomainSpec, x: DirectionSet, y: DirectionSet,
                   d_u: float, d_v: float, kinetics, rho: float,
                   state0, grid: TimeGrid,
                   inner: InnerSolver | None = None, lumped: bool = False,
                   snapshot_every: int = 0,
                   steady_eps: float = 1e-8) -> Trajectory:
    """Integrate the two-species reaction-diffusion system.

    ``kinetics`` is a pair of entrywise rate functions (f, g); both are
    scaled by ``rho`` and treated explicitly, while each species' diffusion
    solve is implicit and independent of the other's within a step.
    The boundary condition of the direction sets must be zero-flux for the
    conservation properties to hold.
    """
    if d_u <= 0 or d_v <= 0 or rho <= 0:
        raise ConfigError("d_u, d_v and rho must be positive")
    if x.basis.bc is not BCKind.NEUMANN:
        raise ConfigError("the reaction-diffusion stepper expects zero-flux BCs")
    inner = inner or InnerSolver()
    tau = grid.tau
    f_fun, g_fun = kinetics

    op_u, rhs_of = parabolic_operator(x, y, d_u, tau, lumped=lumped)
    op_v, _ = parabolic_operator(x, y, d_v, tau, lumped=lumped)
    stop = inner.stopping(tau)
    solve_u = _step_solver(op_u, _parabolic_precond(x, y, d_u, tau, lumped, inner),
                           stop, inner)
    solve_v = _step_solver(op_v, _parabolic_precond(x, y, d_v, tau, lumped, inner),
                           stop, inner)

    U = np.array(state0[0], dtype=float, copy=True)
    V = np.array(state0[1], dtype=float, copy=True)
    n = grid.n_steps
    increments = np.empty((n, 2))
    iters = np.empty((n, 2), dtype=int)
    times = (1 + np.arange(n)) * tau
    snapshots = []
    steady_step = None
    for k in range(n):
        fv, gv = f_fun(U, V), g_fun(U, V)
        W_u = U + tau * rho * np.asarray(fv)
        _check_finite(W_u, k, "u", (U, V))
        U_new, it_u = solve_u(rhs_of(W_u), U)
        _check_finite(U_new, k, "u", (U, V))
        W_v = V + tau * rho * np.asarray(gv)
        _check_finite(W_v, k, "v", (U, V))
        V_new, it_v = solve_v(rhs_of(W_v), V)
        _check_finite(V_new, k, "v", (U, V))
        increments[k, 0] = np.linalg.norm(U_new - U)
        increments[k, 1] = np.linalg.norm(V_new - V)
        iters[k] = (it_u, it_v)
        U, V = U_new, V_new
        if steady_step is None and np.all(
                increments[k] <= steady_eps * max(np.linalg.norm(U), 1e-300)):
            steady_step = k
        if snapshot_every and ((k + 1) % snapshot_every == 0 or k == n - 1):
            snapshots.append((k + 1, U.copy(), V.copy()))
    return Trajectory(final=(U, V), increments=increments, iterations=iters,
                      times=times, steady_step=steady_step, snapshots=snapshots)


# ---------------------------------------------------------------------------
# vector-form reference trajectories (sparse Kronecker, LU reuse)
# ---------------------------------------------------------------------------

def vector_imex_heat(domain, x, y, d_u, source, u0, grid: TimeGrid,
                     lumped: bool = False) -> Trajectory:
    """Reference heat trajectory in vector form; LU factorized once."""
    inner = InnerSolver(method="direct")
    return imex_euler_heat(domain, x, y, d_u, source, u0, grid,
                           inner=inner, lumped=lumped)


def vector_imex_rds(domain, x, y, d_u, d_v, kinetics, rho, state0,
                    grid: TimeGrid, lumped: bool = False,
                    snapshot_every: int = 0) -> Trajectory:
    """Reference two-species trajectory in vector form; LU factorized once."""
    inner = InnerSolver(method="direct")
    return imex_euler_rds(domain, x, y, d_u, d_v, kinetics, rho, state0,
                          grid, inner=inner, lumped=lumped,
                          snapshot_every=snapshot_every)
