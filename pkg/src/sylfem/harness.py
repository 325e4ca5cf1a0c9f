"""Run configuration, experiment drivers, and artifact writers.

Backs every CLI subcommand: configs come from a flat ``key = value`` file
plus overrides, drivers assemble/solve/integrate and return plain records,
and writers emit RFC-4180 CSV (shortest round-trip floats), JSON metadata,
and 16-bit binary PGM snapshots.  Outputs other than wall-clock timings are
byte-deterministic for a fixed (config, seed).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .exceptions import ConfigError, SolverError
from .fem1d import BCKind, build_direction_sets
from .geometry import DomainSpec, domain_from_name, wrap_to_cylinder
from .models import (InitialData, ManufacturedProblem, dib_kinetics,
                     dib_presets, effective_domain_size, initial_fields,
                     manufactured_problem)
from .norms import exact_nodal, l2_error, observed_orders
from .operators import (SylvesterOperator, elliptic_operator,
                        full_node_grid, interior_values, to_kronecker)
from .solvers import (make_preconditioner, mo_pcg, reference_increment,
                      relative_residual, solve_direct, solve_reduced,
                      solve_reduced_closed_form)
from .timestepping import InnerSolver, TimeGrid, imex_euler_heat, imex_euler_rds

#: desk-scale defaults; the full-scale runs are opt-in
MAX_CONVERGENCE_N = 192
MAX_ORACLE_N = 96
MAX_DIB_STEPS = 2000

_DIB_PARAM_KEYS = ("alpha", "gamma_k", "A1", "A2", "B", "C", "D",
                   "k2", "k3", "d_theta")


@dataclass
class RunConfig:
    """Flat, serializable description of one run."""

    problem: str = "poisson_square"
    domain: str = ""                 # defaults to the problem's domain
    k: int = 1
    n: int = 24
    n_x: int = 0                     # 0: use n
    n_y: int = 0
    n_list: tuple[int, ...] = ()     # convergence ladder; empty: doubling from n
    levels: int = 3
    bc: str = ""
    lumped: bool = False
    solver: str = "reduced"          # reduced | reduced-closed | mo-pcg | direct
    precond: str = "auto"            # auto | identity | square | xnormal | parabolic
    stop: str = "increment"          # mo-pcg elliptic rule: increment | residual
    tol: float = 1e-10
    max_iter: int = 1000
    metric: str = "nodal"            # nodal | exact
    tau: float = 0.01
    t_final: float = 1.0
    preset: str = "spots_worms"
    rho: float = 400.0
    amplitude: float = 1e-4
    seed: int = 20240
    steps: int = 0                   # simulate-dib: explicit step count
    snapshot_every: int = 0
    steady_eps: float = 1e-8
    cylinder: bool = False
    full_paper_run: bool = False
    jobs: int = 1
    out: str = "out"
    dib_overrides: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["n_list"] = list(self.n_list)
        return d

    def grid_sizes(self) -> tuple[int, int]:
        nx = self.n_x or self.n
        ny = self.n_y or self.n
        return nx, ny

    def ladder(self) -> tuple[int, ...]:
        if self.n_list:
            return self.n_list
        return tuple(self.n * 2 ** i for i in range(self.levels))


_BOOL_STRINGS = {"true": True, "1": True, "yes": True, "on": True,
                 "false": False, "0": False, "no": False, "off": False}


def _coerce(name: str, raw: str, target_type):
    raw = raw.strip()
    try:
        if target_type is bool:
            return _BOOL_STRINGS[raw.lower()]
        if target_type is int:
            return int(raw)
        if target_type is float:
            return float(raw)
        if target_type == tuple[int, ...]:
            if not raw:
                return ()
            return tuple(int(v) for v in raw.replace(",", " ").split())
        return raw
    except (ValueError, KeyError):
        raise ConfigError(f"cannot parse config value {name} = {raw!r}") from None


def config_from_mapping(pairs: dict) -> RunConfig:
    """Build a RunConfig from string key/value pairs, with type coercion.

    Unknown keys matching kinetics parameter names are collected as preset
    overrides; anything else is rejected.
    """
    fields = {f.name: f.type for f in dataclasses.fields(RunConfig)}
    types = {"problem": str, "domain": str, "k": int, "n": int, "n_x": int,
             "n_y": int, "n_list": tuple[int, ...], "levels": int, "bc": str,
             "lumped": bool, "solver": str, "precond": str, "stop": str,
             "tol": float, "max_iter": int, "metric": str, "tau": float,
             "t_final": float, "preset": str, "rho": float,
             "amplitude": float, "seed": int, "steps": int,
             "snapshot_every": int, "steady_eps": float, "cylinder": bool,
             "full_paper_run": bool, "jobs": int, "out": str}
    kwargs = {}
    overrides = {}
    for key, raw in pairs.items():
        name = key.replace("-", "_")
        if name in types:
            kwargs[name] = _coerce(name, str(raw), types[name])
        elif key in _DIB_PARAM_KEYS:
            overrides[key] = _coerce(key, str(raw), float)
        else:
            raise ConfigError(f"unknown config key '{key}'")
    assert set(types) <= set(fields)
    cfg = RunConfig(**kwargs)
    cfg.dib_overrides.update(overrides)
    return cfg


def parse_config_file(path) -> dict:
    """Flat key = value file; '#' starts a comment, blank lines ignored."""
    pairs = {}
    for ln, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{ln}: expected 'key = value'")
        key, val = stripped.split("=", 1)
        pairs[key.strip()] = val.strip()
    return pairs


def parse_overrides(items) -> dict:
    pairs = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"override '{item}' is not of the form key=value")
        key, val = item.split("=", 1)
        pairs[key.strip()] = val.strip()
    return pairs


def build_identifier(cfg: RunConfig) -> str:
    blob = json.dumps(cfg.to_dict(), sort_keys=True).encode()
    return f"sylfem-{__version__}+cfg.{hashlib.sha1(blob).hexdigest()[:12]}"


# ---------------------------------------------------------------------------
# elliptic driver
# ---------------------------------------------------------------------------

def _elliptic_pieces(problem: ManufacturedProblem, k: int, n, lumped: bool):
    sets = build_direction_sets(problem.domain, k, n, problem.bc, lumped=lumped)
    x, y = sets
    op, rhs_of = elliptic_operator(x, y, problem.gamma, lumped=lumped)
    X, Y = full_node_grid(problem.domain, x, y)
    F = np.asarray(problem.source(X, Y), dtype=float)
    return x, y, op, rhs_of(F), F


def _auto_elliptic_precond(problem, x, y, lumped, choice):
    kind = choice
    if choice == "auto":
        if x.basis.bc is BCKind.NEUMANN:
            # the single-term stiffness preconditioners are singular here
            kind = "identity"
        elif problem.domain.kind.value == "square":
            kind = "elliptic_square"
        else:
            kind = "elliptic_xnormal"
    elif choice in ("square", "xnormal"):
        kind = f"elliptic_{choice}"
    if kind == "identity":
        return make_preconditioner("identity", x, y)
    return make_preconditioner(kind, x, y, lumped=lumped and kind == "elliptic_xnormal")


def solve_elliptic_once(problem: ManufacturedProblem, k: int, n,
                        cfg: RunConfig):
    """One manufactured elliptic solve; returns a result record dict."""
    lumped = cfg.lumped
    x, y, op, rhs, F = _elliptic_pieces(problem, k, n, lumped)
    u_exact = exact_nodal(problem.domain, x, y, problem.exact)
    solver = cfg.solver
    if solver == "reduced":
        report = solve_reduced(op, rhs)
    elif solver == "reduced-closed":
        if k != 1 or problem.domain.kind.value != "square" \
                or problem.bc is not BCKind.DIRICHLET:
            raise ConfigError("reduced-closed needs degree 1, Dirichlet, square")
        report = solve_reduced_closed_form(problem.gamma,
                                           interior_values(F, x, y),
                                           n if np.isscalar(n) else n[0])
    elif solver == "direct":
        report = solve_direct(op, rhs)
    elif solver == "mo-pcg":
        precond = _auto_elliptic_precond(problem, x, y, lumped, cfg.precond)
        if cfg.stop == "increment":
            ref = solve_reduced(op, rhs) if len(op.terms) == 2 \
                else solve_direct(op, rhs)
            # floor keeps the rule meaningful when the FEM space contains
            # the exact solution
            err_v = max(np.linalg.norm(ref.solution - u_exact), 1e-13)
            stop = reference_increment(err_v)
        else:
            stop = relative_residual(cfg.tol)
        report = mo_pcg(op, rhs, precond=precond, stop=stop,
                        max_iter=cfg.max_iter)
        if report.stop_reason == "max_iter":
            raise SolverError(f"mo-pcg did not converge at n={n}, k={k}")
    else:
        raise ConfigError(f"unknown solver '{solver}'")
    err = l2_error(problem.domain, x, y, report.solution, problem.exact,
                   metric=cfg.metric)
    return {"n": n, "k": k, "tau": "", "l2_error": err,
            "iterations": report.iterations, "wall_time": report.wall_time,
            "report": report, "sets": (x, y)}


# ---------------------------------------------------------------------------
# parabolic driver
# ---------------------------------------------------------------------------

def solve_heat_once(problem: ManufacturedProblem, k: int, n, tau: float,
                    cfg: RunConfig):
    """Integrate one manufactured heat run to t_final and measure the error."""
    lumped = cfg.lumped
    x, y = build_direction_sets(problem.domain, k, n, problem.bc, lumped=lumped)
    u0 = exact_nodal(problem.domain, x, y, problem.exact, t=0.0)
    grid = TimeGrid(tau=tau, t_final=problem.t_final)
    if cfg.solver == "direct":
        inner = InnerSolver(method="direct")
    else:
        inner = InnerSolver(method="mo-pcg", precond=cfg.precond,
                            rule="tau", max_iter=cfg.max_iter)
    t0 = time.perf_counter()
    traj = imex_euler_heat(problem.domain, x, y, problem.d_u, problem.source,
                           u0, grid, inner=inner, lumped=lumped)
    wall = time.perf_counter() - t0
    err = l2_error(problem.domain, x, y, traj.final[0], problem.exact,
                   t=grid.n_steps * tau, metric=cfg.metric)
    return {"n": n, "k": k, "tau": tau, "l2_error": err,
            "iterations": int(np.max(traj.iterations)) if traj.iterations.size else 0,
            "wall_time": wall, "trajectory": traj, "sets": (x, y)}


def heat_tau_ladder(base_tau: float, k: int, levels: int) -> list[float]:
    """Timesteps coupled to mesh halving so both error parts shrink alike."""
    return [base_tau * 2.0 ** (-(k + 1) * i) for i in range(levels)]


# ---------------------------------------------------------------------------
# convergence command
# ---------------------------------------------------------------------------

def run_convergence(cfg: RunConfig) -> dict:
    problem = manufactured_problem(cfg.problem)
    ladder = cfg.ladder()
    if max(ladder) > MAX_CONVERGENCE_N and not cfg.full_paper_run:
        raise ConfigError(
            f"ladder exceeds the desk guard N <= {MAX_CONVERGENCE_N}; "
            "pass full_paper_run=true to override")
    if problem.kind == "elliptic":
        def once(i_n):
            _, n = i_n
            return solve_elliptic_once(problem, cfg.k, n, cfg)
    else:
        taus = heat_tau_ladder(cfg.tau, cfg.k, len(ladder))

        def once(i_n):
            i, n = i_n
            return solve_heat_once(problem, cfg.k, n, taus[i], cfg)
    rows = _map_ordered(once, list(enumerate(ladder)), cfg.jobs)
    errors = [r["l2_error"] for r in rows]
    orders = [""] + [float(o) for o in observed_orders(errors)]
    for r, o in zip(rows, orders):
        r["observed_order"] = o
    return {"rows": rows, "errors": errors,
            "orders": [o for o in orders if o != ""]}


def _map_ordered(fn, items, jobs):
    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


# ---------------------------------------------------------------------------
# DIB simulation command
# ---------------------------------------------------------------------------

def dib_setup(cfg: RunConfig):
    """Domain, parameters, sets and initial state of a two-species run."""
    domain = domain_from_name(cfg.domain or "cap")
    params = dib_presets(cfg.preset).replace(rho=cfg.rho, **cfg.dib_overrides)
    nx, ny = cfg.grid_sizes()
    x, y = build_direction_sets(domain, cfg.k, (nx, ny), BCKind.NEUMANN,
                                lumped=cfg.lumped)
    eta0, theta0 = initial_fields((y.q, x.q),
                                  InitialData(amplitude=cfg.amplitude,
                                              seed=cfg.seed))
    return domain, params, x, y, (eta0, theta0)


def dib_time_grid(cfg: RunConfig) -> TimeGrid:
    """Reference-domain time grid from the rescaled tau / t_final inputs."""
    tau_ref = cfg.tau / cfg.rho
    if cfg.steps:
        return TimeGrid(tau=tau_ref, t_final=cfg.steps * tau_ref)
    return TimeGrid(tau=tau_ref, t_final=cfg.t_final / cfg.rho)


def run_dib(cfg: RunConfig) -> dict:
    domain, params, x, y, state0 = dib_setup(cfg)
    grid = dib_time_grid(cfg)
    if grid.n_steps > MAX_DIB_STEPS and not cfg.full_paper_run:
        raise ConfigError(
            f"{grid.n_steps} steps exceed the desk guard {MAX_DIB_STEPS}; "
            "pass full_paper_run=true for long runs")

    def f(u, v):
        return dib_kinetics(u, v, params)[0]

    def g(u, v):
        return dib_kinetics(u, v, params)[1]

    inner = InnerSolver(method="direct") if cfg.solver == "direct" else \
        InnerSolver(method="mo-pcg", precond=cfg.precond, rule="tau",
                    max_iter=cfg.max_iter)
    traj = imex_euler_rds(domain, x, y, 1.0, params.d_theta, (f, g),
                          params.rho, state0, grid, inner=inner,
                          lumped=cfg.lumped,
                          snapshot_every=cfg.snapshot_every,
                          steady_eps=cfg.steady_eps)
    return {"domain": domain, "params": params, "sets": (x, y),
            "trajectory": traj, "grid": grid,
            "effective_size": effective_domain_size(domain, params.rho)}


# ---------------------------------------------------------------------------
# bench command
# ---------------------------------------------------------------------------

def _count_diagonals(K) -> int:
    coo = K.tocoo()
    return int(np.unique(coo.col - coo.row).size)


def run_bench(cfg: RunConfig) -> list[dict]:
    problem = manufactured_problem(cfg.problem)
    rows = []
    # sanity row: identity operator, both paths trivial
    q = 16
    ident = SylvesterOperator([(np.eye(q), np.eye(q))],
                              symmetric=True, positive_definite=True)
    rhs = np.ones((q, q))
    rep_p = mo_pcg(ident, rhs, stop=relative_residual(1e-12))
    rep_d = solve_direct(ident, rhs)
    rows.append({"case": "identity", "k": "", "n": q, "unknowns": q * q,
                 "pcg_iterations": rep_p.iterations,
                 "pcg_time": rep_p.wall_time, "direct_time": rep_d.wall_time,
                 "dense_grid_matrices": rep_p.diagnostics["dense_grid_matrices"],
                 "kron_nnz": rep_d.diagnostics["nnz"],
                 "kron_diagonals": _count_diagonals(to_kronecker(ident)),
                 "expected_diagonals": 1})
    for n in cfg.ladder():
        if n > MAX_ORACLE_N and not cfg.full_paper_run:
            raise ConfigError(
                f"bench ladder exceeds the oracle guard N <= {MAX_ORACLE_N}")
        x, y, op, rhs, _ = _elliptic_pieces(problem, cfg.k, n, cfg.lumped)
        precond = _auto_elliptic_precond(problem, x, y, cfg.lumped, cfg.precond)
        rep_p = mo_pcg(op, rhs, precond=precond,
                       stop=relative_residual(cfg.tol), max_iter=cfg.max_iter)
        K = to_kronecker(op)
        rep_d = solve_direct(op, rhs)
        rows.append({"case": problem.name, "k": cfg.k, "n": n,
                     "unknowns": op.shape[0] * op.shape[1],
                     "pcg_iterations": rep_p.iterations,
                     "pcg_time": rep_p.wall_time,
                     "direct_time": rep_d.wall_time,
                     "dense_grid_matrices": rep_p.diagnostics["dense_grid_matrices"],
                     "kron_nnz": int(K.nnz),
                     "kron_diagonals": _count_diagonals(K),
                     "expected_diagonals": (2 * cfg.k + 1) ** 2})
    return rows


# ---------------------------------------------------------------------------
# writers
# ---------------------------------------------------------------------------

def fmt(value) -> str:
    """Shortest round-trip text for floats; plain str otherwise."""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path, header, rows) -> None:
    """RFC-4180 CSV with CRLF line endings and '.'-decimal floats."""
    import csv
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_matrix_csv(path, mat) -> None:
    write_csv(path, [f"c{j}" for j in range(mat.shape[1])],
              [list(r) for r in np.asarray(mat)])


def write_coo_csv(path, mat) -> None:
    coo = mat.tocoo() if hasattr(mat, "tocoo") else None
    if coo is None:
        dense = np.asarray(mat)
        r, c = np.nonzero(dense)
        vals = dense[r, c]
    else:
        r, c, vals = coo.row, coo.col, coo.data
    order = np.lexsort((c, r))
    write_csv(path, ["row", "col", "value"],
              [(int(r[i]), int(c[i]), float(vals[i])) for i in order])


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True,
                                     default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")


def write_pgm(path, array) -> None:
    """Binary 16-bit PGM, min-max normalized per frame.

    Frames that are constant up to roundoff map to all zeros instead of
    amplified noise.
    """
    a = np.asarray(array, dtype=float)
    lo, hi = float(np.min(a)), float(np.max(a))
    span = hi - lo
    if span > max(1e-12 * max(abs(hi), abs(lo)), 1e-14):
        scaled = np.round((a - lo) / span * 65535.0)
    else:
        scaled = np.zeros_like(a)
    data = scaled.astype(">u2")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{a.shape[1]} {a.shape[0]}\n65535\n".encode())
        fh.write(data.tobytes())


def metadata(cfg: RunConfig, **extra) -> dict:
    meta = {"config": cfg.to_dict(), "build": build_identifier(cfg),
            "version": __version__}
    meta.update(extra)
    return meta


def cylinder_coordinates(domain: DomainSpec, X, Y, rho: float = 1.0):
    """3D cylinder coordinates of physical nodes, scaled by sqrt(rho)."""
    pts = np.stack([X, Y], axis=-1).reshape(-1, 2)
    return np.sqrt(rho) * wrap_to_cylinder(pts)
