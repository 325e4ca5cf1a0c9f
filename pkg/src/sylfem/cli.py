"""Command-line drivers: convergence studies, single solves, two-species
pattern simulations, benchmarks, and matrix dumps.

Configuration comes from an optional flat ``key = value`` file plus
``key=value`` overrides on the command line; see the README for the schema.
Exit codes: 0 success, 2 solver failure, 3 configuration error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, SylfemError
from .fem1d import BCKind, build_direction_sets
from .geometry import domain_from_name
from .harness import (RunConfig, config_from_mapping, cylinder_coordinates,
                      metadata, parse_config_file, parse_overrides,
                      run_bench, run_convergence, run_dib,
                      solve_elliptic_once, solve_heat_once, write_coo_csv,
                      write_csv, write_json, write_matrix_csv, write_pgm)
from .models import manufactured_problem
from .operators import elliptic_operator, physical_grid, to_kronecker
from .timestepping import BlowUpError


def _load_config(args) -> RunConfig:
    pairs = {}
    if args.config:
        pairs.update(parse_config_file(args.config))
    pairs.update(parse_overrides(args.overrides))
    if args.out is not None:
        pairs["out"] = args.out
    return config_from_mapping(pairs)


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_convergence(args) -> int:
    """Run a solver over a mesh ladder and tabulate errors and orders."""
    cfg = _load_config(args)
    out = _outdir(cfg)
    result = run_convergence(cfg)
    rows = result["rows"]
    write_csv(out / "convergence.csv",
              ["n", "tau", "l2_error", "observed_order", "iterations"],
              [(r["n"], r["tau"], r["l2_error"], r["observed_order"],
                r["iterations"]) for r in rows])
    domain = manufactured_problem(cfg.problem).domain
    write_json(out / "metadata.json", metadata(
        cfg,
        q_x=rows[-1]["sets"][0].q, q_y=rows[-1]["sets"][1].q,
        problem=cfg.problem, domain=domain.name,
        effective_domain_size=domain.area(),
        solver=cfg.solver, stopping_rule=cfg.stop,
        orders=result["orders"],
        wall_times=[r["wall_time"] for r in rows]))
    for r in rows:
        order = r["observed_order"] if r["observed_order"] != "" else "-"
        print(f"n={r['n']:>5}  error={r['l2_error']:.6e}  order={order}")
    return 0


def cmd_solve(args) -> int:
    """Solve one elliptic or parabolic problem and write the nodal solution."""
    cfg = _load_config(args)
    out = _outdir(cfg)
    problem = manufactured_problem(cfg.problem)
    if problem.kind == "elliptic":
        rec = solve_elliptic_once(problem, cfg.k, cfg.grid_sizes(), cfg)
    else:
        rec = solve_heat_once(problem, cfg.k, cfg.grid_sizes(), cfg.tau, cfg)
    x, y = rec["sets"]
    U = rec["report"].solution if "report" in rec else rec["trajectory"].final[0]
    X, Y = physical_grid(problem.domain, x, y)
    write_matrix_csv(out / "solution.csv", U)
    write_matrix_csv(out / "grid_x.csv", X)
    write_matrix_csv(out / "grid_y.csv", Y)
    report = rec.get("report")
    report_info = {
        "l2_error": rec["l2_error"], "iterations": rec["iterations"],
        "wall_time": rec["wall_time"],
    }
    if report is not None:
        report_info.update({
            "method": report.method, "stop_reason": report.stop_reason,
            "residual_history": list(report.residual_history),
        })
    write_json(out / "report.json", metadata(
        cfg, q_x=x.q, q_y=y.q, problem=cfg.problem,
        domain=problem.domain.name,
        effective_domain_size=problem.domain.area(),
        solver=cfg.solver, stopping_rule=cfg.stop, **report_info))
    print(f"solved {cfg.problem}: l2_error={rec['l2_error']:.6e} "
          f"iterations={rec['iterations']}")
    return 0


def _write_dib_outputs(cfg, out, domain, params, sets, traj, grid,
                       effective_size, blowup=None) -> None:
    x, y = sets
    rows = []
    for k in range(len(traj.times)):
        rows.append((k + 1, (k + 1) * cfg.tau, traj.increments[k, 0],
                     traj.increments[k, 1], traj.iterations[k, 0],
                     traj.iterations[k, 1]))
    write_csv(out / "metrics.csv",
              ["step", "time", "increment_u", "increment_v",
               "pcg_iters_u", "pcg_iters_v"], rows)
    for step, eta, _theta in traj.snapshots:
        write_pgm(out / f"eta_{step:06d}.pgm", eta)
    write_pgm(out / "eta_final.pgm", traj.final[0])
    write_pgm(out / "theta_final.pgm", traj.final[1])
    X, Y = physical_grid(domain, x, y)
    prof = domain.profile
    periodic = abs(float(prof(0.0)) - float(prof(1.0))) < 1e-12
    if cfg.cylinder or periodic:
        pts = cylinder_coordinates(domain, X, Y, rho=params.rho)
        write_csv(out / "cylinder.csv", ["x", "y", "z"],
                  [tuple(p) for p in pts])
    note = ""
    if effective_size > 1000 and max(cfg.grid_sizes()) < 200:
        note = ("mesh may under-resolve the intrinsic pattern wavelength "
                "at this effective size; treat the morphology as tentative")
    info = dict(problem="dib", preset=cfg.preset,
                effective_domain_size=effective_size,
                q_x=x.q, q_y=y.q, solver=cfg.solver, stopping_rule="tau",
                n_steps=grid.n_steps, steady_step=traj.steady_step,
                resolution_note=note)
    if blowup is not None:
        info["blow_up"] = {"step": blowup.step, "species": blowup.species}
    write_json(out / "metadata.json", metadata(cfg, **info))


def cmd_simulate_dib(args) -> int:
    """Integrate the two-species pattern model; write metrics and snapshots."""
    cfg = _load_config(args)
    out = _outdir(cfg)
    try:
        result = run_dib(cfg)
    except BlowUpError as exc:
        # keep the last finite state on disk before failing
        eta, _theta = exc.state
        write_pgm(out / "eta_last_good.pgm", np.asarray(eta))
        write_json(out / "metadata.json", metadata(
            cfg, problem="dib", preset=cfg.preset,
            blow_up={"step": exc.step, "species": exc.species}))
        raise
    _write_dib_outputs(cfg, out, result["domain"], result["params"],
                       result["sets"], result["trajectory"], result["grid"],
                       result["effective_size"])
    traj = result["trajectory"]
    print(f"dib {cfg.preset}: {result['grid'].n_steps} steps, "
          f"final increments ({traj.increments[-1, 0]:.3e}, "
          f"{traj.increments[-1, 1]:.3e}), steady_step={traj.steady_step}")
    return 0


def cmd_bench(args) -> int:
    """Time the matrix iteration against the sparse direct reference."""
    cfg = _load_config(args)
    out = _outdir(cfg)
    rows = run_bench(cfg)
    header = ["case", "k", "n", "unknowns", "pcg_iterations", "pcg_time",
              "direct_time", "dense_grid_matrices", "kron_nnz",
              "kron_diagonals", "expected_diagonals"]
    write_csv(out / "bench.csv", header,
              [[r[h] for h in header] for r in rows])
    write_json(out / "metadata.json", metadata(cfg, problem=cfg.problem,
                                               solver="mo-pcg vs direct",
                                               stopping_rule="residual"))
    for r in rows:
        print(f"{r['case']:>16} n={r['n']:>5} pcg={r['pcg_time']:.4f}s "
              f"direct={r['direct_time']:.4f}s")
    return 0


def cmd_dump_matrices(args) -> int:
    """Export the 1D factor matrices and the Kronecker matrix as CSV triplets."""
    cfg = _load_config(args)
    out = _outdir(cfg)
    domain = domain_from_name(cfg.domain or "cap")
    bc = BCKind.NEUMANN if cfg.bc == "neumann" else BCKind.DIRICHLET
    x, y = build_direction_sets(domain, cfg.k, cfg.grid_sizes(), bc,
                                lumped=cfg.lumped or cfg.k == 1)
    for tag, ds in (("x", x), ("y", y)):
        for name, mat in ds.mats.named().items():
            write_coo_csv(out / f"{tag}_{name}.csv", mat)
        if ds.lumped is not None:
            for name, mat in ds.lumped.named().items():
                write_coo_csv(out / f"{tag}_lumped_{name}.csv", mat)
    op, _ = elliptic_operator(x, y, gamma=0.0 if bc is BCKind.DIRICHLET else 1.0,
                              lumped=False)
    for i, (G, H) in enumerate(op.terms):
        write_coo_csv(out / f"term{i}_left.csv", G)
        write_coo_csv(out / f"term{i}_right.csv", H)
    write_coo_csv(out / "kronecker.csv", to_kronecker(op))
    write_json(out / "metadata.json", metadata(
        cfg, problem="dump", q_x=x.q, q_y=y.q, solver="-", stopping_rule="-"))
    print(f"wrote matrices for domain={domain.name or 'custom'} "
          f"k={cfg.k} n={cfg.grid_sizes()} bc={bc.value}")
    return 0


_COMMANDS = {
    "convergence": cmd_convergence,
    "solve": cmd_solve,
    "simulate-dib": cmd_simulate_dib,
    "bench": cmd_bench,
    "dump-matrices": cmd_dump_matrices,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sylfem",
        description="Matrix-oriented FEM solvers for Sylvester-form PDEs")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in _COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("--config", default=None,
                       help="flat key = value configuration file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("overrides", nargs="*",
                       help="key=value overrides of config entries")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except SylfemError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
