"""Command line entry point: ``rsg <command> --config <path> --out <dir> [--seed N] [--threads N]``.

Exit codes: 0 success, 2 reported non-convergence, 1 errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime as _dt
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .eigen import EigenError, NoConvergence
from .exprlang import parse
from .grid import build_grid
from .hjb import MonotonicityViolation, SolverOptions, dirichlet_sweep, opponent_strategy, solve_semilinear_eigen
from .lyapunov import LyapunovSpec, check_lyapunov, cost_bound, psi_over_V
from .model import MarkovStrategy
from .nash import NashOptions, find_nash, frozen_eigenpair, verify_nash
from .report import COMMANDS, SCHEMA_VERSION, write_psi_csv, write_report, write_strategy_csv
from .simulate import SimConfig, SimulationError, TooManyCapped, check_stochastic_rep, estimate_rho

logger = logging.getLogger("rsgame")

USAGE = "rsg {" + ",".join(COMMANDS) + "} --config PATH --out DIR [--seed N] [--threads N]"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rsg", usage=USAGE, description="Risk-sensitive ergodic game solver.")
    p.add_argument("command")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    return p


# -- command bodies; each returns (status, result, files) ---------------------


def _solver_opts(cfg: RunConfig) -> SolverOptions:
    s = cfg.solver
    return SolverOptions(s.tol_eig, s.tol_lambda, s.max_policy_iter, None, s.method)


def _nash_opts(cfg: RunConfig) -> NashOptions:
    s = cfg.solver
    return NashOptions(
        omega=s.omega,
        tol_strategy=s.tol_strategy,
        tol_res=s.tol_res,
        tol_dev=s.tol_dev,
        max_iter=s.max_iter,
        seed=s.seed,
        init=s.init,
        adaptive=s.adaptive,
        threads=cfg.effective_threads(),
        solver=_solver_opts(cfg),
    )


def _grid(cfg: RunConfig):
    return build_grid(cfg.model.dim, cfg.grid.R, cfg.grid.spacing(cfg.grid.R))


def _eigen(cfg: RunConfig, out: Path):
    grid = _grid(cfg)
    i = cfg.solver.player
    opp = opponent_strategy(grid, cfg.model, i, cfg.solver.opponent)
    rep = solve_semilinear_eigen(grid, cfg.model, i, opp, _solver_opts(cfg))
    ep = rep.eigenpair
    write_psi_csv(out / "psi.csv", grid, ep.psi)
    write_strategy_csv(out / f"strategy_player{i}.csv", grid, cfg.model, rep.strategy)
    result = {
        "player": i,
        "R": grid.R,
        "h": grid.h,
        "n_interior": grid.n_interior,
        "lam": ep.lam,
        "lo": ep.lo,
        "hi": ep.hi,
        "eigen_residual": ep.residual,
        "eigen_iterations": ep.iterations,
        "lambda_history": rep.lambda_history,
        "termination": rep.termination,
        "selector_gap": rep.selector_gap,
    }
    status = "ok" if rep.converged else "not-converged"
    return status, result, ["psi.csv", f"strategy_player{i}.csv"]


def _sweep(cfg: RunConfig, out: Path):
    g = cfg.grid
    rule = (lambda R, h=g.h: h) if g.h is not None else (lambda R, n=g.h_divisor: R / n)
    i = cfg.solver.player
    res = dirichlet_sweep(cfg.model, i, g.sweep_radii(), cfg.solver.opponent, rule, _solver_opts(cfg))
    result = {
        "player": i,
        "entries": res.entries,
        "radii": res.radii,
        "lambdas": res.lambdas,
        "lam_inf": res.lam_inf,
    }
    ok = all(e["termination"] != "max-iter" for e in res.entries)
    return ("ok" if ok else "not-converged"), result, []


def _nash_files(out: Path, grid, model, rep) -> list[str]:
    files = []
    for p, (s, ep) in enumerate(((rep.v1, rep.eig1), (rep.v2, rep.eig2)), start=1):
        write_psi_csv(out / f"psi_player{p}.csv", grid, ep.psi)
        write_strategy_csv(out / f"strategy_player{p}.csv", grid, model, s)
        files += [f"psi_player{p}.csv", f"strategy_player{p}.csv"]
    return files


def _nash_result(rep) -> dict:
    return {
        "lambdas": list(rep.lambdas),
        "semilinear_lambdas": list(rep.semilinear_lambdas),
        "residuals": list(rep.residuals),
        "converged": rep.converged,
        "cycle_detected": rep.cycle_detected,
        "polished": rep.polished,
        "iterations": rep.iterations,
        "trace": rep.trace,
    }


def _nash(cfg: RunConfig, out: Path):
    grid = _grid(cfg)
    opts = _nash_opts(cfg)
    rep = find_nash(grid, cfg.model, opts)
    table = verify_nash(
        grid, cfg.model, rep, cfg.solver.deviations, cfg.solver.seed, cfg.solver.tol_dev, opts.solver,
        raise_on_violation=False,
    )
    result = _nash_result(rep)
    result["deviations"] = table
    result["verify_ok"] = all(r["ok"] for r in table)
    files = _nash_files(out, grid, cfg.model, rep)
    if not rep.converged:
        return "not-converged", result, files
    if not result["verify_ok"]:
        return "failed", result, files
    return "ok", result, files


def _simulate(cfg: RunConfig, out: Path):
    grid = _grid(cfg)
    sim = cfg.simulate
    model = cfg.model
    status = "ok"
    result: dict = {"strategies": sim.strategies}
    files: list[str] = []
    if sim.strategies == "nash":
        rep = find_nash(grid, model, _nash_opts(cfg))
        v1, v2 = rep.v1, rep.v2
        eigs = {1: rep.eig1, 2: rep.eig2}
        result["nash_converged"] = rep.converged
        if not rep.converged:
            status = "not-converged"
    else:
        v1 = MarkovStrategy.uniform(1, grid, model.n_actions(1))
        v2 = MarkovStrategy.uniform(2, grid, model.n_actions(2))
        eigs = {i: frozen_eigenpair(grid, model, i, v1, v2, _solver_opts(cfg)) for i in (1, 2)}
    sc = SimConfig(dt=sim.dt, T=sim.T, N=sim.N, seed=sim.seed, R_clamp=sim.R_clamp)
    estimates = {}
    for i in sim.players:
        dump = None
        if sim.dump_paths:
            dump = out / f"paths_player{i}.csv"
            files.append(dump.name)
        est = estimate_rho(model, i, v1, v2, sim.x0, sc, grid, dump=dump)
        row = est.summary()
        row["eigenvalue"] = eigs[i].lam
        estimates[f"player{i}"] = row
    result["estimates"] = estimates
    if sim.representation is not None:
        r = sim.representation
        try:
            res = check_stochastic_rep(model, v1, v2, r.player, eigs[r.player], r.r_ball, r.x0, sc, grid)
            result["representation"] = {
                "player": r.player,
                "r_ball": r.r_ball,
                "x0": r.x0,
                "lhs": res.lhs,
                "rhs": res.rhs,
                "stderr": res.stderr,
                "rel_error": res.rel_error,
                "capped": res.capped,
                "n_used": res.n_used,
            }
        except TooManyCapped as err:
            result["representation"] = {"error": str(err), "capped": err.capped}
            status = "not-converged"
    return status, result, files


def _lyapunov(cfg: RunConfig, out: Path):
    if cfg.lyapunov is None:
        raise ConfigError("lyapunov", "check-lyapunov needs a [lyapunov] section")
    L = cfg.lyapunov
    spec = LyapunovSpec(
        parse(L.V, cfg.model.dim, 0), L.case, parse(L.ell, cfg.model.dim, 0) if L.ell else None, L.k_radius, L.delta
    )
    grid = _grid(cfg)
    rep = check_lyapunov(cfg.model, spec, grid, L.h_chk, raise_on_failure=False)
    result = dataclasses.asdict(rep)
    result["surrogate_label"] = "surrogate check"
    if rep.ok:
        bound = cost_bound(cfg.model, spec, grid, rep)
        i = cfg.solver.player
        opp = opponent_strategy(grid, cfg.model, i, cfg.solver.opponent)
        sol = solve_semilinear_eigen(grid, cfg.model, i, opp, _solver_opts(cfg))
        result.update(
            {
                "cost_bound": bound,
                "player": i,
                "lam": sol.lam,
                "lam_within_bound": bool(sol.lam <= bound + 1e-6),
                "psi_over_V_max": psi_over_V(grid, spec, sol.eigenpair.psi),
            }
        )
    return ("ok" if rep.ok else "failed"), result, []


_COMMANDS = {
    "eigen": _eigen,
    "sweep": _sweep,
    "nash": _nash,
    "simulate": _simulate,
    "check-lyapunov": _lyapunov,
}
_EXIT = {"ok": 0, "not-converged": 2, "failed": 1}


def run(command: str, config: RunConfig, out_dir) -> int:
    """Run one command and write report.json, metadata.json and CSV tables into ``out_dir``."""
    if command not in _COMMANDS:
        print(f"unknown command {command!r}\nusage: {USAGE}", file=sys.stderr)
        return 1
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = _dt.datetime.now(_dt.timezone.utc)
    t0 = time.perf_counter()
    error = None
    try:
        status, result, files = _COMMANDS[command](config, out)
    except (NoConvergence, TooManyCapped) as err:
        status, result, files, error = "not-converged", {}, [], str(err)
    except (ConfigError, EigenError, MonotonicityViolation, SimulationError, ValueError, ArithmeticError) as err:
        status, result, files, error = "failed", {}, [], f"{type(err).__name__}: {err}"
    code = _EXIT[status]
    report = {
        "schema": SCHEMA_VERSION,
        "command": command,
        "status": status,
        "exit_code": code,
        "error": error,
        "config": config.to_dict(),
        "result": result,
        "files": sorted(files),
    }
    write_report(out / "report.json", report)
    meta = {
        "started": started.isoformat(),
        "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "seconds": time.perf_counter() - t0,
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "config_path": config.source,
        "command": command,
    }
    (out / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    if error:
        print(error, file=sys.stderr)
    return code


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = _parser().parse_args(argv)
    except _UsageError as err:
        print(f"error: {err}\nusage: {USAGE}", file=sys.stderr)
        return 1
    if args.command not in _COMMANDS:
        print(f"error: unknown command {args.command!r}\nusage: {USAGE}", file=sys.stderr)
        return 1
    try:
        cfg = load_config(args.config)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1
    if args.seed is not None:
        cfg.solver.seed = args.seed
        cfg.simulate.seed = args.seed
    if args.threads is not None:
        if args.threads < 0:
            print("error: --threads must be >= 0", file=sys.stderr)
            return 1
        cfg.solver.threads = args.threads
    return run(args.command, cfg, args.out)


if __name__ == "__main__":
    sys.exit(main())
