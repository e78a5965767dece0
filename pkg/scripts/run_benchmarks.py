"""Solve every benchmark game and print a summary table.

    python3 scripts/run_benchmarks.py [--out results.json]

For each game: both players' values against a uniform opponent, the Nash
pair with its residuals and deviation check, and the Lyapunov cost bound.
The LQ sweep is compared with its closed form.
"""

import argparse
import json
import time

from rsgame.benchmarks import game_benchmarks, lq_eigenvalue, lq_model
from rsgame.grid import build_grid
from rsgame.hjb import dirichlet_sweep, opponent_strategy, solve_semilinear_eigen
from rsgame.lyapunov import check_lyapunov, cost_bound
from rsgame.nash import find_nash, verify_nash

GRIDS = {1: (4.0, 0.02), 2: (3.0, 0.1)}
# the Lyapunov check needs a grid well beyond the ball K
BOUND_GRIDS = {1: (6.0, 0.05), 2: (4.0, 0.2)}


def run_game(name, model, spec):
    R, h = GRIDS[model.dim]
    g = build_grid(model.dim, R, h)
    t0 = time.perf_counter()
    row = {"game": name, "R": R, "h": h}
    for i in (1, 2):
        opp = opponent_strategy(g, model, i, "uniform")
        row[f"lam{i}_vs_uniform"] = solve_semilinear_eigen(g, model, i, opp).lam
    rep = find_nash(g, model)
    table = verify_nash(g, model, rep, deviations=20, seed=0, raise_on_violation=False)
    row.update(
        nash_lambdas=list(rep.lambdas),
        nash_converged=rep.converged,
        nash_iterations=rep.iterations,
        residuals=list(rep.residuals),
        deviations_ok=all(r["ok"] for r in table),
    )
    gb = build_grid(model.dim, *BOUND_GRIDS[model.dim])
    lyap = check_lyapunov(model, spec, gb, raise_on_failure=False)
    row["lyapunov_ok"] = lyap.ok
    row["cost_bound"] = cost_bound(model, spec, gb, lyap) if lyap.ok else None
    row["seconds"] = time.perf_counter() - t0
    return row


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", help="write the rows as JSON here")
    args = ap.parse_args()

    sweep = dirichlet_sweep(lq_model(), 1, [3.0, 4.0, 5.0, 6.0], "uniform", 600)
    exact = lq_eigenvalue()
    print("LQ sweep (h = R/600):")
    for e in sweep.entries:
        print(f"  R={e['R']:.0f}  lam={e['lam']:.6f}  rel err={abs(e['lam'] - exact) / exact:.2e}")
    print(f"  closed form {exact:.7f}\n")

    rows = []
    print(f"{'game':<14}{'lam1 (unif)':>12}{'lam2 (unif)':>12}{'nash lam1':>11}{'nash lam2':>11}"
          f"{'iters':>6}{'max res':>10}{'dev ok':>7}{'bound':>8}{'sec':>6}")
    for name, (model, spec) in game_benchmarks().items():
        r = run_game(name, model, spec)
        rows.append(r)
        bound = f"{r['cost_bound']:.3f}" if r["cost_bound"] is not None else "n/a"
        print(f"{name:<14}{r['lam1_vs_uniform']:>12.6f}{r['lam2_vs_uniform']:>12.6f}"
              f"{r['nash_lambdas'][0]:>11.6f}{r['nash_lambdas'][1]:>11.6f}{r['nash_iterations']:>6}"
              f"{max(r['residuals']):>10.1e}{str(r['deviations_ok']):>7}{bound:>8}{r['seconds']:>6.1f}")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump({"lq_sweep": sweep.entries, "games": rows}, fh, indent=2, default=float)


if __name__ == "__main__":
    main()
