"""Nash equilibria in stationary Markov strategies by damped best response.

The best-response map sends (v1, v2) to the pair of minimizing selectors of
the two semi-linear eigenproblems, each solved against the *input*
opponent.  Iterating a convex combination of the current pair and its best
response is a heuristic for the (non-constructive) fixed point; failure to
converge is reported, not raised.

Pure best responses cannot settle where an equilibrium mixes.  With
``adaptive`` on, each node's step (in sup norm) is capped once its best
response flips back to an action it already had.  The cap halves on every
further flip, which bisects toward the indifferent mixture, and doubles
while the best response stays put.  Mass on actions outside the node's
last two best responses still moves at rate omega.  ``adaptive=False`` gives the plain damped iteration.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .eigen import EigenPair, principal_eigenpair
from .grid import Grid, discretizer
from .hjb import SemilinearSolveReport, SolverOptions, solve_semilinear_eigen
from .model import GameModel, MarkovStrategy

logger = logging.getLogger(__name__)

# step-cap control at nodes whose best response flips back and forth
_SHRINK, _GROW, _STREAK = 2.0, 2.0, 2


class NashViolation(RuntimeError):
    def __init__(self, message: str, table: list[dict]):
        super().__init__(message)
        self.table = table


@dataclass
class NashOptions:
    omega: float = 0.5
    tol_strategy: float = 1e-8
    tol_res: float = 1e-6
    tol_dev: float = 1e-8
    max_iter: int = 200
    seed: int = 0
    init: str = "uniform"  # or "random"
    polish: bool = True
    adaptive: bool = True  # per-node step caps where the best response flips back
    threads: int = 1
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if not 0 < self.omega <= 1:
            raise ValueError("damping omega must lie in (0, 1]")


@dataclass
class NashReport:
    v1: MarkovStrategy
    v2: MarkovStrategy
    eig1: EigenPair
    eig2: EigenPair
    residuals: tuple[float, float]
    semilinear_lambdas: tuple[float, float]
    trace: list[dict]
    converged: bool
    cycle_detected: bool
    polished: bool = False
    deviations: list[dict] = field(default_factory=list)

    @property
    def lambdas(self) -> tuple[float, float]:
        return (self.eig1.lam, self.eig2.lam)

    @property
    def iterations(self) -> int:
        return len(self.trace)


def best_response_map(
    grid: Grid,
    model: GameModel,
    v1: MarkovStrategy,
    v2: MarkovStrategy,
    opts: NashOptions | None = None,
    warm: tuple | None = None,
) -> tuple[MarkovStrategy, MarkovStrategy, tuple[SemilinearSolveReport, SemilinearSolveReport]]:
    """Simultaneous best responses to the input pair."""
    opts = opts or NashOptions()
    warm = warm or (None, None)

    def solve(i):
        opponent = v2 if i == 1 else v1
        return solve_semilinear_eigen(grid, model, i, opponent, opts.solver, warm[i - 1])

    if opts.threads != 1:
        with ThreadPoolExecutor(max_workers=2) as pool:
            rep1, rep2 = pool.map(solve, (1, 2))
    else:
        rep1, rep2 = solve(1), solve(2)
    return rep1.strategy, rep2.strategy, (rep1, rep2)


def frozen_eigenpair(grid, model, i, v1, v2, solver: SolverOptions | None = None) -> EigenPair:
    solver = solver or SolverOptions()
    M = discretizer(grid, model).matrix(i, v1, v2)
    return principal_eigenpair(M, grid.origin_interior, solver.tol_eig, solver.max_eig_iter, solver.method)


def hjb_residual(grid: Grid, model: GameModel, v1, v2, eigenpair: EigenPair, i: int) -> float:
    """sup_x |min_u H_i(x, u) - lam psi(x)| / max psi."""
    psi = eigenpair.psi
    opponent = v2 if i == 1 else v1
    H = discretizer(grid, model).hamiltonian(i, opponent, psi)
    return float(np.max(np.abs(H.min(axis=0) - eigenpair.lam * psi)) / np.max(psi))


def _initial(grid, model, opts: NashOptions):
    if opts.init == "uniform":
        return tuple(MarkovStrategy.uniform(p, grid, model.n_actions(p)) for p in (1, 2))
    if opts.init == "random":
        rng = np.random.default_rng(opts.seed)
        out = []
        for p in (1, 2):
            w = rng.random((grid.n_nodes, model.n_actions(p))) + 1e-3
            out.append(MarkovStrategy(p, grid.key, w / w.sum(axis=1, keepdims=True)))
        return tuple(out)
    raise ValueError(f"unknown init {opts.init!r}")


def _check_pair(grid, model, v1, v2, opts: NashOptions):
    eigs = tuple(frozen_eigenpair(grid, model, i, v1, v2, opts.solver) for i in (1, 2))
    res = tuple(hjb_residual(grid, model, v1, v2, eigs[i - 1], i) for i in (1, 2))
    return eigs, res


def find_nash(
    grid: Grid,
    model: GameModel,
    opts: NashOptions | None = None,
    init: tuple[MarkovStrategy, MarkovStrategy] | None = None,
) -> NashReport:
    opts = opts or NashOptions()
    v1, v2 = init if init is not None else _initial(grid, model, opts)
    trace: list[dict] = []
    seen: dict[tuple, int] = {}
    prev_key = None
    cap = [np.full(grid.n_nodes, np.inf) for _ in (1, 2)]  # sup-norm step caps
    last_step = [np.zeros(grid.n_nodes) for _ in (1, 2)]
    streak = [np.zeros(grid.n_nodes, dtype=int) for _ in (1, 2)]
    seen_act = [np.zeros((grid.n_nodes, model.n_actions(p)), dtype=bool) for p in (1, 2)]
    prev_act: list = [None, None]
    partner: list = [None, None]
    cycle = False
    converged = False
    polished = False
    warm = (None, None)
    reps = None
    for k in range(1, opts.max_iter + 1):
        b1, b2, reps = best_response_map(grid, model, v1, v2, opts, warm)
        warm = (b1, b2)
        new = []
        for p, (v, b) in enumerate(((v1, b1), (v2, b2))):
            probs = v.probs
            if opts.adaptive:
                act = b.actions()
                rows = np.arange(act.size)
                if prev_act[p] is not None:
                    # back to an action this node already tried: bisect towards the indifference point
                    back = (act != prev_act[p]) & seen_act[p][rows, act]
                    cap[p][back] = last_step[p][back] / _SHRINK
                    streak[p] = np.where(act == prev_act[p], streak[p] + 1, 0)
                    # a persisting best response lets a stalled node speed up again
                    cap[p][streak[p] >= _STREAK] *= _GROW
                    switched = act != prev_act[p]
                    partner[p][switched] = prev_act[p][switched]
                    # mass off the last two distinct best responses moves at the full rate
                    off = np.ones_like(probs, dtype=bool)
                    off[rows, act] = False
                    off[rows, partner[p]] = False
                    moved = opts.omega * np.where(off, probs, 0.0)
                    probs = probs - moved
                    probs[rows, act] += moved.sum(axis=1)
                else:
                    partner[p] = act.copy()
                seen_act[p][rows, act] = True
                prev_act[p] = act
            dist = np.max(np.abs(b.probs - probs), axis=1)
            with np.errstate(divide="ignore", invalid="ignore"):
                w = np.where(dist > 0, np.minimum(opts.omega, cap[p] / dist), opts.omega)
            last_step[p] = w * dist
            w = w[:, None]
            new.append(MarkovStrategy(v.player, v.grid_key, (1 - w) * probs + w * b.probs))
        n1, n2 = new
        change = max(n1.distance(v1), n2.distance(v2))
        trace.append(
            {
                "iteration": k,
                "lam1": reps[0].lam,
                "lam2": reps[1].lam,
                "change": change,
                "step_cap_min": float(min(cap[0].min(), cap[1].min())),
                "policy_iterations": [len(reps[0].lambda_history), len(reps[1].lambda_history)],
            }
        )
        # a cycle: the (lam1, lam2) pair returns after having moved away
        key = (round(reps[0].lam * 1e9), round(reps[1].lam * 1e9))
        if key != prev_key and key in seen:
            cycle = True
        seen.setdefault(key, k)
        prev_key = key
        v1, v2 = n1, n2
        if change <= opts.tol_strategy:
            cand, cand_reps, pol = (v1, v2), None, False
            if opts.polish and change > 0:
                c1, c2, creps = best_response_map(grid, model, b1, b2, opts, warm)
                if np.array_equal(c1.probs, b1.probs) and np.array_equal(c2.probs, b2.probs):
                    cand, cand_reps, pol = (b1, b2), creps, True
            eigs, res = _check_pair(grid, model, *cand, opts)
            if max(res) <= opts.tol_res:
                (v1, v2), converged, polished = cand, True, pol
                if cand_reps is not None:
                    reps = cand_reps
                break
            # small steps but not yet an equilibrium: keep going, capped nodes regrow
        if cycle and opts.omega == 1 and not opts.adaptive:
            break

    if not converged:
        eigs, res = _check_pair(grid, model, v1, v2, opts)
    if not (polished or trace[-1]["change"] == 0):
        # semi-linear values at the returned pair
        _, _, reps = best_response_map(grid, model, v1, v2, opts, warm)
    eig1, eig2 = eigs
    return NashReport(
        v1=v1,
        v2=v2,
        eig1=eig1,
        eig2=eig2,
        residuals=res,
        semilinear_lambdas=(reps[0].lam, reps[1].lam),
        trace=trace,
        converged=converged,
        cycle_detected=cycle,
        polished=polished,
    )


def random_deviations(grid: Grid, model: GameModel, player: int, count: int, rng) -> list[MarkovStrategy]:
    m = model.n_actions(player)
    return [MarkovStrategy.pure(player, grid, m, rng.integers(0, m, grid.n_nodes)) for _ in range(count)]


def verify_nash(
    grid: Grid,
    model: GameModel,
    report: NashReport,
    deviations: int | list[MarkovStrategy] = 20,
    seed: int = 0,
    tol_dev: float = 1e-8,
    solver: SolverOptions | None = None,
    raise_on_violation: bool = True,
) -> list[dict]:
    """Unilateral-deviation table from frozen-pair principal eigenvalues.

    An integer asks for that many seeded random Dirac deviations per player;
    the equilibrium strategy itself is always the first row for each player.
    """
    if isinstance(deviations, int):
        rng = np.random.default_rng(seed)
        devs = {p: random_deviations(grid, model, p, deviations, rng) for p in (1, 2)}
    else:
        devs = {p: [d for d in deviations if d.player == p] for p in (1, 2)}
    eq = {1: report.v1, 2: report.v2}
    lam_eq = {1: report.eig1.lam, 2: report.eig2.lam}
    table = []
    for p in (1, 2):
        for k, dev in enumerate([eq[p]] + devs[p]):
            v1, v2 = (dev, report.v2) if p == 1 else (report.v1, dev)
            lam = frozen_eigenpair(grid, model, p, v1, v2, solver).lam
            margin = lam - lam_eq[p]
            table.append(
                {
                    "player": p,
                    "id": "equilibrium" if k == 0 else f"random-{k - 1}",
                    "lambda": lam,
                    "lambda_eq": lam_eq[p],
                    "margin": margin,
                    "ok": bool(margin >= -tol_dev),
                }
            )
    report.deviations = table
    bad = [row for row in table if not row["ok"]]
    if bad and raise_on_violation:
        worst = min(bad, key=lambda r: r["margin"])
        raise NashViolation(
            f"{len(bad)} deviation(s) lower the cost; worst: player {worst['player']} "
            f"{worst['id']} margin {worst['margin']:.3e}",
            table,
        )
    return table
