"""Semi-linear principal eigenproblem for one player against a frozen opponent.

Policy iteration on the discrete eigenproblem: freeze the controlled
player's strategy, take the Perron eigenpair of the assembled matrix, then
replace the strategy by a pointwise minimizer of the discrete Hamiltonian
at that eigenvector.  With nonnegative off-diagonals each improvement step
cannot raise the Perron value (Collatz-Wielandt), and there are finitely
many pure strategies, so the loop terminates.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .eigen import EigenPair, principal_eigenpair
from .grid import Grid, build_grid, discretizer, transfer_strategy
from .model import GameModel, MarkovStrategy

logger = logging.getLogger(__name__)

MONOTONE_SLACK = 1e-9


class MonotonicityViolation(RuntimeError):
    pass


@dataclass
class SolverOptions:
    tol_eig: float = 1e-10
    tol_lambda: float = 1e-10
    max_policy_iter: int = 200
    max_eig_iter: int | None = None
    method: str = "noda"


@dataclass
class SemilinearSolveReport:
    eigenpair: EigenPair
    strategy: MarkovStrategy
    lambda_history: list[float]
    termination: str  # "strategy-fixed" | "lambda-stalled" | "max-iter"
    selector_gap: float  # how far the final strategy is from pointwise minimizing, / max psi

    @property
    def lam(self) -> float:
        return self.eigenpair.lam

    @property
    def converged(self) -> bool:
        return self.termination != "max-iter"


def _interior_psi(grid: Grid, psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=float)
    if psi.shape[0] == grid.n_nodes:
        psi = psi[grid.interior_idx]
    return psi


def frozen_pair(player: int, own: MarkovStrategy, opponent: MarkovStrategy):
    return (own, opponent) if player == 1 else (opponent, own)


def improve_strategy(
    grid: Grid, model: GameModel, i: int, opponent: MarkovStrategy, psi
) -> MarkovStrategy:
    """Dirac strategy at the pointwise argmin over player i's pure actions.

    Ties go to the lowest action index; boundary nodes get action 0.
    """
    psi = _interior_psi(grid, psi)
    if not np.all(psi > 0):
        raise ValueError("psi must be positive on interior nodes")
    H = discretizer(grid, model).hamiltonian(i, opponent, psi)
    best = np.zeros(grid.n_nodes, dtype=int)
    best[grid.interior_idx] = np.argmin(H, axis=0)
    return MarkovStrategy.pure(i, grid, model.n_actions(i), best)


def selector_gap(grid, model, i, own: MarkovStrategy, opponent: MarkovStrategy, psi) -> float:
    psi = _interior_psi(grid, psi)
    H = discretizer(grid, model).hamiltonian(i, opponent, psi)
    current = np.einsum("nu,un->n", own.probs[grid.interior_idx], H)
    return float(np.max(current - H.min(axis=0)) / np.max(psi))


def solve_semilinear_eigen(
    grid: Grid,
    model: GameModel,
    i: int,
    opponent: MarkovStrategy,
    opts: SolverOptions | None = None,
    warm_start: MarkovStrategy | None = None,
) -> SemilinearSolveReport:
    """Principal eigenpair of the player-i HJB operator on the box, opponent frozen."""
    opts = opts or SolverOptions()
    disc = discretizer(grid, model)
    own = warm_start if warm_start is not None else MarkovStrategy.uniform(i, grid, model.n_actions(i))
    history: list[float] = []
    psi0 = None
    termination = "max-iter"
    ep = None
    for _ in range(opts.max_policy_iter):
        v1, v2 = frozen_pair(i, own, opponent)
        M = disc.matrix(i, v1, v2)
        ep = principal_eigenpair(
            M, grid.origin_interior, opts.tol_eig, opts.max_eig_iter, opts.method, psi0=psi0
        )
        history.append(ep.lam)
        psi0 = ep.psi
        new = improve_strategy(grid, model, i, opponent, ep.psi)
        if np.array_equal(new.probs, own.probs):
            termination = "strategy-fixed"
            break
        if len(history) > 1 and history[-2] - history[-1] < opts.tol_lambda:
            termination = "lambda-stalled"
            break
        own = new
    else:
        logger.warning("policy iteration hit max_policy_iter=%d", opts.max_policy_iter)
    gap = selector_gap(grid, model, i, own, opponent, ep.psi)
    return SemilinearSolveReport(ep, own, history, termination, gap)


@dataclass
class SweepResult:
    entries: list[dict] = field(default_factory=list)

    @property
    def radii(self) -> list[float]:
        return [e["R"] for e in self.entries]

    @property
    def lambdas(self) -> list[float]:
        return [e["lam"] for e in self.entries]

    @property
    def lam_inf(self) -> float:
        return self.entries[-1]["lam"]


def default_h_rule(R: float) -> float:
    return R / 300


def opponent_strategy(grid: Grid, model: GameModel, i: int, opponent) -> MarkovStrategy:
    j = 2 if i == 1 else 1
    m = model.n_actions(j)
    if opponent is None or opponent == "uniform":
        return MarkovStrategy.uniform(j, grid, m)
    if callable(opponent):
        return opponent(grid)
    if isinstance(opponent, (int, np.integer)):
        return MarkovStrategy.pure(j, grid, m, int(opponent))
    raise TypeError(f"cannot build an opponent strategy from {opponent!r}")


def dirichlet_sweep(
    model: GameModel,
    i: int,
    radii: Sequence[float],
    opponent=None,
    h_rule: Callable[[float], float] | float = default_h_rule,
    opts: SolverOptions | None = None,
    warm_start: bool = True,
    slack: float = MONOTONE_SLACK,
) -> SweepResult:
    """Box eigenvalues lambda_R for increasing R.

    ``opponent`` is None/"uniform", a fixed action index, or a callable
    grid -> MarkovStrategy.  ``h_rule`` maps R to h; a number n means h = R/n.
    """
    radii = [float(r) for r in radii]
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly increasing")
    rule = h_rule if callable(h_rule) else (lambda R, n=float(h_rule): R / n)
    result = SweepResult()
    prev_grid, prev_strategy = None, None
    for R in radii:
        grid = build_grid(model.dim, R, rule(R))
        opp = opponent_strategy(grid, model, i, opponent)
        warm = None
        if warm_start and prev_strategy is not None:
            warm = transfer_strategy(prev_strategy, prev_grid, grid)
        rep = solve_semilinear_eigen(grid, model, i, opp, opts, warm)
        result.entries.append(
            {
                "R": R,
                "h": grid.h,
                "lam": rep.lam,
                "lo": rep.eigenpair.lo,
                "hi": rep.eigenpair.hi,
                "n_interior": grid.n_interior,
                "policy_iterations": len(rep.lambda_history),
                "termination": rep.termination,
            }
        )
        logger.info("sweep R=%g h=%g lambda=%.12g", R, grid.h, rep.lam)
        prev_grid, prev_strategy = grid, rep.strategy
    lams = result.lambdas
    for k in range(1, len(lams)):
        if lams[k] < lams[k - 1] - slack:
            raise MonotonicityViolation(
                f"lambda_R decreased from {lams[k - 1]!r} (R={radii[k - 1]}) to {lams[k]!r} (R={radii[k]})"
            )
    return result
