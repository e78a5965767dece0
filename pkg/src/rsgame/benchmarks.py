"""Benchmark games with known or independently checkable answers."""

from __future__ import annotations

import math

from .lyapunov import LyapunovSpec
from .model import GameModel

V_GAUSS = "exp(0.25*x0^2)"
V_GAUSS_2D = "exp(0.25*(x0^2 + x1^2))"


def lq_eigenvalue(a: float = 1.0, sigma: float = 1.0, beta: float = 0.25) -> float:
    """Whole-line principal eigenvalue for drift -a x, noise sigma, cost beta x^2.

    psi = exp(g x^2) solves the eigen equation when 2 sigma^2 g^2 - 2 a g + beta = 0;
    the decaying-tail root gives lam = sigma^2 g.
    """
    disc = a * a - 2 * sigma * sigma * beta
    if disc < 0:
        raise ValueError("cost too strong for the drift: eigenvalue is infinite")
    return (a - math.sqrt(disc)) / 2


def lq_model(a: float = 1.0, sigma: float = 1.0, beta: float = 0.25) -> GameModel:
    """One controller with a single action; player 2 is a dummy with a zero contribution."""
    return GameModel.from_strings(
        1,
        [[0.0]],
        [[0.0]],
        [f"-{a!r}*x0"],
        ["0"],
        [repr(sigma)],
        [[f"{beta!r}*x0^2", "0"], ["0", "0"]],
        name="lq",
    )


def lq_lyapunov() -> LyapunovSpec:
    return LyapunovSpec.from_strings(V_GAUSS, "unbounded", "0.3*x0^2 - 1", k_radius=3.0)


def constant_cost_model(c: float = 0.3) -> GameModel:
    """OU drift, both players' costs identically c."""
    return GameModel.from_strings(
        1,
        [[-0.25], [0.0], [0.25]],
        [[-0.25], [0.0], [0.25]],
        ["-x0 + a0"],
        ["a0"],
        ["1"],
        [[repr(c), "0"], ["0", repr(c)]],
        name="constant-cost",
    )


def constant_cost_lyapunov(c: float = 0.3) -> LyapunovSpec:
    return LyapunovSpec.from_strings(V_GAUSS, "bounded", k_radius=3.0, delta=0.5)


def ou_model(drift_sign: int = -1, cost: str = "0.25*x0^2") -> GameModel:
    """OU drift +-x + u1 + u2 with |u_i| <= 1/4, unit noise, cost for both players."""
    sgn = "-" if drift_sign < 0 else ""
    return GameModel.from_strings(
        1,
        [[-0.25], [0.25]],
        [[-0.25], [0.25]],
        [f"{sgn}x0 + a0"],
        ["a0"],
        ["1"],
        [[cost, "0"], [cost, "0"]],
        name="ou" if drift_sign < 0 else "ou-outward",
    )


def ou_lyapunov() -> LyapunovSpec:
    return LyapunovSpec.from_strings(V_GAUSS, "unbounded", "0.3*x0^2 - 1", k_radius=3.0)


def tug_of_war_model() -> GameModel:
    """Coupled 1-d game: both push the state, each prefers a different target."""
    acts = [[-0.5], [0.0], [0.5]]
    return GameModel.from_strings(
        1,
        acts,
        acts,
        ["-x0 + a0"],
        ["a0"],
        ["1"],
        [
            ["0.1*(x0 - 1)^2 + 0.2*a0^2", "0.05*(a0 + 0.5)"],
            ["0.05*(a0 + 0.5)", "0.1*(x0 + 1)^2 + 0.2*a0^2"],
        ],
        name="tug-of-war",
    )


def symmetric_model() -> GameModel:
    """Swap-symmetric 1-d game: player 2 faces the same problem as player 1."""
    acts = [[-0.5], [0.0], [0.5]]
    return GameModel.from_strings(
        1,
        acts,
        acts,
        ["-0.5*x0 + a0"],
        ["-0.5*x0 + a0"],
        ["1"],
        [
            ["0.1*x0^2 + 0.2*a0^2", "0.05*a0^2"],
            ["0.05*a0^2", "0.1*x0^2 + 0.2*a0^2"],
        ],
        name="symmetric",
    )


def game_lyapunov_1d() -> LyapunovSpec:
    return LyapunovSpec.from_strings(V_GAUSS, "unbounded", "0.2*x0^2 - 1", k_radius=3.0)


def decoupled_model() -> GameModel:
    """2-d game where player j steers coordinate j-1 and pays only for that coordinate."""
    acts = [[-0.5], [0.0], [0.5]]
    return GameModel.from_strings(
        2,
        acts,
        acts,
        ["-x0 + a0", "0"],
        ["0", "-x1 + a0"],
        ["1", "1"],
        [
            ["0.1*(x0 - 0.5)^2 + 0.1*a0^2", "0"],
            ["0", "0.1*(x1 + 0.5)^2 + 0.1*a0^2"],
        ],
        name="decoupled",
    )


def decoupled_factor(player: int) -> GameModel:
    """The 1-d control problem of one player in the decoupled game (other player a dummy)."""
    acts = [[-0.5], [0.0], [0.5]]
    target = "x0 - 0.5" if player == 1 else "x0 + 0.5"
    return GameModel.from_strings(
        1,
        acts,
        [[0.0]],
        ["-x0 + a0"],
        ["0"],
        ["1"],
        [[f"0.1*({target})^2 + 0.1*a0^2", "0"], ["0", "0"]],
        name=f"decoupled-factor-{player}",
    )


def decoupled_lyapunov() -> LyapunovSpec:
    return LyapunovSpec.from_strings(V_GAUSS_2D, "unbounded", "0.2*(x0^2 + x1^2) - 1", k_radius=3.0)


def coupled_2d_model() -> GameModel:
    """2-d game with cross effects: each player's cost depends on both coordinates."""
    acts = [[-0.5], [0.0], [0.5]]
    return GameModel.from_strings(
        2,
        acts,
        acts,
        ["-x0 + a0", "0"],
        ["0.2*x0", "-x1 + a0"],
        ["1", "1"],
        [
            ["0.05*x0^2 + 0.05*(x0 - x1)^2 + 0.1*a0^2", "0.02*(a0 + 0.5)"],
            ["0.02*(a0 + 0.5)", "0.05*x1^2 + 0.05*(x0 + x1)^2 + 0.1*a0^2"],
        ],
        name="coupled-2d",
    )


def coupled_2d_lyapunov() -> LyapunovSpec:
    return LyapunovSpec.from_strings(V_GAUSS_2D, "unbounded", "0.2*(x0^2 + x1^2) - 1", k_radius=3.0)


def game_benchmarks() -> dict:
    """Name -> (model, Lyapunov candidate) for the game benchmarks."""
    return {
        "lq": (lq_model(), lq_lyapunov()),
        "constant-cost": (constant_cost_model(), constant_cost_lyapunov()),
        "tug-of-war": (tug_of_war_model(), game_lyapunov_1d()),
        "symmetric": (symmetric_model(), game_lyapunov_1d()),
        "decoupled": (decoupled_model(), decoupled_lyapunov()),
        "coupled-2d": (coupled_2d_model(), coupled_2d_lyapunov()),
    }
