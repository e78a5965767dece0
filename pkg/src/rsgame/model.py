"""Game datum: action sets, additive drift/cost components, diagonal diffusion.

Drift and costs split additively across the players' actions::

    b(x, u1, u2)   = b1(x, u1) + b2(x, u2)
    r_i(x, u1, u2) = r_i1(x, u1) + r_i2(x, u2)

so every relaxed (measure-averaged) coefficient is a pair of finite sums.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import exprlang
from .exprlang import Expr

SIMPLEX_TOL = 1e-12


class ModelError(ValueError):
    pass


class ValidationFailed(ModelError):
    def __init__(self, violations: list[str]):
        head = "; ".join(violations[:5])
        more = f" (+{len(violations) - 5} more)" if len(violations) > 5 else ""
        super().__init__(f"model validation failed: {head}{more}")
        self.violations = violations


@dataclass(frozen=True)
class Action:
    name: str
    features: tuple[float, ...] = ()


@dataclass(frozen=True)
class ActionSet:
    player: int
    actions: tuple[Action, ...]

    def __post_init__(self):
        if self.player not in (1, 2):
            raise ModelError(f"player must be 1 or 2, got {self.player}")
        if len(self.actions) < 1:
            raise ModelError(f"player {self.player} needs at least one action")
        names = [a.name for a in self.actions]
        if len(set(names)) != len(names):
            raise ModelError(f"player {self.player}: duplicate action names {names}")
        widths = {len(a.features) for a in self.actions}
        if len(widths) > 1:
            raise ModelError(f"player {self.player}: feature vectors differ in length")

    @property
    def size(self) -> int:
        return len(self.actions)

    @property
    def n_features(self) -> int:
        return len(self.actions[0].features)

    def index(self, name: str) -> int:
        for k, a in enumerate(self.actions):
            if a.name == name:
                return k
        raise KeyError(name)

    @classmethod
    def from_features(cls, player: int, features: Sequence, names=None) -> "ActionSet":
        acts = []
        for k, f in enumerate(features):
            f = tuple(float(v) for v in np.atleast_1d(f))
            acts.append(Action(names[k] if names else f"u{k}", f))
        return cls(player, tuple(acts))


@dataclass(frozen=True)
class GameModel:
    """Two-player game with additive (ADAC) structure.

    ``drift[j]`` holds the d components of player j's drift part, in x and
    player j's features; ``cost[i][j]`` is player i's cost component driven by
    player j's actions; ``sigma`` is the diffusion diagonal (x only).
    """

    dim: int
    actions: tuple[ActionSet, ActionSet]
    drift: tuple[tuple[Expr, ...], tuple[Expr, ...]]
    sigma: tuple[Expr, ...]
    cost: tuple[tuple[Expr, Expr], tuple[Expr, Expr]]
    a_min: float = 1e-8
    name: str = "game"

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ModelError(f"dimension must be 1 or 2, got {self.dim}")
        if len(self.sigma) != self.dim:
            raise ModelError("sigma needs one expression per dimension")
        for j in range(2):
            if self.actions[j].player != j + 1:
                raise ModelError("action sets must be ordered (player 1, player 2)")
            if len(self.drift[j]) != self.dim:
                raise ModelError(f"drift of player {j + 1} needs {self.dim} components")
            nf = self.actions[j].n_features
            for e in self.drift[j]:
                exprlang.validate(e, self.dim, nf)
            for i in range(2):
                exprlang.validate(self.cost[i][j], self.dim, nf)
        for e in self.sigma:
            exprlang.validate(e, self.dim, 0)
        if not self.a_min > 0:
            raise ModelError("a_min must be positive")

    @classmethod
    def from_strings(
        cls,
        dim: int,
        actions1: ActionSet | Sequence,
        actions2: ActionSet | Sequence,
        drift1: Sequence[str],
        drift2: Sequence[str],
        sigma: Sequence[str],
        cost: Sequence[Sequence[str]],
        a_min: float = 1e-8,
        name: str = "game",
    ) -> "GameModel":
        """Build from expression strings; ``cost[i][j]`` is r_{i+1, j+1}."""
        sets = []
        for p, acts in ((1, actions1), (2, actions2)):
            sets.append(acts if isinstance(acts, ActionSet) else ActionSet.from_features(p, acts))
        parse = exprlang.parse
        return cls(
            dim=dim,
            actions=(sets[0], sets[1]),
            drift=(tuple(parse(s) for s in drift1), tuple(parse(s) for s in drift2)),
            sigma=tuple(parse(s) for s in sigma),
            cost=(
                (parse(cost[0][0]), parse(cost[0][1])),
                (parse(cost[1][0]), parse(cost[1][1])),
            ),
            a_min=a_min,
            name=name,
        )

    def n_actions(self, player: int) -> int:
        return self.actions[player - 1].size

    # Fields evaluated at an array of points x of shape (n, d). ---------------

    def drift_table(self, player: int, x) -> np.ndarray:
        """b_j(x, u) for every action u of ``player``: shape (m_j, n, d)."""
        aset = self.actions[player - 1]
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.empty((aset.size, x.shape[0], self.dim))
        for u, act in enumerate(aset.actions):
            for k, e in enumerate(self.drift[player - 1]):
                out[u, :, k] = exprlang.evaluate_at(e, x, act.features)
        return out

    def cost_table(self, i: int, j: int, x) -> np.ndarray:
        """r_ij(x, u) for every action u of player j: shape (m_j, n)."""
        aset = self.actions[j - 1]
        x = np.atleast_2d(np.asarray(x, dtype=float))
        e = self.cost[i - 1][j - 1]
        return np.stack([exprlang.evaluate_at(e, x, act.features) for act in aset.actions])

    def diffusion(self, x) -> np.ndarray:
        """a_kk(x) = sigma_kk(x)^2 / 2, shape (n, d)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        sig = np.stack([exprlang.evaluate_at(e, x) for e in self.sigma], axis=-1)
        return 0.5 * sig**2

    def sigma_values(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.stack([exprlang.evaluate_at(e, x) for e in self.sigma], axis=-1)


def check_mixed(p, m: int | None = None) -> np.ndarray:
    """Validate a probability vector (or rows of probability vectors)."""
    p = np.asarray(p, dtype=float)
    if m is not None and p.shape[-1] != m:
        raise ModelError(f"mixed action has {p.shape[-1]} entries, expected {m}")
    if np.any(p < 0) or np.any(np.abs(p.sum(axis=-1) - 1.0) > SIMPLEX_TOL * max(1, p.shape[-1])):
        raise ModelError("mixed action is not a probability vector")
    return p


def dirac(m: int, k: int) -> np.ndarray:
    p = np.zeros(m)
    p[k] = 1.0
    return p


def relaxed_drift(model: GameModel, x, m1, m2) -> np.ndarray:
    """Drift at point ``x`` under mixed actions ``m1`` and ``m2``."""
    x = np.asarray(x, dtype=float).reshape(1, model.dim)
    m1 = check_mixed(m1, model.n_actions(1))
    m2 = check_mixed(m2, model.n_actions(2))
    b1 = model.drift_table(1, x)[:, 0, :]
    b2 = model.drift_table(2, x)[:, 0, :]
    return m1 @ b1 + m2 @ b2


def relaxed_cost(model: GameModel, i: int, x, m1, m2) -> float:
    x = np.asarray(x, dtype=float).reshape(1, model.dim)
    m1 = check_mixed(m1, model.n_actions(1))
    m2 = check_mixed(m2, model.n_actions(2))
    r1 = model.cost_table(i, 1, x)[:, 0]
    r2 = model.cost_table(i, 2, x)[:, 0]
    return float(m1 @ r1 + m2 @ r2)


@dataclass
class MarkovStrategy:
    """One mixed action per grid node (boundary rows are carried but unused)."""

    player: int
    grid_key: tuple
    probs: np.ndarray  # (n_nodes, m)

    def __post_init__(self):
        self.probs = check_mixed(np.asarray(self.probs, dtype=float))

    @property
    def n_actions(self) -> int:
        return self.probs.shape[1]

    def is_pure(self) -> bool:
        return bool(np.all((self.probs == 0) | (self.probs == 1)))

    def actions(self) -> np.ndarray:
        return np.argmax(self.probs, axis=1)

    def distance(self, other: "MarkovStrategy") -> float:
        return float(np.max(np.abs(self.probs - other.probs)))

    def mix(self, other: "MarkovStrategy", weight: float) -> "MarkovStrategy":
        """(1 - weight) * self + weight * other."""
        return MarkovStrategy(self.player, self.grid_key, (1 - weight) * self.probs + weight * other.probs)

    @classmethod
    def uniform(cls, player: int, grid, m: int) -> "MarkovStrategy":
        return cls(player, grid.key, np.full((grid.n_nodes, m), 1.0 / m))

    @classmethod
    def pure(cls, player: int, grid, m: int, actions) -> "MarkovStrategy":
        actions = np.broadcast_to(np.asarray(actions, dtype=int), (grid.n_nodes,))
        probs = np.zeros((grid.n_nodes, m))
        probs[np.arange(grid.n_nodes), actions] = 1.0
        return cls(player, grid.key, probs)


@dataclass
class ValidationReport:
    ok: bool
    c0: float
    min_sigma_sq: float
    min_cost: float
    violations: list[str] = field(default_factory=list)


def validate_model(model: GameModel, probe, raise_on_failure: bool = True) -> ValidationReport:
    """Check cost nonnegativity, nondegeneracy and report the affine-growth constant C0.

    C0 is the smallest constant with
    ``max_u <b(x,u), x>^+ + |sigma(x)|^2 <= C0 (1 + |x|^2)`` on ``probe``.
    """
    x = np.atleast_2d(np.asarray(probe, dtype=float))
    violations = []

    min_cost = np.inf
    for i in (1, 2):
        for j in (1, 2):
            tab = model.cost_table(i, j, x)
            min_cost = min(min_cost, float(tab.min()))
            bad = np.argwhere(tab < 0)
            for u, n in bad[:10]:
                violations.append(f"r_{i}{j} < 0 at x={x[n].tolist()} action {u}")

    sig = model.sigma_values(x)
    sig_sq = sig**2
    bad = np.argwhere(sig_sq < 2 * model.a_min)
    for n, k in bad[:10]:
        violations.append(f"sigma_{k}{k}^2 < 2*a_min at x={x[n].tolist()}")

    b1 = model.drift_table(1, x)  # (m1, n, d)
    b2 = model.drift_table(2, x)
    inner = np.einsum("und,nd->un", b1, x)[:, None, :] + np.einsum("wnd,nd->wn", b2, x)[None, :, :]
    growth = np.maximum(inner, 0).max(axis=(0, 1)) + sig_sq.sum(axis=1)
    c0 = float(np.max(growth / (1 + np.sum(x**2, axis=1))))

    rep = ValidationReport(not violations, c0, float(sig_sq.min()), float(min_cost), violations)
    if violations and raise_on_failure:
        raise ValidationFailed(violations)
    return rep
