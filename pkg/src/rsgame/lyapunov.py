"""Numerical check of a Foster-Lyapunov drift condition on grid probes.

Bounded-cost case::

    max_{u1,u2} L^{u1,u2} V  <=  alpha * 1_K - delta * V,   max_i sup r_i < delta

Unbounded-cost case::

    max_{u1,u2} L^{u1,u2} V  <=  alpha * 1_K - ell * V,     ell - max_u r_i inf-compact

K is the ball of radius ``k_radius``.  Inf-compactness of ``ell - max_u r_i``
cannot be seen on a finite grid; the report instead checks that it grows
along each grid axis k at the nodes with |x_k| beyond the radius of K
(labelled a surrogate check).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import exprlang
from .exprlang import Expr
from .grid import Grid
from .model import GameModel


class SpecInfeasible(RuntimeError):
    def __init__(self, message: str, witness: dict | None = None):
        super().__init__(message)
        self.witness = witness or {}


@dataclass(frozen=True)
class LyapunovSpec:
    V: Expr
    case: str = "unbounded"  # "bounded" | "unbounded"
    ell: Expr | None = None
    k_radius: float = 1.0
    delta: float | None = None

    def __post_init__(self):
        if self.case not in ("bounded", "unbounded"):
            raise ValueError(f"case must be 'bounded' or 'unbounded', got {self.case!r}")
        if self.case == "bounded" and (self.delta is None or self.delta <= 0):
            raise ValueError("bounded case needs delta > 0")
        if self.case == "unbounded" and self.ell is None:
            raise ValueError("unbounded case needs ell")

    @classmethod
    def from_strings(cls, V: str, case="unbounded", ell: str | None = None, k_radius=1.0, delta=None):
        return cls(
            exprlang.parse(V),
            case,
            exprlang.parse(ell) if ell is not None else None,
            float(k_radius),
            None if delta is None else float(delta),
        )


@dataclass
class LyapunovReport:
    ok: bool
    case: str
    alpha: float  # smallest feasible alpha on the probes
    min_margin: float  # min over probes outside K of -(sup LV + rate * V)
    min_V: float
    min_V_on_K: float
    cost_ok: bool  # bounded: max_i sup r_i < delta; unbounded: ell > 0 outside K
    surrogate_ok: bool | None  # unbounded case only: outward growth of ell - sup r_i
    max_cost: float
    offending: list[dict] = field(default_factory=list)
    h_chk: float = 0.0


def generator_on_V(model: GameModel, V: Expr, x: np.ndarray, h_chk: float) -> np.ndarray:
    """L^{u1,u2} V at points x by central differences, shape (m1, m2, n)."""
    x = np.atleast_2d(x)
    n, d = x.shape
    v0 = exprlang.evaluate_at(V, x)
    a = model.diffusion(x)
    second = np.zeros((n, d))
    first = np.zeros((n, d))
    for k in range(d):
        e = np.zeros(d)
        e[k] = h_chk
        vp = exprlang.evaluate_at(V, x + e)
        vm = exprlang.evaluate_at(V, x - e)
        second[:, k] = (vp - 2 * v0 + vm) / h_chk**2
        first[:, k] = (vp - vm) / (2 * h_chk)
    b = model.drift_table(1, x)[:, None] + model.drift_table(2, x)[None, :]  # (m1, m2, n, d)
    return np.sum(a * second, axis=1)[None, None, :] + np.einsum("uwnk,nk->uwn", b, first)


def sup_cost(model: GameModel, i: int, x) -> np.ndarray:
    """max over action pairs of r_i(x, u1, u2)."""
    return model.cost_table(i, 1, x).max(axis=0) + model.cost_table(i, 2, x).max(axis=0)


def _surrogate_growth(grid: Grid, f_nodes: np.ndarray, radius: float) -> list[dict]:
    """Nodes beyond the K radius along axis k where f drops at the next node outward."""
    bad = []
    strides = [1] if grid.dim == 1 else [grid.n_cells + 1, 1]
    ij = np.rint((grid.coords + grid.R) / grid.h).astype(int)
    for k in range(grid.dim):
        xk = grid.coords[:, k]
        for sign in (1, -1):
            node = np.flatnonzero((sign * xk > radius) & (ij[:, k] != (grid.n_cells if sign > 0 else 0)))
            nxt = node + sign * strides[k]
            for n in node[f_nodes[nxt] < f_nodes[node]]:
                bad.append({"x": grid.coords[n].tolist(), "axis": k, "check": "surrogate outward growth"})
    return bad


def check_lyapunov(
    model: GameModel,
    spec: LyapunovSpec,
    grid: Grid,
    h_chk: float | None = None,
    raise_on_failure: bool = True,
) -> LyapunovReport:
    h_chk = grid.h if h_chk is None else h_chk
    if h_chk > grid.h:
        raise ValueError("h_chk must not exceed the grid spacing")
    if spec.k_radius >= grid.R:
        raise ValueError("grid must cover K with a margin")
    x = grid.interior_coords
    V = exprlang.evaluate_at(spec.V, x)
    LV = generator_on_V(model, spec.V, x, h_chk)
    sup_LV = LV.max(axis=(0, 1))
    in_K = np.sqrt(np.sum(x**2, axis=1)) <= spec.k_radius
    rate = np.full(x.shape[0], spec.delta) if spec.case == "bounded" else exprlang.evaluate_at(spec.ell, x)
    excess = sup_LV + rate * V  # must be <= 0 off K, <= alpha on K

    offending = []
    if np.any(V < 1):
        for n in np.flatnonzero(V < 1)[:10]:
            offending.append({"x": x[n].tolist(), "check": "V >= 1", "value": float(V[n])})

    out = ~in_K
    min_margin = float(-excess[out].max()) if out.any() else np.inf
    witness = None
    for n in np.flatnonzero(out & (excess > 0)):
        u1, u2 = np.unravel_index(np.argmax(LV[:, :, n]), LV.shape[:2])
        row = {
            "x": x[n].tolist(),
            "check": "drift inequality",
            "excess": float(excess[n]),
            "actions": [int(u1), int(u2)],
        }
        witness = witness or row
        offending.append(row)
    alpha = float(max(0.0, excess[in_K].max())) if in_K.any() else 0.0

    all_x = grid.coords
    max_cost = max(float(sup_cost(model, i, all_x).max()) for i in (1, 2))
    surrogate_ok = None
    if spec.case == "bounded":
        cost_ok = max_cost < spec.delta
        if not cost_ok:
            offending.append({"check": "max_i sup r_i < delta", "value": max_cost})
    else:
        ell_out = rate[out]
        cost_ok = bool(np.all(ell_out > 0))
        if not cost_ok:
            offending.append({"check": "ell > 0 outside K", "value": float(ell_out.min())})
        ell_nodes = exprlang.evaluate_at(spec.ell, all_x)
        bad = []
        for i in (1, 2):
            bad += _surrogate_growth(grid, ell_nodes - sup_cost(model, i, all_x), spec.k_radius)
        surrogate_ok = not bad
        offending += bad[:20]

    ok = bool(not offending)
    on_K = np.sqrt(np.sum(all_x**2, axis=1)) <= spec.k_radius
    report = LyapunovReport(
        ok=ok,
        case=spec.case,
        alpha=alpha,
        min_margin=min_margin,
        min_V=float(V.min()),
        min_V_on_K=float(exprlang.evaluate_at(spec.V, all_x[on_K]).min()),
        cost_ok=bool(cost_ok),
        surrogate_ok=surrogate_ok,
        max_cost=max_cost,
        offending=offending,
        h_chk=h_chk,
    )
    if not ok and raise_on_failure:
        first = witness or offending[0]
        raise SpecInfeasible(f"Lyapunov condition fails: {first}", first)
    return report


def cost_bound(model: GameModel, spec: LyapunovSpec, grid: Grid, report: LyapunovReport | None = None) -> float:
    """Ceiling kappa_1 + alpha / min_K V on every achievable risk-sensitive cost."""
    report = report or check_lyapunov(model, spec, grid)
    x = grid.coords
    if spec.case == "bounded":
        kappa = report.max_cost
    else:
        ell = exprlang.evaluate_at(spec.ell, x)
        kappa = max(float(np.maximum(sup_cost(model, i, x) - ell, 0).max()) for i in (1, 2))
    return kappa + report.alpha / report.min_V_on_K


def psi_over_V(grid: Grid, spec: LyapunovSpec, psi) -> float:
    """Diagnostic max psi / V over interior nodes."""
    V = exprlang.evaluate_at(spec.V, grid.interior_coords)
    psi = np.asarray(psi, dtype=float)
    if psi.shape[0] == grid.n_nodes:
        psi = psi[grid.interior_idx]
    return float(np.max(psi / V))
