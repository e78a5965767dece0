"""Euler-Maruyama simulation under stationary Markov strategies.

Coefficients are the relaxed (measure-averaged) drift and cost at the
current state, with the mixtures taken from the nearest interior grid node.
Path p draws its noise from ``default_rng(seed + p)`` in fixed-size blocks
of fine increments, so runs that differ only in ``refine`` see the same
Brownian path.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .eigen import EigenPair
from .grid import Grid, build_grid
from .model import GameModel, MarkovStrategy

_BLOCK = 1024


class SimulationError(RuntimeError):
    pass


class NumericalOverflow(SimulationError):
    def __init__(self, path: int, value: float):
        super().__init__(f"path {path} produced a non-finite log-weight {value!r}")
        self.path = path


class TooManyCapped(SimulationError):
    def __init__(self, capped: int, total: int):
        super().__init__(f"{capped} of {total} paths reached the time cap before hitting the ball")
        self.capped = capped
        self.total = total


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    T: float = 50.0
    N: int = 2000
    seed: int = 0
    R_clamp: float | None = None  # None: the largest box of interior nodes
    refine: int = 1  # each step's increment is the sum of `refine` fine increments

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.T < 100 * self.dt * (1 - 1e-12):
            raise ValueError("horizon T must be at least 100 dt")
        if self.N < 2:
            raise ValueError("need at least two paths")
        if self.refine < 1:
            raise ValueError("refine must be >= 1")
        if self.R_clamp is not None and not self.R_clamp > 0:
            raise ValueError("R_clamp must be positive")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass
class CostEstimate:
    estimate: float
    stderr: float
    estimate_half: float  # same estimator on [0, T/2]
    S_half: np.ndarray = field(repr=False)  # per-path integrals at T/2
    S: np.ndarray = field(repr=False)  # per-path integrals at T
    clamped_steps: int = 0

    def summary(self) -> dict:
        return {
            "estimate": self.estimate,
            "stderr": self.stderr,
            "estimate_half": self.estimate_half,
            "N": int(self.S.size),
            "S_mean": float(np.mean(self.S)),
            "S_min": float(np.min(self.S)),
            "S_max": float(np.max(self.S)),
            "S_half_mean": float(np.mean(self.S_half)),
            "clamped_steps": self.clamped_steps,
        }


@dataclass
class RepResult:
    lhs: float
    rhs: float
    stderr: float
    capped: int
    n_used: int
    tau_mean: float
    values: np.ndarray = field(default=None, repr=False)  # per-path terms, nan where capped

    def __iter__(self):
        return iter((self.lhs, self.rhs, self.stderr))

    @property
    def rel_error(self) -> float:
        return abs(self.lhs - self.rhs) / abs(self.lhs)


def logmeanexp(s) -> float:
    """log(mean(exp(s))) with the maximum shifted out."""
    s = np.asarray(s, dtype=float)
    m = float(np.max(s))
    return m + float(np.log(np.mean(np.exp(s - m))))


def _logmeanexp_stderr(s) -> float:
    # delta method: se(log mean w) = sd(w) / (sqrt(N) mean(w))
    s = np.asarray(s, dtype=float)
    w = np.exp(s - np.max(s))
    return float(np.std(w, ddof=1) / np.sqrt(s.size) / np.mean(w))


class _Noise:
    """Per-path standard normal increments, drawn block by block."""

    def __init__(self, seed: int, n_paths: int, dim: int, refine: int):
        self.gens = [np.random.default_rng(seed + p) for p in range(n_paths)]
        self.dim = dim
        self.refine = refine
        self.buf = np.empty((n_paths, 0, dim))
        self.pos = 0

    def next(self) -> np.ndarray:
        r = self.refine
        if self.pos + r > self.buf.shape[1]:
            rest = self.buf[:, self.pos :]
            fresh = np.stack([g.standard_normal((_BLOCK, self.dim)) for g in self.gens])
            self.buf = np.concatenate([rest, fresh], axis=1)
            self.pos = 0
        z = self.buf[:, self.pos : self.pos + r].sum(axis=1) / np.sqrt(r)
        self.pos += r
        return z


class _Dynamics:
    def __init__(self, model: GameModel, v1: MarkovStrategy, v2: MarkovStrategy, grid: Grid | None, R_clamp):
        if v1.grid_key != v2.grid_key:
            raise ValueError("strategies live on different grids")
        self.grid = grid or build_grid(*v1.grid_key)
        if self.grid.key != v1.grid_key:
            raise ValueError("grid does not match the strategies")
        top = self.grid.R - self.grid.h
        self.R_clamp = top if R_clamp is None else float(R_clamp)
        if self.R_clamp > top + 1e-12:
            raise ValueError(f"R_clamp={self.R_clamp} exceeds the interior of the strategy grid ({top})")
        self.model = model
        self.p1, self.p2 = v1.probs, v2.probs

    def clamp(self, x):
        y = np.clip(x, -self.R_clamp, self.R_clamp)
        return y, int(np.count_nonzero(np.any(y != x, axis=1)))

    def mixtures(self, x):
        node = self.grid.nearest_node(x, interior_only=True)
        return self.p1[node], self.p2[node]

    def drift(self, x, q1, q2):
        b1 = self.model.drift_table(1, x)
        b2 = self.model.drift_table(2, x)
        return np.einsum("nu,unk->nk", q1, b1) + np.einsum("nw,wnk->nk", q2, b2)

    def cost(self, i, x, q1, q2):
        r1 = self.model.cost_table(i, 1, x)
        r2 = self.model.cost_table(i, 2, x)
        return np.einsum("nu,un->n", q1, r1) + np.einsum("nw,wn->n", q2, r2)


def _start(x0, n, dim):
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != dim:
        raise ValueError(f"x0 must have {dim} components")
    return np.tile(x0, (n, 1))


def estimate_rho(
    model: GameModel,
    i: int,
    v1: MarkovStrategy,
    v2: MarkovStrategy,
    x0,
    cfg: SimConfig,
    grid: Grid | None = None,
    dump: str | Path | None = None,
) -> CostEstimate:
    """Monte Carlo estimate of (1/T) log E exp(int_0^T r_i dt) for player i."""
    dyn = _Dynamics(model, v1, v2, grid, cfg.R_clamp)
    N, K, dt = cfg.N, cfg.n_steps, cfg.dt
    T = K * dt
    x, _ = dyn.clamp(_start(x0, N, model.dim))
    noise = _Noise(cfg.seed, N, model.dim, cfg.refine)
    # running mean of the cost: exact for constant costs
    avg = np.zeros(N)
    avg_half = None
    half = K // 2
    clamped = 0
    sqdt = np.sqrt(dt)
    for k in range(1, K + 1):
        q1, q2 = dyn.mixtures(x)
        r = dyn.cost(i, x, q1, q2)
        avg += (r - avg) / k
        b = dyn.drift(x, q1, q2)
        sig = model.sigma_values(x)
        x, c = dyn.clamp(x + b * dt + sig * sqdt * noise.next())
        clamped += c
        if k == half:
            avg_half = avg.copy()
    with np.errstate(over="ignore"):  # overflow is reported just below
        S = avg * T
        S_half = avg_half * (half * dt)
    bad = np.flatnonzero(~np.isfinite(S))
    if bad.size:
        raise NumericalOverflow(int(bad[0]), float(S[bad[0]]))
    # (1/T) logmeanexp(T * avg), written so that equal averages return that average exactly
    m = float(avg.max())
    est = m + float(np.log(np.mean(np.exp(S - T * m)))) / T
    m_half = float(avg_half.max())
    est_half = m_half + float(np.log(np.mean(np.exp(S_half - half * dt * m_half)))) / (half * dt)
    se = _logmeanexp_stderr(S) / T
    if dump is not None:
        write_path_csv(dump, S, np.full(N, T))
    return CostEstimate(est, se, est_half, S_half, S, clamped)


def _lookup(grid: Grid, psi: np.ndarray, x) -> np.ndarray:
    """Nearest-node values of an interior vector; boundary nodes read 0."""
    node = grid.nearest_node(x)
    idx = grid.node_to_interior[node]
    pad = np.append(psi, 0.0)
    return pad[idx]


def check_stochastic_rep(
    model: GameModel,
    v1: MarkovStrategy,
    v2: MarkovStrategy,
    i: int,
    eigenpair: EigenPair | tuple,
    r_ball: float,
    x0,
    cfg: SimConfig,
    grid: Grid | None = None,
    max_capped: float = 0.2,
    dump: str | Path | None = None,
) -> RepResult:
    """Compare psi(x0) with E[exp(int_0^tau (r_i - lam) dt) psi(X_tau)].

    tau is the first step at which |X| <= r_ball (Euclidean, continuous
    coordinates).  Paths still outside at time T are dropped and counted.
    """
    dyn = _Dynamics(model, v1, v2, grid, cfg.R_clamp)
    g = dyn.grid
    if isinstance(eigenpair, EigenPair):
        lam, psi = eigenpair.lam, eigenpair.psi
    else:
        lam, psi = eigenpair
    psi = np.asarray(psi, dtype=float)
    if psi.shape[0] == g.n_nodes:
        psi = psi[g.interior_idx]
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if not np.linalg.norm(x0) > r_ball:
        raise ValueError("x0 must lie outside the ball")
    if np.any(np.abs(x0) > dyn.R_clamp) or r_ball >= dyn.R_clamp:
        raise ValueError("grid must contain x0 and the ball")

    N, K, dt = cfg.N, cfg.n_steps, cfg.dt
    x = _start(x0, N, model.dim)
    noise = _Noise(cfg.seed, N, model.dim, cfg.refine)
    integral = np.zeros(N)
    tau = np.full(N, K * dt)
    alive = np.ones(N, dtype=bool)
    sqdt = np.sqrt(dt)
    for k in range(1, K + 1):
        z = noise.next()  # drawn for every path so the streams stay aligned
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        xa = x[idx]
        q1, q2 = dyn.mixtures(xa)
        integral[idx] += (dyn.cost(i, xa, q1, q2) - lam) * dt
        xa = xa + dyn.drift(xa, q1, q2) * dt + model.sigma_values(xa) * sqdt * z[idx]
        xa, _ = dyn.clamp(xa)
        x[idx] = xa
        hit = np.sqrt(np.sum(xa**2, axis=1)) <= r_ball
        alive[idx[hit]] = False
        tau[idx[hit]] = k * dt
    capped = int(alive.sum())
    if capped > max_capped * N:
        raise TooManyCapped(capped, N)
    done = ~alive
    vals = np.exp(integral[done]) * _lookup(g, psi, x[done])
    lhs = float(_lookup(g, psi, x0[None, :])[0])
    rhs = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else 0.0
    if dump is not None:
        write_path_csv(dump, integral, tau)
    per_path = np.full(N, np.nan)
    per_path[done] = vals
    tau_mean = float(np.mean(tau[done])) if done.any() else float("nan")
    return RepResult(lhs, rhs, se, capped, int(done.sum()), tau_mean, per_path)


def dt_trend(
    model: GameModel,
    v1: MarkovStrategy,
    v2: MarkovStrategy,
    i: int,
    eigenpair,
    r_ball: float,
    x0,
    cfg: SimConfig,
    dts=(1e-2, 5e-3, 1e-3),
    grid: Grid | None = None,
    z: float = 2.0,
) -> dict:
    """Representation check at several step sizes on one shared Brownian path.

    The finest step drives the noise; coarser steps sum its increments, so
    neighbouring runs can be compared path by path.  ``ok`` holds when each
    refinement does not raise the relative error by more than ``z`` paired
    standard errors; ``strict_ok`` is the raw monotone comparison.
    """
    dts = sorted(dts, reverse=True)
    fine = dts[-1]
    rows, values = [], []
    for dt in dts:
        refine = int(round(dt / fine))
        if abs(refine * fine - dt) > 1e-12 * dt:
            raise ValueError("step sizes must be integer multiples of the finest")
        c = SimConfig(dt=dt, T=cfg.T, N=cfg.N, seed=cfg.seed, R_clamp=cfg.R_clamp, refine=refine)
        res = check_stochastic_rep(model, v1, v2, i, eigenpair, r_ball, x0, c, grid)
        rows.append({"dt": dt, "lhs": res.lhs, "rhs": res.rhs, "stderr": res.stderr, "rel_error": res.rel_error})
        values.append(res.values)
    lhs = rows[0]["lhs"]
    ok = True
    for k in range(1, len(rows)):
        d = values[k - 1] - values[k]
        d = d[np.isfinite(d)]
        se = float(np.std(d, ddof=1) / np.sqrt(d.size)) / abs(lhs) if d.size > 1 else 0.0
        rows[k]["paired_shift"] = (rows[k]["rhs"] - rows[k - 1]["rhs"]) / abs(lhs)
        rows[k]["paired_stderr"] = se
        if rows[k]["rel_error"] > rows[k - 1]["rel_error"] + z * se:
            ok = False
    errs = [r["rel_error"] for r in rows]
    strict = all(b <= a for a, b in zip(errs, errs[1:]))
    bias = "above" if rows[0]["rhs"] > lhs else "below"
    return {"rows": rows, "ok": bool(ok), "strict_ok": bool(strict), "coarse_bias": bias}


def write_path_csv(path, S, tau) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path_index", "S_p", "tau_or_T"])
        for p, (s, t) in enumerate(zip(S, tau)):
            w.writerow([p, repr(float(s)), repr(float(t))])
