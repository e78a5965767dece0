"""TOML run configuration: parsing, defaults and cross-checks.

Layout::

    [model]            dimension, sigma = [...], a_min, name
    [model.player1]    actions = [[...], ...], names = [...], drift = [...]
    [model.player2]    same
    [model.cost]       r11, r12, r21, r22
    [grid]             R, radii, h | h_divisor
    [solver]           tolerances, omega, max_iter, seed, method, player, opponent, threads ...
    [simulate]         dt, T, N, seed, R_clamp, x0, player, strategies, [simulate.representation]
    [lyapunov]         V, case, ell, k_radius, delta, h_chk

Every error names the offending key path.
"""

from __future__ import annotations

import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import exprlang
from .exprlang import ExprError, ExprSyntaxError
from .model import ActionSet, GameModel, ModelError, validate_model

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    def __init__(self, key: str, reason: str):
        # not super(): in ConfigExprSyntaxError the next class is ExprSyntaxError
        ValueError.__init__(self, f"{key}: {reason}")
        self.key = key
        self.reason = reason


class ConfigExprSyntaxError(ConfigError, ExprSyntaxError):
    """An expression in the config does not parse; carries key path and offset."""

    def __init__(self, key: str, err: ExprSyntaxError):
        ConfigError.__init__(self, key, str(err))
        self.offset = err.offset


@dataclass
class GridConfig:
    R: float = 4.0
    radii: list[float] | None = None
    h: float | None = None
    h_divisor: float = 200.0

    def spacing(self, R: float) -> float:
        return self.h if self.h is not None else R / self.h_divisor

    def sweep_radii(self) -> list[float]:
        return list(self.radii) if self.radii else [self.R]


@dataclass
class SolverConfig:
    tol_eig: float = 1e-10
    tol_lambda: float = 1e-10
    tol_strategy: float = 1e-8
    tol_res: float = 1e-6
    tol_dev: float = 1e-8
    omega: float = 0.5
    max_iter: int = 200
    max_policy_iter: int = 200
    method: str = "noda"
    seed: int = 0
    init: str = "uniform"
    adaptive: bool = True
    player: int = 1
    opponent: str | int = "uniform"
    deviations: int = 20
    threads: int = 1  # 0 = auto


@dataclass
class RepresentationConfig:
    r_ball: float = 1.0
    x0: list[float] = field(default_factory=lambda: [2.0])
    player: int = 1


@dataclass
class SimulateConfig:
    dt: float = 1e-3
    T: float = 50.0
    N: int = 2000
    seed: int = 0
    R_clamp: float | None = None
    x0: list[float] | None = None
    players: list[int] = field(default_factory=lambda: [1, 2])
    strategies: str = "nash"  # or "uniform"
    dump_paths: bool = False
    representation: RepresentationConfig | None = None


@dataclass
class LyapunovConfig:
    V: str
    case: str = "unbounded"
    ell: str | None = None
    k_radius: float = 1.0
    delta: float | None = None
    h_chk: float | None = None


@dataclass
class RunConfig:
    model: GameModel
    model_spec: dict
    grid: GridConfig
    solver: SolverConfig
    simulate: SimulateConfig
    lyapunov: LyapunovConfig | None
    source: str = ""

    def effective_threads(self) -> int:
        t = self.solver.threads
        return (os.cpu_count() or 1) if t == 0 else t

    def to_dict(self) -> dict:
        out = {
            "model": self.model_spec,
            "grid": asdict(self.grid),
            "solver": asdict(self.solver),
            "simulate": asdict(self.simulate),
        }
        if self.lyapunov is not None:
            out["lyapunov"] = asdict(self.lyapunov)
        return out


# -- helpers -----------------------------------------------------------------


def _table(d: dict, key: str, path: str, required: bool = False) -> dict:
    if key not in d:
        if required:
            raise ConfigError(f"{path}{key}", "missing required section")
        return {}
    v = d[key]
    if not isinstance(v, dict):
        raise ConfigError(f"{path}{key}", "expected a table")
    return v


def _num(v, key: str, kind=float, positive: bool = False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(key, f"expected a number, got {v!r}")
    if kind is int:
        if float(v) != int(v):
            raise ConfigError(key, f"expected an integer, got {v!r}")
        v = int(v)
    else:
        v = float(v)
    if positive and not v > 0:
        raise ConfigError(key, f"must be positive, got {v!r}")
    return v


def _expr(text, key: str, n_x: int, n_a: int | None):
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        text = repr(float(text))
    if not isinstance(text, str):
        raise ConfigError(key, f"expected an expression string, got {text!r}")
    try:
        return exprlang.parse(text, n_x, n_a)
    except ExprSyntaxError as err:
        raise ConfigExprSyntaxError(key, err) from err
    except ExprError as err:
        raise ConfigError(key, str(err)) from err


def _exprs(v, key: str, n: int, n_x: int, n_a: int | None) -> list:
    if isinstance(v, (str, int, float)) and n == 1:
        v = [v]
    if not isinstance(v, list) or len(v) != n:
        raise ConfigError(key, f"expected a list of {n} expressions")
    return [_expr(t, f"{key}[{k}]", n_x, n_a) for k, t in enumerate(v)]


def _unknown(d: dict, allowed: set, path: str):
    extra = sorted(set(d) - allowed)
    if extra:
        raise ConfigError(f"{path}{extra[0]}", "unknown key")


# -- sections ----------------------------------------------------------------


def _actions(p: dict, path: str, player: int) -> ActionSet:
    feats = p.get("actions", [[]])
    if not isinstance(feats, list) or not feats:
        raise ConfigError(f"{path}.actions", "expected a non-empty list of feature vectors")
    names = p.get("names")
    if names is not None and (not isinstance(names, list) or len(names) != len(feats)):
        raise ConfigError(f"{path}.names", "need one name per action")
    vecs = []
    for k, f in enumerate(feats):
        f = [f] if isinstance(f, (int, float)) and not isinstance(f, bool) else f
        label = names[k] if names else f"u{k}"
        if not isinstance(f, list):
            raise ConfigError(f"{path}.actions[{k}]", f"action {label!r}: expected a feature list")
        vecs.append([_num(v, f"{path}.actions[{k}]") for v in f])
    width = len(vecs[0])
    for k, f in enumerate(vecs):
        if len(f) != width:
            label = names[k] if names else f"u{k}"
            raise ConfigError(
                f"{path}.actions[{k}]",
                f"action {label!r} has {len(f)} features, expected {width} like the first action",
            )
    try:
        return ActionSet.from_features(player, vecs, names)
    except ModelError as err:
        raise ConfigError(f"{path}.actions", str(err)) from err


def _model(raw: dict, probe_R: float) -> tuple[GameModel, dict]:
    m = _table(raw, "model", "", required=True)
    _unknown(m, {"dimension", "sigma", "a_min", "name", "player1", "player2", "cost"}, "model.")
    if "dimension" not in m:
        raise ConfigError("model.dimension", "missing required key")
    d = _num(m["dimension"], "model.dimension", int)
    if d not in (1, 2):
        raise ConfigError("model.dimension", f"must be 1 or 2, got {d}")
    if "sigma" not in m:
        raise ConfigError("model.sigma", "missing required key")
    sigma = _exprs(m["sigma"], "model.sigma", d, d, 0)
    a_min = _num(m.get("a_min", 1e-8), "model.a_min", positive=True)

    sets, drifts = [], []
    for p in (1, 2):
        sec = _table(m, f"player{p}", "model.")
        path = f"model.player{p}"
        _unknown(sec, {"actions", "names", "drift"}, path + ".")
        aset = _actions(sec, path, p) if sec else ActionSet.from_features(p, [[]])
        sets.append(aset)
        if "drift" in sec:
            drifts.append(_exprs(sec["drift"], f"{path}.drift", d, d, aset.n_features))
        else:
            drifts.append([exprlang.parse("0")] * d)

    cost_sec = _table(m, "cost", "model.")
    _unknown(cost_sec, {"r11", "r12", "r21", "r22"}, "model.cost.")
    cost = [[None, None], [None, None]]
    for i in (1, 2):
        for j in (1, 2):
            key = f"r{i}{j}"
            cost[i - 1][j - 1] = _expr(cost_sec.get(key, "0"), f"model.cost.{key}", d, sets[j - 1].n_features)

    try:
        model = GameModel(
            dim=d,
            actions=(sets[0], sets[1]),
            drift=(tuple(drifts[0]), tuple(drifts[1])),
            sigma=tuple(sigma),
            cost=((cost[0][0], cost[0][1]), (cost[1][0], cost[1][1])),
            a_min=a_min,
            name=str(m.get("name", "game")),
        )
    except (ModelError, ExprError) as err:
        raise ConfigError("model", str(err)) from err

    line = np.linspace(-probe_R, probe_R, 21)
    probe = line[:, None] if d == 1 else np.stack(np.meshgrid(line, line, indexing="ij"), -1).reshape(-1, 2)
    try:
        validate_model(model, probe)
    except (ModelError, ExprError) as err:
        raise ConfigError("model", str(err)) from err

    spec = {
        "dimension": d,
        "name": model.name,
        "a_min": a_min,
        "sigma": [exprlang.to_string(e) for e in sigma],
        "player1": _player_spec(sets[0], drifts[0]),
        "player2": _player_spec(sets[1], drifts[1]),
        "cost": {f"r{i}{j}": exprlang.to_string(cost[i - 1][j - 1]) for i in (1, 2) for j in (1, 2)},
    }
    return model, spec


def _player_spec(aset: ActionSet, drift) -> dict:
    return {
        "names": [a.name for a in aset.actions],
        "actions": [list(a.features) for a in aset.actions],
        "drift": [exprlang.to_string(e) for e in drift],
    }


def _grid(raw: dict) -> GridConfig:
    g = _table(raw, "grid", "")
    _unknown(g, {"R", "radii", "h", "h_divisor"}, "grid.")
    cfg = GridConfig()
    if "R" in g:
        cfg.R = _num(g["R"], "grid.R", positive=True)
    if "radii" in g:
        r = g["radii"]
        if not isinstance(r, list) or not r:
            raise ConfigError("grid.radii", "expected a non-empty list")
        cfg.radii = [_num(v, f"grid.radii[{k}]", positive=True) for k, v in enumerate(r)]
        if any(b <= a for a, b in zip(cfg.radii, cfg.radii[1:])):
            raise ConfigError("grid.radii", "must be strictly increasing")
        if "R" not in g:
            cfg.R = cfg.radii[-1]
    if "h" in g and "h_divisor" in g:
        raise ConfigError("grid.h", "give either h or h_divisor, not both")
    if "h" in g:
        cfg.h = _num(g["h"], "grid.h", positive=True)
    if "h_divisor" in g:
        cfg.h_divisor = _num(g["h_divisor"], "grid.h_divisor", positive=True)
    return cfg


def _fill(obj, sec: dict, path: str, skip=()):
    for name, default in asdict(obj).items():
        if name in skip or name not in sec:
            continue
        key = f"{path}{name}"
        v = sec[name]
        if isinstance(default, bool):
            if not isinstance(v, bool):
                raise ConfigError(key, f"expected true/false, got {v!r}")
        elif isinstance(default, str):
            if not isinstance(v, str):
                raise ConfigError(key, f"expected a string, got {v!r}")
        elif isinstance(default, int):
            v = _num(v, key, int)
        elif isinstance(default, float) or (default is None and isinstance(v, (int, float))):
            v = _num(v, key)
        setattr(obj, name, v)


def _solver(raw: dict) -> SolverConfig:
    s = _table(raw, "solver", "")
    cfg = SolverConfig()
    _unknown(s, set(asdict(cfg)), "solver.")
    _fill(cfg, s, "solver.", skip=("opponent",))
    if "opponent" in s:
        o = s["opponent"]
        if not (o == "uniform" or (isinstance(o, int) and not isinstance(o, bool))):
            raise ConfigError("solver.opponent", "expected \"uniform\" or an action index")
        cfg.opponent = o
    for name in ("tol_eig", "tol_lambda", "tol_strategy", "tol_res", "tol_dev"):
        if not getattr(cfg, name) > 0:
            raise ConfigError(f"solver.{name}", "must be positive")
    if not 0 < cfg.omega <= 1:
        raise ConfigError("solver.omega", "must lie in (0, 1]")
    if cfg.method not in ("noda", "power"):
        raise ConfigError("solver.method", f"unknown method {cfg.method!r}")
    if cfg.init not in ("uniform", "random"):
        raise ConfigError("solver.init", f"unknown init {cfg.init!r}")
    if cfg.player not in (1, 2):
        raise ConfigError("solver.player", "must be 1 or 2")
    if cfg.threads < 0:
        raise ConfigError("solver.threads", "must be >= 0 (0 = auto)")
    if cfg.max_iter < 1 or cfg.max_policy_iter < 1:
        raise ConfigError("solver.max_iter", "must be >= 1")
    if cfg.deviations < 0:
        raise ConfigError("solver.deviations", "must be >= 0")
    return cfg


def _point(v, key: str, d: int) -> list[float]:
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        v = [v]
    if not isinstance(v, list) or len(v) != d:
        raise ConfigError(key, f"expected a point with {d} coordinates")
    return [_num(c, f"{key}[{k}]") for k, c in enumerate(v)]


def _simulate(raw: dict, d: int) -> SimulateConfig:
    s = _table(raw, "simulate", "")
    cfg = SimulateConfig()
    _unknown(s, set(asdict(cfg)), "simulate.")
    _fill(cfg, s, "simulate.", skip=("x0", "players", "representation", "R_clamp"))
    if "R_clamp" in s:
        cfg.R_clamp = _num(s["R_clamp"], "simulate.R_clamp", positive=True)
    cfg.x0 = _point(s["x0"], "simulate.x0", d) if "x0" in s else [0.0] * d
    if "players" in s:
        p = s["players"]
        if not isinstance(p, list) or not p or any(v not in (1, 2) for v in p):
            raise ConfigError("simulate.players", "expected a list drawn from 1, 2")
        cfg.players = [int(v) for v in p]
    if cfg.strategies not in ("nash", "uniform"):
        raise ConfigError("simulate.strategies", f"unknown choice {cfg.strategies!r}")
    if not cfg.dt > 0:
        raise ConfigError("simulate.dt", "must be positive")
    if cfg.T < 100 * cfg.dt:
        raise ConfigError("simulate.T", "must be at least 100 dt")
    if cfg.N < 2:
        raise ConfigError("simulate.N", "need at least two paths")
    if "representation" in s:
        r = _table(s, "representation", "simulate.")
        rep = RepresentationConfig()
        _unknown(r, set(asdict(rep)), "simulate.representation.")
        _fill(rep, r, "simulate.representation.", skip=("x0",))
        rep.x0 = _point(r.get("x0", [2.0] + [0.0] * (d - 1)), "simulate.representation.x0", d)
        if not rep.r_ball > 0:
            raise ConfigError("simulate.representation.r_ball", "must be positive")
        if not np.linalg.norm(rep.x0) > rep.r_ball:
            raise ConfigError("simulate.representation.x0", "must lie outside the ball")
        cfg.representation = rep
    return cfg


def _lyapunov(raw: dict, d: int) -> LyapunovConfig | None:
    if "lyapunov" not in raw:
        return None
    s = _table(raw, "lyapunov", "")
    _unknown(s, {"V", "case", "ell", "k_radius", "delta", "h_chk"}, "lyapunov.")
    if "V" not in s:
        raise ConfigError("lyapunov.V", "missing required key")
    cfg = LyapunovConfig(V=s["V"])
    _expr(cfg.V, "lyapunov.V", d, 0)
    _fill(cfg, s, "lyapunov.", skip=("V", "ell", "delta", "h_chk"))
    if cfg.case not in ("bounded", "unbounded"):
        raise ConfigError("lyapunov.case", "must be \"bounded\" or \"unbounded\"")
    if "ell" in s:
        cfg.ell = s["ell"]
        _expr(cfg.ell, "lyapunov.ell", d, 0)
    if "delta" in s:
        cfg.delta = _num(s["delta"], "lyapunov.delta", positive=True)
    if "h_chk" in s:
        cfg.h_chk = _num(s["h_chk"], "lyapunov.h_chk", positive=True)
    if cfg.case == "unbounded" and cfg.ell is None:
        raise ConfigError("lyapunov.ell", "required in the unbounded case")
    if cfg.case == "bounded" and cfg.delta is None:
        raise ConfigError("lyapunov.delta", "required in the bounded case")
    return cfg


def parse_config(raw: dict, source: str = "") -> RunConfig:
    _unknown(raw, {"model", "grid", "solver", "simulate", "lyapunov"}, "")
    grid = _grid(raw)
    model, spec = _model(raw, max(grid.R, max(grid.sweep_radii())))
    solver = _solver(raw)
    opp = 2 if solver.player == 1 else 1
    if isinstance(solver.opponent, int) and not 0 <= solver.opponent < model.n_actions(opp):
        raise ConfigError("solver.opponent", f"player {opp} has no action {solver.opponent}")
    return RunConfig(
        model=model,
        model_spec=spec,
        grid=grid,
        solver=solver,
        simulate=_simulate(raw, model.dim),
        lyapunov=_lyapunov(raw, model.dim),
        source=source,
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError("<file>", f"no such config file: {path}")
    try:
        raw = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as err:
        raise ConfigError("<file>", f"TOML syntax error: {err}") from err
    return parse_config(raw, str(path))
