"""Scenario description, time grids, path bundles and stopping rules."""
from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Union

import numpy as np

from .errors import ConfigurationError, ScenarioValidationError, ScenarioWarning, SimulationError
from .rng import TAG_BRIDGE, RngContract

SCHEMA_VERSION = 1


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TimeGrid:
    horizon_T: float
    n_steps: int
    times: np.ndarray = field(default=None, repr=False, compare=False)
    event_driven: bool = False

    def __post_init__(self):
        if not self.horizon_T > 0:
            raise ConfigurationError("horizon_T must be positive")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ConfigurationError("n_steps must be a positive integer")
        object.__setattr__(self, "n_steps", int(self.n_steps))
        if self.times is None:
            times = np.linspace(0.0, self.horizon_T, self.n_steps + 1)
        else:
            times = np.asarray(self.times, dtype=float)
            if times.shape != (self.n_steps + 1,):
                raise ConfigurationError("times must have n_steps + 1 entries")
            if not self.event_driven and not np.allclose(
                np.diff(times), self.horizon_T / self.n_steps, rtol=1e-9, atol=0.0
            ):
                raise ConfigurationError("non-uniform grid requires event_driven=True")
        if times[0] != 0.0 or np.any(np.diff(times) <= 0):
            raise ConfigurationError("grid times must start at 0 and strictly increase")
        times = times.copy()
        times[-1] = self.horizon_T
        object.__setattr__(self, "times", _frozen(times))

    @property
    def T(self) -> float:
        return self.horizon_T

    @property
    def dt(self) -> float:
        return self.horizon_T / self.n_steps

    def index_of(self, t: float) -> int:
        """Index of grid time ``t``; raises if ``t`` is not a node."""
        k = int(np.searchsorted(self.times, t - 1e-12 * max(1.0, self.horizon_T)))
        if k > self.n_steps or not math.isclose(self.times[k], t, rel_tol=1e-9, abs_tol=1e-12):
            raise ConfigurationError(f"t={t} is not a node of the grid")
        return k

    def refined(self, factor: int = 2) -> TimeGrid:
        return TimeGrid(self.horizon_T, self.n_steps * factor)


# --- base models under Q ----------------------------------------------------


@dataclass(frozen=True)
class ArithmeticBM:
    """S_t = s0 + W_t."""

    s0: float = 1.0
    label: str = "arithmetic_bm"
    continuous = True


@dataclass(frozen=True)
class CompensatedPoisson:
    """S_t = s0 + N_t - intensity * t."""

    s0: float = 1.0
    intensity: float = 1.0
    label: str = "compensated_poisson"
    continuous = False


@dataclass(frozen=True)
class StochVolToy:
    """S_t = s0 + int sigma_u dW_u with log sigma an independent Brownian motion.

    ``log sigma_t = log sigma0 + vol_of_vol * B_t``.
    """

    s0: float = 1.0
    sigma0: float = 1.0
    vol_of_vol: float = 0.5
    label: str = "stoch_vol_toy"
    continuous = True


@dataclass(frozen=True)
class BubbleToy:
    """Nonnegative local martingale with S_t <= eps after the horizon (bound only)."""

    s0: float = 1.0
    eps: float = 0.5
    label: str = "bubble_toy"
    continuous = True


@dataclass(frozen=True)
class PositiveJumpMartingale:
    """Nonnegative local martingale with only upward jumps (bound only)."""

    s0: float = 1.0
    label: str = "positive_jump_martingale"
    continuous = False


QModelSpec = Union[ArithmeticBM, CompensatedPoisson, StochVolToy, BubbleToy, PositiveJumpMartingale]


# --- stopping rules ---------------------------------------------------------


@dataclass(frozen=True)
class HitZero:
    def boundary(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))


@dataclass(frozen=True)
class HitLine:
    """First time S_t <= alpha * t."""

    alpha: float

    def boundary(self, t):
        return self.alpha * np.asarray(t, dtype=float)


@dataclass(frozen=True)
class HitLineAffine:
    """First time S_t <= a * t, for the incomplete-market bound."""

    a: float

    def boundary(self, t):
        return self.a * np.asarray(t, dtype=float)


@dataclass(frozen=True)
class ExceedCap:
    """First time S_t > K."""

    K: float


@dataclass(frozen=True)
class VolFloor:
    """First time the volatility falls to sigma_lo."""

    sigma_lo: float


@dataclass(frozen=True)
class BracketLine:
    """First time the quadratic variation [S]_t <= -a + b t."""

    a: float
    b: float


@dataclass(frozen=True)
class FirstOf:
    """Minimum of several stopping times."""

    rules: tuple

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))
        if len(self.rules) < 2:
            raise ConfigurationError("FirstOf needs at least two rules")

    def has(self, kind) -> bool:
        return any(isinstance(r, kind) for r in self.rules)

    def get(self, kind):
        for r in self.rules:
            if isinstance(r, kind):
                return r
        raise KeyError(kind)


StoppingSpec = Union[HitZero, HitLine, HitLineAffine, ExceedCap, VolFloor, BracketLine, FirstOf]


@dataclass(frozen=True)
class ScenarioSpec:
    model: Any
    stopping: Any
    grid: TimeGrid
    seed: int = 0
    n_paths: int = 10_000
    label: str = ""

    @property
    def T(self) -> float:
        return self.grid.horizon_T

    @property
    def kind(self) -> str:
        return scenario_kind(self)

    def with_grid(self, n_steps: int) -> ScenarioSpec:
        return replace(self, grid=TimeGrid(self.T, n_steps))

    def with_seed(self, seed: int) -> ScenarioSpec:
        return replace(self, seed=seed)


def scenario_kind(spec: ScenarioSpec) -> str:
    m, s = spec.model, spec.stopping
    if isinstance(m, ArithmeticBM) and isinstance(s, HitZero):
        return "bm_zero"
    if isinstance(m, ArithmeticBM) and isinstance(s, HitLine):
        return "bm_line"
    if isinstance(m, CompensatedPoisson) and isinstance(s, HitZero):
        return "poisson"
    if isinstance(s, FirstOf) and len(s.rules) == 2 and s.has(HitZero):
        if isinstance(m, StochVolToy) and s.has(VolFloor):
            return "vol_bet"
        if isinstance(m, (StochVolToy, ArithmeticBM)) and s.has(BracketLine):
            return "bracket_bet"
    if isinstance(m, BubbleToy) and isinstance(s, ExceedCap):
        return "bubble"
    if isinstance(m, PositiveJumpMartingale) and isinstance(s, HitLineAffine):
        return "incomplete_line"
    raise ConfigurationError(
        f"unsupported (model, stopping) pair: ({type(m).__name__}, {type(s).__name__})"
    )


# --- path bundles -----------------------------------------------------------

MEASURE_TAGS = ("Q", "P", "Q_weighted")


@dataclass(frozen=True)
class PathBundle:
    """Simulated paths on a grid plus per-path stopping time and weight.

    ``tau`` is ``inf`` where the rule never triggered on [0, T]; ``stopped``
    carries the same information as an explicit flag. Poisson bundles keep
    their exact jump times in CSR form (``jump_times``, ``jump_offsets``).
    """

    grid: TimeGrid
    paths: np.ndarray
    tau: np.ndarray
    weight: np.ndarray
    measure_tag: str
    path_ids: np.ndarray
    s0: float
    jump_times: np.ndarray | None = None
    jump_offsets: np.ndarray | None = None
    extras: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.measure_tag not in MEASURE_TAGS:
            raise ConfigurationError(f"unknown measure tag {self.measure_tag!r}")
        paths = np.asarray(self.paths, dtype=float)
        n = paths.shape[0]
        if paths.ndim != 2 or paths.shape[1] != self.grid.n_steps + 1:
            raise ConfigurationError("paths must be n_paths x (n_steps + 1)")
        for name in ("tau", "weight", "path_ids"):
            if np.shape(getattr(self, name)) != (n,):
                raise ConfigurationError(f"{name} must have one entry per path")
        if n and not np.all(paths[:, 0] == self.s0):
            raise ConfigurationError("every path must start at s0")
        weight = np.asarray(self.weight, dtype=float)
        if np.any(weight < 0):
            raise ConfigurationError("weights must be nonnegative")
        if self.measure_tag in ("Q", "P") and not np.all(weight == 1.0):
            raise ConfigurationError("unweighted bundles carry unit weights")
        tau = np.asarray(self.tau, dtype=float)
        if self.measure_tag == "P" and np.any(tau <= self.grid.horizon_T):
            raise SimulationError("P-bundle contains a path stopped before T")
        object.__setattr__(self, "paths", _frozen(paths))
        object.__setattr__(self, "tau", _frozen(tau))
        object.__setattr__(self, "weight", _frozen(weight))
        object.__setattr__(self, "path_ids", _frozen(self.path_ids, dtype=np.int64))
        if self.jump_times is not None:
            object.__setattr__(self, "jump_times", _frozen(self.jump_times))
            object.__setattr__(self, "jump_offsets", _frozen(self.jump_offsets, dtype=np.int64))

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]

    @property
    def stopped(self) -> np.ndarray:
        return np.isfinite(self.tau)

    @property
    def survived(self) -> np.ndarray:
        return ~self.stopped

    @property
    def terminal(self) -> np.ndarray:
        return self.paths[:, -1]

    def jumps(self, i: int) -> np.ndarray:
        if self.jump_times is None:
            raise ConfigurationError("bundle has no jump record")
        return self.jump_times[self.jump_offsets[i] : self.jump_offsets[i + 1]]

    def first_jump(self) -> np.ndarray:
        """Time of the first jump per path, ``inf`` if none on [0, T]."""
        counts = np.diff(self.jump_offsets)
        out = np.full(self.n_paths, np.inf)
        has = counts > 0
        out[has] = self.jump_times[self.jump_offsets[:-1][has]]
        return out

    @staticmethod
    def concat(bundles: list[PathBundle]) -> PathBundle:
        if not bundles:
            raise ConfigurationError("nothing to concatenate")
        b0 = bundles[0]
        jt = jo = None
        if b0.jump_times is not None:
            jt = np.concatenate([b.jump_times for b in bundles])
            offs = [np.zeros(1, dtype=np.int64)]
            base = 0
            for b in bundles:
                offs.append(b.jump_offsets[1:] + base)
                base += b.jump_offsets[-1]
            jo = np.concatenate(offs)
        extras = {}
        for key, val in b0.extras.items():
            if isinstance(val, np.ndarray) and val.ndim >= 1 and val.shape[0] == b0.n_paths:
                extras[key] = np.concatenate([b.extras[key] for b in bundles])
            elif isinstance(val, (int, float)) and not isinstance(val, bool):
                extras[key] = sum(b.extras[key] for b in bundles)
            else:
                extras[key] = val
        return PathBundle(
            grid=b0.grid,
            paths=np.concatenate([b.paths for b in bundles]),
            tau=np.concatenate([b.tau for b in bundles]),
            weight=np.concatenate([b.weight for b in bundles]),
            measure_tag=b0.measure_tag,
            path_ids=np.concatenate([b.path_ids for b in bundles]),
            s0=b0.s0,
            jump_times=jt,
            jump_offsets=jo,
            extras=extras,
        )


# --- stopping evaluation ----------------------------------------------------


def bridge_crossing_probability(x0, x1, var):
    """P(a Brownian bridge from x0 > 0 to x1 > 0 with variance ``var`` touches 0)."""
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        p = np.exp(-2.0 * x0 * x1 / var)
    return np.where((x0 > 0) & (x1 > 0), p, 1.0)


def first_crossing(dist: np.ndarray, times: np.ndarray, var, uniforms=None) -> np.ndarray:
    """First time a discretely observed diffusion ``dist`` reaches 0 or below.

    ``dist`` is ``n x (m+1)`` distance-to-boundary on grid ``times``. With
    ``uniforms`` (``n x m``), a crossing inside step ``k`` is also declared
    when ``u_k`` falls below the bridge crossing probability; ``var`` is the
    per-step variance (scalar or ``n x m``). The crossing is timed at the end
    of the step it happens in. Returns ``inf`` where nothing crossed.
    """
    dist = np.atleast_2d(dist)
    crossed = dist[:, 1:] <= 0.0
    if uniforms is not None:
        p = bridge_crossing_probability(dist[:, :-1], dist[:, 1:], var)
        crossed |= np.atleast_2d(uniforms) < p
    first_at_zero = dist[:, 0] <= 0.0
    any_c = crossed.any(axis=1)
    k = np.argmax(crossed, axis=1)
    tau = np.where(any_c, times[np.minimum(k + 1, len(times) - 1)], np.inf)
    return np.where(first_at_zero, times[0], tau)


def poisson_first_hit(jump_times, s0: float, intensity: float, T: float) -> float:
    """Exact first time ``s0 + N_t - intensity t`` reaches 0 on [0, T]."""
    level = s0
    start = 0.0
    for tj in list(jump_times) + [np.inf]:
        if level > 0:
            hit = start + level / intensity
            if hit < tj and hit <= T:
                return hit
        if tj > T:
            break
        level = level - intensity * (tj - start) + 1.0
        start = tj
    return np.inf


def evaluate_stopping(
    path,
    stopping,
    grid: TimeGrid,
    *,
    model=None,
    bridge_correction: bool = True,
    rng: RngContract | None = None,
    jump_times=None,
):
    """Stopping time of one path, ``inf`` if the rule does not trigger on [0, T].

    Continuous paths are checked at the nodes and, with ``bridge_correction``,
    between nodes using the unit-volatility Brownian bridge crossing law with
    uniforms from ``rng``. Compensated Poisson paths need ``model`` and
    ``jump_times``; their crossing is computed exactly from the linear drift.
    """
    if isinstance(model, CompensatedPoisson):
        if not isinstance(stopping, HitZero):
            raise ConfigurationError("Poisson paths only support HitZero")
        if jump_times is None:
            raise ConfigurationError("Poisson paths need their jump times")
        return poisson_first_hit(np.sort(np.asarray(jump_times, float)), model.s0, model.intensity, grid.T)
    if model is not None and not isinstance(model, ArithmeticBM):
        raise ConfigurationError(f"evaluate_stopping does not handle {type(model).__name__} paths")
    if not isinstance(stopping, (HitZero, HitLine, HitLineAffine)):
        raise ConfigurationError(f"{type(stopping).__name__} is not a barrier on a single price path")
    path = np.asarray(path, dtype=float)
    if path.shape != (grid.n_steps + 1,):
        raise ConfigurationError("path must be defined on every grid node")
    dist = path - stopping.boundary(grid.times)
    uniforms = None
    if bridge_correction:
        if rng is None:
            raise ConfigurationError("bridge correction needs an RngContract")
        uniforms = rng.grid_uniforms(grid.n_steps, TAG_BRIDGE)
    return float(first_crossing(dist[None, :], grid.times, grid.dt, uniforms)[0])


# --- validation and scenario files ------------------------------------------


def validate_scenario(spec: ScenarioSpec) -> ScenarioSpec:
    """Check parameter constraints; returns the spec with a default label filled in."""
    m, s, T = spec.model, spec.stopping, spec.T
    problems = []
    if not getattr(m, "s0", 0) > 0:
        problems.append("s0 must be > 0")
    if isinstance(m, CompensatedPoisson) and not m.intensity > 0:
        problems.append("intensity must be > 0")
    if isinstance(m, StochVolToy) and not (m.sigma0 > 0 and m.vol_of_vol >= 0):
        problems.append("sigma0 must be > 0 and vol_of_vol >= 0")
    if isinstance(m, BubbleToy) and not 0 <= m.eps < 1:
        problems.append("bubble eps must lie in [0, 1)")
    if not 0 <= int(spec.seed) < 2**64:
        problems.append("seed must be a 64-bit unsigned integer")
    if spec.n_paths < 0:
        problems.append("n_paths must be >= 0")
    for rule in s.rules if isinstance(s, FirstOf) else (s,):
        if isinstance(rule, HitLine) and not rule.alpha > 0:
            problems.append(f"HitLine requires alpha > 0 (got {rule.alpha})")
        if isinstance(rule, HitLineAffine) and not rule.a * T / 2 > 1:
            problems.append(f"incomplete-market line requires a*T/2 > 1 (got {rule.a * T / 2})")
        if isinstance(rule, ExceedCap) and not rule.K > getattr(m, "s0", 1.0):
            problems.append(f"ExceedCap requires K > s0 (got K={rule.K})")
        if isinstance(rule, VolFloor):
            if not rule.sigma_lo > 0:
                problems.append("VolFloor requires sigma_lo > 0")
            elif isinstance(m, StochVolToy) and not rule.sigma_lo < m.sigma0:
                problems.append("VolFloor requires sigma_lo < sigma0")
        if isinstance(rule, BracketLine):
            if not (rule.a > 0 and rule.b > 0):
                problems.append("BracketLine requires a > 0 and b > 0")
            elif not rule.b * T - rule.a > 0:
                problems.append(f"BracketLine requires b*T - a > 0 (got {rule.b * T - rule.a})")
    try:
        kind = scenario_kind(spec)
    except ConfigurationError as exc:
        problems.append(str(exc))
        kind = None
    if problems:
        raise ScenarioValidationError("; ".join(problems))
    if kind == "poisson" and not T > m.s0 / m.intensity:
        warnings.warn(
            f"T={T} <= s0/intensity={m.s0 / m.intensity}: the price cannot reach 0 before T, "
            "so there is no optimal-arbitrage claim (T > 1 required for s0 = intensity = 1)",
            ScenarioWarning,
            stacklevel=2,
        )
    if not spec.label:
        spec = replace(spec, label=kind)
    return spec


_MODEL_TYPES = {
    "arithmetic_bm": ArithmeticBM,
    "compensated_poisson": CompensatedPoisson,
    "stoch_vol_toy": StochVolToy,
    "bubble_toy": BubbleToy,
    "positive_jump_martingale": PositiveJumpMartingale,
}
_STOP_TYPES = {
    "hit_zero": HitZero,
    "hit_line": HitLine,
    "hit_line_affine": HitLineAffine,
    "exceed_cap": ExceedCap,
    "vol_floor": VolFloor,
    "bracket_line": BracketLine,
}
_SCENARIO_KEYS = {"schema", "label", "model", "stopping", "T", "n_steps", "n_paths", "seed"}


def _build(table, obj: dict, what: str):
    if not isinstance(obj, dict) or "type" not in obj:
        raise ScenarioValidationError(f"{what} must be an object with a 'type' field")
    obj = dict(obj)
    kind = obj.pop("type")
    if what == "stopping" and kind == "first_of":
        rules = obj.pop("rules", None)
        if obj:
            raise ScenarioValidationError(f"unknown fields in first_of: {sorted(obj)}")
        if not isinstance(rules, list):
            raise ScenarioValidationError("first_of needs a 'rules' list")
        return FirstOf(tuple(_build(table, r, what) for r in rules))
    cls = table.get(kind)
    if cls is None:
        raise ScenarioValidationError(f"unknown {what} type {kind!r}")
    allowed = {f.name for f in fields(cls)} - {"label"}
    unknown = set(obj) - allowed
    if unknown:
        raise ScenarioValidationError(f"unknown fields for {kind}: {sorted(unknown)}")
    try:
        return cls(**{k: float(v) for k, v in obj.items()})
    except (TypeError, ValueError) as exc:
        raise ScenarioValidationError(f"bad {what} parameters: {exc}") from exc


def scenario_from_dict(d: dict) -> ScenarioSpec:
    unknown = set(d) - _SCENARIO_KEYS
    if unknown:
        raise ScenarioValidationError(f"unknown scenario fields: {sorted(unknown)}")
    if d.get("schema", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ScenarioValidationError(f"unsupported schema version {d.get('schema')!r}")
    missing = {"model", "stopping", "T"} - set(d)
    if missing:
        raise ScenarioValidationError(f"missing scenario fields: {sorted(missing)}")
    try:
        grid = TimeGrid(float(d["T"]), int(d.get("n_steps", 1024)))
    except ConfigurationError as exc:
        raise ScenarioValidationError(str(exc)) from exc
    spec = ScenarioSpec(
        model=_build(_MODEL_TYPES, d["model"], "model"),
        stopping=_build(_STOP_TYPES, d["stopping"], "stopping"),
        grid=grid,
        seed=int(d.get("seed", 0)),
        n_paths=int(d.get("n_paths", 10_000)),
        label=str(d.get("label", "")),
    )
    return validate_scenario(spec)


def load_scenario(path) -> ScenarioSpec:
    with open(Path(path), encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioValidationError(f"{path}: invalid JSON ({exc})") from exc
    return scenario_from_dict(d)


def _obj_to_dict(obj, table) -> dict:
    if isinstance(obj, FirstOf):
        return {"type": "first_of", "rules": [_obj_to_dict(r, table) for r in obj.rules]}
    name = next(k for k, v in table.items() if isinstance(obj, v))
    out = {"type": name}
    out.update({f.name: getattr(obj, f.name) for f in fields(obj) if f.name != "label"})
    return out


def scenario_to_dict(spec: ScenarioSpec) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "label": spec.label,
        "model": _obj_to_dict(spec.model, _MODEL_TYPES),
        "stopping": _obj_to_dict(spec.stopping, _STOP_TYPES),
        "T": spec.T,
        "n_steps": spec.grid.n_steps,
        "n_paths": spec.n_paths,
        "seed": spec.seed,
    }


def scenario_hash(spec: ScenarioSpec) -> str:
    payload = json.dumps(scenario_to_dict(spec), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()[:16]
