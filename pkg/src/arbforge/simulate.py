"""Path generation under Q, under the conditioned measure P, and Q with M_T weights."""
from __future__ import annotations

import hashlib
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator

import numpy as np
from scipy.special import wrightomega

from .errors import ConfigurationError, SimulationError
from .kernels import SurvivalKernel, terminal_density
from .model import (
    ArithmeticBM,
    BracketLine,
    CompensatedPoisson,
    PathBundle,
    ScenarioSpec,
    StochVolToy,
    VolFloor,
    first_crossing,
    scenario_hash,
)
from .rng import (
    TAG_BRIDGE,
    TAG_INCREMENT,
    TAG_JUMP,
    TAG_P_INCREMENT,
    TAG_VOL,
    TAG_VOL_BRIDGE,
    CounterRNG,
)

# cap on path values held in memory by one chunk
CHUNK_BUDGET = 2_000_000
MAX_BUNDLE_CELLS = 60_000_000
# adaptive Euler: keep drift * h below this fraction of the distance to the barrier
DRIFT_FRACTION = 0.1
MAX_HALVINGS = 40
MAX_REJECTION_RATE = 1e-3


def default_chunk(spec: ScenarioSpec) -> int:
    return max(1, CHUNK_BUDGET // (spec.grid.n_steps + 1))


def _check_capacity(spec: ScenarioSpec, n_paths: int):
    if n_paths * (spec.grid.n_steps + 1) > MAX_BUNDLE_CELLS:
        raise SimulationError(
            f"{n_paths} paths x {spec.grid.n_steps + 1} nodes exceeds the in-memory limit; "
            "use iter_bundles to stream chunks"
        )


# --- Q simulators -----------------------------------------------------------


def _q_bm(spec: ScenarioSpec, ids: np.ndarray) -> PathBundle:
    g = spec.grid
    rng = CounterRNG(spec.seed)
    z = rng.normal_grid(ids, g.n_steps, TAG_INCREMENT)
    paths = np.empty((ids.size, g.n_steps + 1))
    paths[:, 0] = spec.model.s0
    np.cumsum(z * math.sqrt(g.dt), axis=1, out=paths[:, 1:])
    paths[:, 1:] += spec.model.s0
    u = rng.uniform_grid(ids, g.n_steps, TAG_BRIDGE)
    tau = first_crossing(paths - spec.stopping.boundary(g.times), g.times, g.dt, u)
    return PathBundle(g, paths, tau, np.ones(ids.size), "Q", ids, spec.model.s0)


def _poisson_events(spec: ScenarioSpec, ids: np.ndarray, conditioned: bool):
    """Event-driven jump times; returns (pidx, jump time, tau) arrays."""
    m, T = spec.model, spec.T
    lam = m.intensity
    rng = CounterRNG(spec.seed)
    n = ids.size
    t = np.zeros(n)
    level = np.full(n, float(m.s0))
    tau = np.full(n, np.inf)
    active = np.arange(n)
    rec_p, rec_t = [], []
    j = 0
    while active.size:
        e = rng.exponentials(ids[active], j, 0, TAG_JUMP)
        lv = level[active]
        if conditioned:
            if np.any(lv <= 0):
                raise SimulationError("conditioned Poisson path reached 0")
            # solve lam*u - log(1 - lam*u/v) = e exactly via the Wright omega function
            y = wrightomega(np.log(lv) + lv - e) / lv
            gap = lv * (1.0 - y) / lam
        else:
            gap = e / lam
            hit = t[active] + lv / lam
            cross = (lv > 0) & (hit < t[active] + gap) & (hit <= T) & np.isinf(tau[active])
            tau[active[cross]] = hit[cross]
        tnext = t[active] + gap
        jumped = tnext <= T
        rec_p.append(active[jumped])
        rec_t.append(tnext[jumped])
        level[active] = lv - lam * gap + 1.0
        t[active] = tnext
        active = active[jumped]
        j += 1
    pidx = np.concatenate(rec_p) if rec_p else np.zeros(0, dtype=np.int64)
    times = np.concatenate(rec_t) if rec_t else np.zeros(0)
    order = np.lexsort((times, pidx))
    return pidx[order], times[order], tau


def _poisson_bundle(spec: ScenarioSpec, ids: np.ndarray, conditioned: bool) -> PathBundle:
    g, m = spec.grid, spec.model
    pidx, jt, tau = _poisson_events(spec, ids, conditioned)
    n = ids.size
    counts = np.bincount(pidx, minlength=n)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    # a jump at time u is visible at every node t_k >= u
    node = np.searchsorted(g.times, jt, side="left")
    hist = np.zeros((n, g.n_steps + 2))
    np.add.at(hist, (pidx, node), 1.0)
    n_t = np.cumsum(hist[:, :-1], axis=1)
    paths = m.s0 + n_t - m.intensity * g.times[None, :]
    paths[:, 0] = m.s0
    tag = "P" if conditioned else "Q"
    return PathBundle(g, paths, tau, np.ones(n), tag, ids, m.s0, jump_times=jt, jump_offsets=offsets)


def _q_local_vol(spec: ScenarioSpec, ids: np.ndarray) -> PathBundle:
    """Vol-bet and bracket-bet scenarios: S = s0 + int sigma dW, exp-BM volatility."""
    g, m, rule = spec.grid, spec.model, spec.stopping
    rng = CounterRNG(spec.seed)
    sigma0 = getattr(m, "sigma0", 1.0)
    nu = getattr(m, "vol_of_vol", 0.0)
    log_vol = np.empty((ids.size, g.n_steps + 1))
    log_vol[:, 0] = math.log(sigma0)
    if nu > 0:
        np.cumsum(rng.normal_grid(ids, g.n_steps, TAG_VOL) * (nu * math.sqrt(g.dt)), axis=1, out=log_vol[:, 1:])
        log_vol[:, 1:] += math.log(sigma0)
    else:
        log_vol[:, 1:] = math.log(sigma0)
    vol = np.exp(log_vol[:, :-1])
    paths = np.empty_like(log_vol)
    paths[:, 0] = m.s0
    np.cumsum(vol * math.sqrt(g.dt) * rng.normal_grid(ids, g.n_steps, TAG_INCREMENT), axis=1, out=paths[:, 1:])
    paths[:, 1:] += m.s0
    var = vol * vol * g.dt
    tau_zero = first_crossing(paths, g.times, var, rng.uniform_grid(ids, g.n_steps, TAG_BRIDGE))
    if rule.has(VolFloor):
        lo = rule.get(VolFloor).sigma_lo
        if nu > 0:
            u2 = rng.uniform_grid(ids, g.n_steps, TAG_VOL_BRIDGE)
            tau_second = first_crossing(log_vol - math.log(lo), g.times, nu * nu * g.dt, u2)
        else:
            tau_second = first_crossing(log_vol - math.log(lo), g.times, 1.0)
    else:
        br = rule.get(BracketLine)
        qv = np.zeros_like(paths)
        np.cumsum(var, axis=1, out=qv[:, 1:])
        # piecewise-linear [S] against a line: node checks are exact
        tau_second = first_crossing(qv - (-br.a + br.b * g.times), g.times, 1.0)
    tau = np.minimum(tau_zero, tau_second)
    extras = {"tau_hit_zero": tau_zero, "tau_second": tau_second}
    return PathBundle(g, paths, tau, np.ones(ids.size), "Q", ids, m.s0, extras=extras)


def _q_chunk(spec: ScenarioSpec, ids: np.ndarray) -> PathBundle:
    kind = spec.kind
    if kind in ("bm_zero", "bm_line"):
        return _q_bm(spec, ids)
    if kind == "poisson":
        return _poisson_bundle(spec, ids, conditioned=False)
    if kind in ("vol_bet", "bracket_bet"):
        return _q_local_vol(spec, ids)
    raise ConfigurationError(f"scenario {kind!r} is bound-only and has no path simulator")


# --- P-direct simulators ----------------------------------------------------


def _p_bm(spec: ScenarioSpec, ids: np.ndarray, max_rejection_rate: float = MAX_REJECTION_RATE) -> PathBundle:
    """Euler scheme for dS = dW + (delta/value)(t, S) dt with adaptive halving.

    A step is halved until drift * h <= DRIFT_FRACTION * distance; steps that
    land on or below the barrier are rejected and redrawn. The drift is frozen
    at T - dt over the last step to avoid the 1/sqrt(T - t) singularity.
    """
    g = spec.grid
    kern = SurvivalKernel.for_scenario(spec)
    rng = CounterRNG(spec.seed)
    n = ids.size
    dt = g.dt
    unit = dt / 2.0**MAX_HALVINGS
    full = np.int64(2**MAX_HALVINGS)
    t_freeze = g.T - dt
    s = np.full(n, float(spec.model.s0))
    paths = np.empty((n, g.n_steps + 1))
    paths[:, 0] = s
    rejected = 0
    accepted = 0
    for k in range(g.n_steps):
        t0 = g.times[k]
        used = np.zeros(n, dtype=np.int64)
        draws = np.zeros(n, dtype=np.uint64)
        active = np.arange(n)
        while active.size:
            tl = t0 + used[active] * unit
            sa = s[active]
            dist = sa - kern.boundary(tl)
            te = np.minimum(tl, t_freeze)
            val = np.asarray(kern.value(te, sa))
            dlt = np.asarray(kern.delta(te, sa))
            small = val < 1e-9
            # survival is linear in the distance right at the barrier
            drift = np.where(small, 1.0 / dist, dlt / np.where(small, 1.0, val))
            left = full - used[active]
            ratio = np.abs(drift) * dt / (DRIFT_FRACTION * dist)
            m = np.where(ratio > 1.0, np.ceil(np.log2(np.maximum(ratio, 1.0))), 0.0)
            m = np.minimum(m, MAX_HALVINGS).astype(np.int64)
            h_units = np.minimum(left, np.int64(1) << (MAX_HALVINGS - m))
            h = h_units * unit
            z = rng.normals(ids[active], k, draws[active], TAG_P_INCREMENT)
            draws[active] += np.uint64(1)
            s_new = sa + drift * h + np.sqrt(h) * z
            ok = s_new - kern.boundary(tl + h) > 0.0
            rejected += int(np.count_nonzero(~ok))
            accepted += int(np.count_nonzero(ok))
            acc = active[ok]
            s[acc] = s_new[ok]
            used[acc] += h_units[ok]
            active = active[used[active] < full]
        paths[:, k + 1] = s
    rate = rejected / max(accepted, 1)
    if rate > max_rejection_rate:
        raise SimulationError(
            f"{rejected} rejected Euler steps ({rate:.2e} of {accepted}) exceeds {max_rejection_rate:g}"
        )
    extras = {"rejected_steps": rejected, "accepted_steps": accepted}
    tau = np.full(n, np.inf)
    return PathBundle(g, paths, tau, np.ones(n), "P", ids, spec.model.s0, extras=extras)


def _p_chunk(spec: ScenarioSpec, ids: np.ndarray) -> PathBundle:
    kind = spec.kind
    if kind in ("bm_zero", "bm_line"):
        return _p_bm(spec, ids)
    if kind == "poisson":
        return _poisson_bundle(spec, ids, conditioned=True)
    raise ConfigurationError(f"scenario {kind!r} has no direct P simulator (Q-side checks only)")


def _w_chunk(spec: ScenarioSpec, ids: np.ndarray) -> PathBundle:
    if spec.kind not in ("bm_zero", "bm_line", "poisson"):
        raise ConfigurationError(f"scenario {spec.kind!r} has no closed-form density M")
    b = _q_chunk(spec, ids)
    return PathBundle(
        b.grid, b.paths, b.tau, terminal_density(b, spec), "Q_weighted", ids, b.s0,
        jump_times=b.jump_times, jump_offsets=b.jump_offsets, extras=b.extras,
    )


_SIMULATORS = {"q": _q_chunk, "p": _p_chunk, "p-weighted": _w_chunk}


# --- public API -------------------------------------------------------------


def iter_bundles(
    spec: ScenarioSpec,
    n_paths: int,
    measure: str = "q",
    *,
    start: int = 0,
    chunk_size: int | None = None,
    threads: int = 1,
) -> Iterator[PathBundle]:
    """Yield bundles of consecutive path indices, in index order.

    Results are the same for any ``chunk_size`` and ``threads`` because each
    path draws only from its own counter stream.
    """
    fn = _SIMULATORS[measure]
    chunk = chunk_size or default_chunk(spec)
    bounds = [(a, min(a + chunk, start + n_paths)) for a in range(start, start + n_paths, chunk)]
    jobs = (np.arange(a, b, dtype=np.int64) for a, b in bounds)
    if threads <= 1:
        for ids in jobs:
            yield fn(spec, ids)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        # bounded look-ahead keeps memory proportional to the worker count
        pending = []
        for ids in jobs:
            pending.append(pool.submit(fn, spec, ids))
            if len(pending) > threads:
                yield pending.pop(0).result()
        for fut in pending:
            yield fut.result()


def _collect(spec, n_paths, measure, start, chunk_size, threads) -> PathBundle:
    if n_paths == 0:
        return _empty(spec, {"q": "Q", "p": "P", "p-weighted": "Q_weighted"}[measure])
    _check_capacity(spec, n_paths)
    return PathBundle.concat(list(iter_bundles(spec, n_paths, measure, start=start, chunk_size=chunk_size, threads=threads)))


def _empty(spec: ScenarioSpec, tag: str) -> PathBundle:
    z = np.zeros(0)
    jt = jo = None
    if isinstance(spec.model, CompensatedPoisson):
        jt, jo = np.zeros(0), np.zeros(1, dtype=np.int64)
    return PathBundle(spec.grid, np.zeros((0, spec.grid.n_steps + 1)), z, z, tag,
                      np.zeros(0, dtype=np.int64), spec.model.s0, jump_times=jt, jump_offsets=jo)


def simulate_q(spec: ScenarioSpec, n_paths: int, *, start: int = 0, chunk_size=None, threads: int = 1) -> PathBundle:
    """Paths of S under the base measure Q with stopping times attached."""
    return _collect(spec, n_paths, "q", start, chunk_size, threads)


def simulate_p_direct(spec: ScenarioSpec, n_paths: int, *, start: int = 0, chunk_size=None, threads: int = 1) -> PathBundle:
    """Paths under P simulated from the conditioned dynamics; all survive past T."""
    b = _collect(spec, n_paths, "p", start, chunk_size, threads)
    if b.n_paths and not np.all(b.survived):
        raise SimulationError("a P-direct path was stopped before T")
    return b


def simulate_p_weighted(spec: ScenarioSpec, n_paths: int, *, start: int = 0, chunk_size=None, threads: int = 1) -> PathBundle:
    """Q-paths weighted by M_T; the weighted empirical law represents P."""
    return _collect(spec, n_paths, "p-weighted", start, chunk_size, threads)


# --- path functionals and estimates -----------------------------------------


def _s_half(b: PathBundle):
    return b.paths[:, b.grid.n_steps // 2]


def _s_T(b: PathBundle):
    return b.paths[:, -1]


def _s_max(b: PathBundle):
    return b.paths.max(axis=1)


def _s_integral(b: PathBundle):
    return np.trapezoid(b.paths, b.grid.times, axis=1)


def _n_T(b: PathBundle):
    return np.diff(b.jump_offsets).astype(float)


DEFAULT_STATISTICS: dict[str, Callable[[PathBundle], np.ndarray]] = {
    "S_T/2": _s_half,
    "S_T": _s_T,
    "max_S": _s_max,
    "int_S_dt": _s_integral,
}
POISSON_STATISTICS = dict(DEFAULT_STATISTICS, N_T=_n_T)


@dataclass
class Estimate:
    mean: float
    se: float
    n: int


class _Accumulator:
    def __init__(self, names):
        self.names = list(names)
        self.n = 0
        self.s1 = dict.fromkeys(self.names, 0.0)
        self.s2 = dict.fromkeys(self.names, 0.0)

    def add(self, values: dict[str, np.ndarray], n: int):
        self.n += n
        for k in self.names:
            v = values[k]
            self.s1[k] += float(np.sum(v))
            self.s2[k] += float(np.sum(v * v))

    def result(self) -> dict[str, Estimate]:
        out = {}
        for k in self.names:
            m = self.s1[k] / self.n
            var = max(self.s2[k] / self.n - m * m, 0.0) * self.n / max(self.n - 1, 1)
            out[k] = Estimate(m, math.sqrt(var / self.n), self.n)
        return out


def estimate_statistics(bundles, statistics: dict) -> dict[str, Estimate]:
    """Means and standard errors of ``weight * f(path)`` over streamed bundles."""
    acc = _Accumulator(statistics)
    for b in bundles:
        acc.add({k: b.weight * f(b) for k, f in statistics.items()}, b.n_paths)
    return acc.result()


@dataclass
class CrossValResult:
    statistic: str
    direct: Estimate
    weighted: Estimate
    z: float
    applicable: bool = True

    @property
    def passed(self) -> bool:
        return self.applicable and abs(self.z) <= 3.0


def compare_estimates(a: dict[str, Estimate], b: dict[str, Estimate]) -> dict[str, CrossValResult]:
    out = {}
    for k in a:
        se = math.hypot(a[k].se, b[k].se)
        diff = a[k].mean - b[k].mean
        if se > 0:
            out[k] = CrossValResult(k, a[k], b[k], diff / se)
        elif diff == 0:
            out[k] = CrossValResult(k, a[k], b[k], 0.0)
        else:
            out[k] = CrossValResult(k, a[k], b[k], math.nan, applicable=False)
    return out


def cross_validate(
    spec: ScenarioSpec,
    statistics: dict | None = None,
    n_paths: int = 100_000,
    *,
    threads: int = 1,
    chunk_size: int | None = None,
) -> dict[str, CrossValResult]:
    """z-scores between P-direct and M_T-weighted Q estimates of path functionals."""
    if statistics is None:
        statistics = POISSON_STATISTICS if spec.kind == "poisson" else DEFAULT_STATISTICS
    direct = estimate_statistics(iter_bundles(spec, n_paths, "p", chunk_size=chunk_size, threads=threads), statistics)
    weighted = estimate_statistics(
        iter_bundles(spec, n_paths, "p-weighted", chunk_size=chunk_size, threads=threads), statistics
    )
    return compare_estimates(direct, weighted)


def survival_estimate(spec: ScenarioSpec, n_paths: int, *, threads: int = 1, chunk_size=None) -> Estimate:
    """Monte-Carlo Q[sigma > T] from streamed Q bundles."""
    stat = {"survive": lambda b: b.survived.astype(float)}
    return estimate_statistics(iter_bundles(spec, n_paths, "q", threads=threads, chunk_size=chunk_size), stat)["survive"]


# --- export -----------------------------------------------------------------

CSV_HEADER = "path_id,terminal,tau,weight"


def bundle_to_csv(bundle: PathBundle, path) -> str:
    """Write one row per path; returns the sha256 of the file contents."""
    lines = [CSV_HEADER]
    for pid, st, tau, w in zip(bundle.path_ids, bundle.terminal, bundle.tau, bundle.weight):
        lines.append(f"{pid},{st!r},{'inf' if math.isinf(tau) else repr(float(tau))},{float(w)!r}")
    text = "\n".join(lines) + "\n"
    Path(path).write_text(text, encoding="utf-8")
    return hashlib.sha256(text.encode()).hexdigest()


def cache_dir() -> Path:
    return Path(os.environ.get("ARBFORGE_CACHE_DIR", Path.home() / ".cache" / "arbforge"))


def cache_key(spec: ScenarioSpec, measure: str, n_paths: int) -> str:
    return f"{scenario_hash(spec)}-{measure}-{n_paths}"


def save_bundle(bundle: PathBundle, spec: ScenarioSpec, measure: str) -> Path:
    """Store a bundle as compressed npz under the cache directory."""
    d = cache_dir()
    d.mkdir(parents=True, exist_ok=True)
    target = d / f"{cache_key(spec, measure, bundle.n_paths)}.npz"
    arrays = dict(paths=bundle.paths, tau=bundle.tau, weight=bundle.weight, path_ids=bundle.path_ids)
    if bundle.jump_times is not None:
        arrays.update(jump_times=bundle.jump_times, jump_offsets=bundle.jump_offsets)
    np.savez_compressed(target, measure_tag=np.array(bundle.measure_tag), **arrays)
    return target


def load_bundle(spec: ScenarioSpec, measure: str, n_paths: int) -> PathBundle | None:
    target = cache_dir() / f"{cache_key(spec, measure, n_paths)}.npz"
    if not target.exists():
        return None
    with np.load(target) as z:
        return PathBundle(
            spec.grid, z["paths"], z["tau"], z["weight"], str(z["measure_tag"]), z["path_ids"], spec.model.s0,
            jump_times=z["jump_times"] if "jump_times" in z else None,
            jump_offsets=z["jump_offsets"] if "jump_offsets" in z else None,
        )
