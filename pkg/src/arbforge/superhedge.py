"""Superhedging prices of the survival claim, and upper bounds in incomplete markets."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import erf
from scipy.stats import poisson

from .errors import ConfigurationError, DomainError
from .kernels import survival_bm_line, survival_bm_zero
from .model import (
    BracketLine,
    CompensatedPoisson,
    ExceedCap,
    HitZero,
    ScenarioSpec,
    TimeGrid,
    VolFloor,
)
from .simulate import _poisson_events, iter_bundles, survival_estimate

KINDS = ("exact_closed_form", "exact_mc", "upper_bound")


@dataclass
class SuperhedgeReport:
    scenario: str
    price_or_bound: float
    kind: str
    implied_U: float
    method: str
    standard_error: float | None = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown report kind {self.kind!r}")
        if not 0 < self.price_or_bound <= 1:
            raise DomainError(f"price/bound must lie in (0, 1], got {self.price_or_bound}")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _report(scenario, p, kind, method, se=None, **extras) -> SuperhedgeReport:
    p = float(p)
    return SuperhedgeReport(scenario, p, kind, 1.0 / p, method, se, extras)


def _survival_zero_at(level: float, var: float) -> float:
    # P(min of a Brownian motion with variance `var` stays above -level) = erf(level / sqrt(2 var))
    return float(erf(level / math.sqrt(2.0 * var)))


def sp_bm_zero(T: float, s0: float = 1.0) -> SuperhedgeReport:
    """Price of 1_{sigma > T} when S = s0 + W and sigma is the first hit of 0."""
    if not T > 0:
        raise DomainError("T must be > 0")
    p = survival_bm_zero(0.0, s0, T)
    return _report("bm_zero", p, "exact_closed_form", "reflection principle: 1 - 2N(-s0/sqrt(T))")


def sp_bm_line(T: float, alpha: float, s0: float = 1.0) -> SuperhedgeReport:
    """Price of 1_{sigma > T} for the first hit of the line alpha * t."""
    if not T > 0:
        raise DomainError("T must be > 0")
    p = survival_bm_line(0.0, s0, T, alpha)
    return _report("bm_line", p, "exact_closed_form", "drifted-BM infimum law")


def poisson_terminal_positive(T: float, s0: float = 1.0, intensity: float = 1.0) -> float:
    """Q[S_T > 0] = Q[N_T > intensity*T - s0]."""
    return float(poisson.sf(math.floor(intensity * T - s0), intensity * T))


def sp_poisson(
    T: float,
    n_paths: int = 100_000,
    *,
    s0: float = 1.0,
    intensity: float = 1.0,
    seed: int = 0,
    chunk_size: int = 50_000,
) -> SuperhedgeReport:
    """Monte-Carlo Q[tau > T] for S = s0 + N - intensity*t, simulated event by event.

    The looser analytic figure Q[S_T > 0] is carried in ``extras``.
    """
    if not T > s0 / intensity:
        raise DomainError(
            f"optimal arbitrage needs T > s0/intensity = {s0 / intensity} (T > 1 for the unit case), got T={T}"
        )
    spec = ScenarioSpec(CompensatedPoisson(s0, intensity), HitZero(), TimeGrid(T, 1), seed=seed)
    hits = 0
    for a in range(0, n_paths, chunk_size):
        ids = np.arange(a, min(a + chunk_size, n_paths), dtype=np.int64)
        _, _, tau = _poisson_events(spec, ids, conditioned=False)
        hits += int(np.count_nonzero(np.isfinite(tau)))
    p = 1.0 - hits / n_paths
    se = math.sqrt(p * (1 - p) / n_paths)
    return _report(
        "poisson", p, "exact_mc", "event-driven Monte Carlo of Q[tau > T]", se,
        upper_bound_S_T_positive=poisson_terminal_positive(T, s0, intensity), n_paths=n_paths,
    )


def sp_poisson_grid(
    T: float, n_paths: int = 20_000, *, dt: float = 1e-4, s0: float = 1.0, intensity: float = 1.0,
    seed: int = 0, chunk_size: int = 500,
) -> SuperhedgeReport:
    """Fine-grid cross-check of :func:`sp_poisson`: Poisson counts per step, node monitoring."""
    n_steps = int(round(T / dt))
    times = np.linspace(0.0, T, n_steps + 1)[1:]
    rng = np.random.default_rng(seed)
    hits = 0
    for a in range(0, n_paths, chunk_size):
        m = min(chunk_size, n_paths - a)
        counts = np.cumsum(rng.poisson(intensity * T / n_steps, size=(m, n_steps)), axis=1, dtype=np.int32)
        s = s0 + counts - intensity * times
        hits += int(np.count_nonzero((s <= 0).any(axis=1)))
    p = 1.0 - hits / n_paths
    se = math.sqrt(p * (1 - p) / n_paths)
    return _report("poisson", p, "exact_mc", f"grid Monte Carlo, dt={dt:g}", se, n_paths=n_paths)


def bound_incomplete_line(a: float, T: float) -> SuperhedgeReport:
    """Upper bound 2/(aT) for the line barrier in an incomplete market (a*T/2 > 1)."""
    if not a * T / 2 > 1:
        raise DomainError(f"bound needs a*T/2 > 1, got {a * T / 2}")
    return _report("incomplete_line", 2.0 / (a * T), "upper_bound", "Markov inequality at T/2")


def bound_bubble(K: float, eps: float) -> SuperhedgeReport:
    """Upper bound 1 - (1 - eps)/K for the cap bet on a bubble that ends below eps."""
    if not K > 1:
        raise DomainError("bubble bound needs K > 1")
    if not 0 <= eps < 1:
        raise DomainError("bubble bound needs 0 <= eps < 1")
    return _report("bubble", 1.0 - (1.0 - eps) / K, "upper_bound", "optional stopping at the cap")


def bound_volbet(sigma_lo: float, T: float, s0: float = 1.0) -> SuperhedgeReport:
    """Upper bound 1 - 2N(-s0/(sigma_lo sqrt T)) for the joint price/volatility bet."""
    if not (sigma_lo > 0 and T > 0):
        raise DomainError("vol-bet bound needs sigma_lo > 0 and T > 0")
    p = _survival_zero_at(s0, sigma_lo * sigma_lo * T)
    return _report("vol_bet", p, "upper_bound", "time change: BM minimum over sigma_lo^2 T")


def bound_bracket(a: float, b: float, T: float, s0: float = 1.0) -> SuperhedgeReport:
    """Upper bound 1 - 2N(-s0/sqrt(bT - a)) for the quadratic-variation bet."""
    if not b * T - a > 0:
        raise DomainError(f"bracket bound needs b*T - a > 0, got {b * T - a}")
    p = _survival_zero_at(s0, b * T - a)
    return _report("bracket_bet", p, "upper_bound", "time change: BM minimum over bT - a")


@dataclass
class QSideCheck:
    """MC checks of a bound-only scenario under its toy Q model.

    ``joint`` estimates Q[sigma_1 <= T, sigma_2 > T] (zero hit before the
    second rule triggers). ``cond`` estimates Q[sigma_1 <= T | sigma_2 > T]:
    on that event the quadratic variation by T is at least the bound's
    variance, so by independence of the volatility the reflection law gives
    cond >= 1 - bound.
    """

    joint_estimate: float
    joint_se: float
    cond_estimate: float
    cond_se: float
    bound_complement: float
    n_paths: int = 0

    @property
    def assumption_holds(self) -> bool:
        """Q[sigma_1 <= T, sigma_2 > T] > 0 at three standard errors."""
        return self.joint_estimate - 3 * self.joint_se > 0

    @property
    def bound_consistent(self) -> bool:
        return self.cond_estimate >= self.bound_complement - 3 * self.cond_se


def q_side_check(spec: ScenarioSpec, n_paths: int = 20_000, *, threads: int = 1) -> QSideCheck:
    """Q-side Monte Carlo for the vol-bet and bracket-bet scenarios."""
    if spec.kind not in ("vol_bet", "bracket_bet"):
        raise ConfigurationError("Q-side checks apply to the vol-bet and bracket-bet scenarios")
    n = joint = kept = 0
    for b in iter_bundles(spec, n_paths, "q", threads=threads):
        hit = np.isfinite(b.extras["tau_hit_zero"]) & (b.extras["tau_hit_zero"] <= spec.T)
        other_never = ~np.isfinite(b.extras["tau_second"])
        joint += int(np.count_nonzero(hit & other_never))
        kept += int(np.count_nonzero(other_never))
        n += b.n_paths
    pj = joint / n
    pc = joint / kept if kept else math.nan
    cse = math.sqrt(pc * (1 - pc) / kept) if kept else math.nan
    if spec.kind == "vol_bet":
        bound = bound_volbet(spec.stopping.get(VolFloor).sigma_lo, spec.T, spec.model.s0)
    else:
        br = spec.stopping.get(BracketLine)
        bound = bound_bracket(br.a, br.b, spec.T, spec.model.s0)
    return QSideCheck(pj, math.sqrt(pj * (1 - pj) / n), pc, cse, 1.0 - bound.price_or_bound, n)


def superhedge_for_scenario(spec: ScenarioSpec, n_paths: int | None = None, *, threads: int = 1) -> SuperhedgeReport:
    """Dispatch a scenario to its price or bound."""
    kind = spec.kind
    n = spec.n_paths if n_paths is None else n_paths
    m, s = spec.model, spec.stopping
    if kind == "bm_zero":
        rep = sp_bm_zero(spec.T, m.s0)
    elif kind == "bm_line":
        rep = sp_bm_line(spec.T, s.alpha, m.s0)
    elif kind == "poisson":
        rep = sp_poisson(spec.T, n, s0=m.s0, intensity=m.intensity, seed=spec.seed)
    elif kind == "incomplete_line":
        rep = bound_incomplete_line(spec.stopping.a, spec.T)
    elif kind == "bubble":
        if not isinstance(s, ExceedCap):
            raise ConfigurationError("bubble scenario needs an ExceedCap rule")
        rep = bound_bubble(s.K / m.s0, m.eps / m.s0)
    elif kind == "vol_bet":
        rep = bound_volbet(s.get(VolFloor).sigma_lo, spec.T, m.s0)
    elif kind == "bracket_bet":
        br = s.get(BracketLine)
        rep = bound_bracket(br.a, br.b, spec.T, m.s0)
    else:  # pragma: no cover - scenario_kind already rejects the rest
        raise ConfigurationError(kind)
    rep.scenario = spec.label or kind
    return rep


def mc_survival_report(spec: ScenarioSpec, n_paths: int, *, threads: int = 1) -> SuperhedgeReport:
    """Q[sigma > T] estimated from bridge-corrected Q paths (complete BM scenarios)."""
    if spec.kind not in ("bm_zero", "bm_line"):
        raise ConfigurationError("path MC survival applies to the BM scenarios")
    est = survival_estimate(spec, n_paths, threads=threads)
    return _report(spec.label or spec.kind, est.mean, "exact_mc", "bridge-corrected Q paths", est.se, n_paths=n_paths)

