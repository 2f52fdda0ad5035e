"""Operational fragility: price perturbations and transaction costs applied to strategies.

A strategy is called operationally robust when its guarantee survives every
tested (kappa, epsilon) cell up to the thresholds below, and operationally
fragile otherwise. The guarantee of the delta hedge is terminal wealth of at
least 1 - REPLICATION_SLACK; the guarantee of a buy-and-hold strategy is a
strictly positive net profit on every path that trades.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .arbitrage import BuyHoldLine, BuyHoldPoisson, DeltaHedge, StrategyReport, run_strategy
from .errors import ConfigurationError, DomainError
from .kernels import SurvivalKernel
from .model import CompensatedPoisson, PathBundle, ScenarioSpec, scenario_hash
from .rng import TAG_PERTURB, CounterRNG
from .simulate import simulate_p_direct

KAPPA_THRESHOLD = 1e-2
EPSILON_THRESHOLD = 1e-2
REPLICATION_SLACK = 0.05
MODES = ("multiplicative-noise", "adversarial-toward-boundary")


@dataclass(frozen=True)
class PerturbationSpec:
    epsilon: float
    mode: str = "multiplicative-noise"
    seed: int = 0

    def __post_init__(self):
        if self.epsilon < 0:
            raise DomainError("epsilon must be >= 0")
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown perturbation mode {self.mode!r}")


def perturb(bundle: PathBundle, spec: PerturbationSpec) -> PathBundle:
    """Multiply every node after t=0 by a factor in [1/(1+eps), 1+eps].

    ``multiplicative-noise`` draws log-uniform factors from the counter RNG;
    ``adversarial-toward-boundary`` uses the smallest admissible factor,
    pushing prices down towards the barrier. The factors are kept in
    ``extras['price_factor']`` for strategies that trade between nodes.
    """
    if np.any(bundle.paths <= 0):
        raise DomainError("perturbation needs strictly positive prices")
    if spec.epsilon == 0:
        return bundle
    n, m = bundle.paths.shape
    lg = math.log1p(spec.epsilon)
    if spec.mode == "multiplicative-noise":
        u = CounterRNG(spec.seed).uniform_grid(bundle.path_ids, m, TAG_PERTURB)
        factor = np.exp((2.0 * u - 1.0) * lg)
    else:
        factor = np.full((n, m), 1.0 / (1.0 + spec.epsilon))
    factor[:, 0] = 1.0
    factor = np.clip(factor, 1.0 / (1.0 + spec.epsilon), 1.0 + spec.epsilon)
    lo, hi = 1.0 / (1.0 + spec.epsilon), 1.0 + spec.epsilon
    new = bundle.paths * factor
    # the product can round a last bit outside the band; step back inside
    for _ in range(4):
        r = new / bundle.paths
        below, above = r < lo, r > hi
        if not (below.any() or above.any()):
            break
        new = np.where(below, np.nextafter(new, np.inf), np.where(above, np.nextafter(new, 0.0), new))
    extras = dict(bundle.extras, price_factor=factor, perturbation=spec)
    return replace(bundle, paths=new, extras=extras)


def ratio_within_band(original: PathBundle, perturbed: PathBundle, epsilon: float) -> bool:
    r = perturbed.paths / original.paths
    return bool(np.all(r >= 1.0 / (1.0 + epsilon)) and np.all(r <= 1.0 + epsilon))


def strategy_for(name: str, scenario: ScenarioSpec, *, wait: float = 0.1):
    """Build a named strategy for a scenario; returns (strategy, x0, guarantee kind)."""
    kind = scenario.kind
    if name == "delta_hedge":
        if kind not in ("bm_zero", "bm_line"):
            raise ConfigurationError("delta hedge needs a BM scenario")
        kern = SurvivalKernel.for_scenario(scenario)
        return DeltaHedge(kern), kern.value(0.0, scenario.model.s0), "replication"
    if name in ("buy_hold", "buy_hold_line") and kind == "bm_line":
        return BuyHoldLine(scenario.stopping.alpha, scenario.T), scenario.model.s0, "profit"
    if name in ("buy_hold", "buy_hold_poisson") and kind == "poisson":
        return BuyHoldPoisson(wait), scenario.model.s0, "profit"
    raise ConfigurationError(f"strategy {name!r} does not apply to scenario {kind!r}")


def guarantee_holds(report: StrategyReport, guarantee: str) -> np.ndarray:
    if guarantee == "replication":
        return report.v_T >= 1.0 - REPLICATION_SLACK
    return np.where(report.traded, report.profit > 0, report.v_T >= report.x0)


@dataclass
class FragilityReport:
    scenario: str
    strategy: str
    kappa_grid: list
    epsilon_grid: list
    mode: str
    cells: list
    verdict: str
    thresholds: dict = field(default_factory=lambda: {"kappa": KAPPA_THRESHOLD, "epsilon": EPSILON_THRESHOLD})
    scenario_hash: str = ""

    def cell(self, kappa: float, epsilon: float) -> dict:
        for c in self.cells:
            if c["kappa"] == kappa and c["epsilon"] == epsilon:
                return c
        raise KeyError((kappa, epsilon))

    def to_json(self, path=None) -> str:
        d = {k: getattr(self, k) for k in
             ("scenario", "scenario_hash", "strategy", "mode", "kappa_grid", "epsilon_grid", "cells",
              "verdict", "thresholds")}
        text = json.dumps(d, indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text

    def heatmap_csv(self, path, statistic: str = "vt_min"):
        """Rows kappa, columns epsilon."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["kappa\\epsilon"] + [repr(e) for e in self.epsilon_grid])
            for k in self.kappa_grid:
                w.writerow([repr(k)] + [repr(self.cell(k, e)[statistic]) for e in self.epsilon_grid])


def _cell_stats(rep: StrategyReport, guarantee: str) -> dict:
    ok = guarantee_holds(rep, guarantee)
    trading_profit = rep.profit[rep.traded]
    return {
        "kappa": rep.kappa,
        "vt_min": float(rep.v_T.min()),
        "vt_mean": float(rep.v_T.mean()),
        "fraction_below_guarantee": float(np.mean(~ok)),
        "min_trading_profit": float(trading_profit.min()) if trading_profit.size else math.nan,
        "traded_fraction": float(rep.traded.mean()),
        "cost_total_mean": float(rep.cost_total.mean()),
    }


def fragility_sweep(
    scenario: ScenarioSpec,
    strategy: str,
    kappa_grid,
    epsilon_grid,
    n_paths: int = 2_000,
    *,
    mode: str = "multiplicative-noise",
    wait: float = 0.1,
    bundle: PathBundle | None = None,
) -> FragilityReport:
    """Run one strategy over a (kappa, epsilon) grid on a fixed set of P-paths."""
    strat, x0, guarantee = strategy_for(strategy, scenario, wait=wait)
    if bundle is None:
        bundle = simulate_p_direct(scenario, n_paths)
    intensity = scenario.model.intensity if isinstance(scenario.model, CompensatedPoisson) else 1.0
    h = scenario_hash(scenario)
    cells = []
    for eps in epsilon_grid:
        pb = perturb(bundle, PerturbationSpec(eps, mode, seed=scenario.seed))
        for kappa in kappa_grid:
            rep = run_strategy(strat, pb, x0, kappa, intensity=intensity, scenario_hash=h)
            c = _cell_stats(rep, guarantee)
            c["epsilon"] = eps
            cells.append(c)
    in_scope = [c for c in cells if c["kappa"] <= KAPPA_THRESHOLD and c["epsilon"] <= EPSILON_THRESHOLD]
    robust = all(c["fraction_below_guarantee"] == 0.0 for c in in_scope)
    return FragilityReport(
        scenario.label or scenario.kind, strat.name, list(kappa_grid), list(epsilon_grid), mode, cells,
        "operationally_robust" if robust else "operationally_fragile", scenario_hash=h,
    )



