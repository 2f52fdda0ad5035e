"""Trading strategies, self-financing wealth with proportional costs, and U(T)."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError
from .kernels import SurvivalKernel
from .model import PathBundle, ScenarioSpec, scenario_hash
from .simulate import iter_bundles


@dataclass
class ArbitrageProfit:
    U: float
    optimal_arbitrage: bool


def optimal_arbitrage_profit(sp: float) -> ArbitrageProfit:
    """U(T) = 1 / SP_+(1); optimal arbitrage exists iff the price is below 1."""
    if not 0 < sp <= 1:
        raise DomainError(f"superhedging price of 1 must lie in (0, 1], got {sp}")
    return ArbitrageProfit(1.0 / sp, sp < 1.0)


# --- strategies -------------------------------------------------------------


@dataclass(frozen=True)
class DeltaHedge:
    """Hold d/ds Q[sigma > T | S_t = s] units while the barrier is not hit.

    Rebalanced at grid nodes; no rebalancing inside the last ``freeze`` window
    (one grid step by default); positions capped at 1/sqrt(freeze).
    """

    kernel: SurvivalKernel
    freeze: float | None = None
    name = "delta_hedge"

    def positions(self, bundle: PathBundle):
        if bundle.jump_times is not None:
            raise ConfigurationError("delta hedge needs a Brownian scenario bundle")
        g = bundle.grid
        if not math.isclose(g.T, self.kernel.T):
            raise ConfigurationError("bundle horizon differs from the kernel horizon")
        delta_win = self.freeze or g.dt
        t = g.times[:-1]
        last = int(np.searchsorted(t, g.T - delta_win, side="right")) - 1
        last = max(last, 0)
        tk = np.minimum(t, t[last])
        src = np.minimum(np.arange(g.n_steps), last)
        s = bundle.paths[:, src]
        h = np.asarray(self.kernel.delta(tk[None, :], s))
        alive = t[None, :] < bundle.tau[:, None]
        h = np.where(alive, h, 0.0)
        cap = 1.0 / math.sqrt(delta_win)
        cap_hits = int(np.count_nonzero(np.abs(h) > cap))
        return np.clip(h, -cap, cap), cap_hits


@dataclass(frozen=True)
class BuyHoldLine:
    """Buy-and-hold for the line barrier.

    alpha*T > 1: buy one unit at 0. Otherwise buy at the first node where
    S <= alpha*T/2, if that happens by T/2. Sell at T.
    """

    alpha: float
    T: float
    name = "buy_hold_line"

    @property
    def branch(self) -> str:
        return "hold_from_start" if self.alpha * self.T > 1 else "buy_at_half_line"

    def guaranteed_gross(self, s0: float) -> float:
        if self.alpha * self.T > 1:
            return self.alpha * self.T - s0
        return self.alpha * self.T / 2

    def positions(self, bundle: PathBundle):
        if bundle.jump_times is not None:
            raise ConfigurationError("line buy-and-hold needs a Brownian scenario bundle")
        g = bundle.grid
        n, m = bundle.n_paths, g.n_steps
        if self.alpha * self.T > 1:
            return np.ones((n, m)), 0
        t = g.times[:-1]
        hit = (bundle.paths[:, :-1] <= self.alpha * self.T / 2) & (t[None, :] <= self.T / 2)
        first = np.where(hit.any(axis=1), hit.argmax(axis=1), m)
        return (np.arange(m)[None, :] >= first[:, None]).astype(float), 0


@dataclass(frozen=True)
class BuyHoldPoisson:
    """If no jump on [0, epsilon], buy one unit at epsilon and sell at the first jump."""

    epsilon: float
    name = "buy_hold_poisson"

    def guaranteed_gross(self, s0: float, intensity: float) -> float:
        return 1.0 - s0 + intensity * self.epsilon


@dataclass(frozen=True)
class ZeroStrategy:
    name = "zero"

    def positions(self, bundle: PathBundle):
        return np.zeros((bundle.n_paths, bundle.grid.n_steps)), 0


# --- ledgers and reports ----------------------------------------------------


@dataclass
class StrategyReport:
    """Per-path outcome of running one strategy on a bundle."""

    strategy: str
    x0: float
    kappa: float
    v_T: np.ndarray
    v_min: np.ndarray
    trades: np.ndarray
    cost_total: np.ndarray
    traded: np.ndarray
    gains: np.ndarray
    max_traded_price: np.ndarray
    scenario_hash: str = ""
    cap_hits: int = 0
    wealth: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return self.v_T.shape[0]

    @property
    def profit(self) -> np.ndarray:
        return self.v_T - self.x0

    @property
    def admissibility_violations(self) -> int:
        return int(np.count_nonzero(self.v_min < 0))

    def ledger_residual(self) -> np.ndarray:
        """V_T - V_0 - sum(H dS) + sum(costs); zero for a self-financing ledger."""
        return self.v_T - self.x0 - self.gains + self.cost_total

    def summary(self) -> dict:
        v = self.v_T
        empty = self.n_paths == 0
        return {
            "scenario_hash": self.scenario_hash,
            "strategy": self.strategy,
            "x0": self.x0,
            "kappa": self.kappa,
            "n_paths": self.n_paths,
            "vt_min": float(v.min()) if not empty else math.nan,
            "vt_mean": float(v.mean()) if not empty else math.nan,
            "vt_q01": float(np.quantile(v, 0.01)) if not empty else math.nan,
            "fraction_below_1": float(np.mean(v < 1.0)) if not empty else math.nan,
            "trades_mean": float(self.trades.mean()) if not empty else math.nan,
            "cost_total_mean": float(self.cost_total.mean()) if not empty else math.nan,
            "traded_fraction": float(self.traded.mean()) if not empty else math.nan,
            "admissibility_violations": self.admissibility_violations,
            "cap_hits": self.cap_hits,
        }

    def to_json(self, path=None) -> str:
        d = self.summary()
        d.update({k: v for k, v in self.extras.items() if isinstance(v, (int, float, str, bool))})
        text = json.dumps(d, indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text

    def to_csv(self, path, path_ids=None):
        ids = np.arange(self.n_paths) if path_ids is None else path_ids
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["path_id", "v_T", "v_min", "trades", "cost_total", "traded"])
            for row in zip(ids, self.v_T, self.v_min, self.trades, self.cost_total, self.traded):
                w.writerow([int(row[0]), repr(float(row[1])), repr(float(row[2])), int(row[3]),
                            repr(float(row[4])), int(row[5])])

    @staticmethod
    def concat(reports: list[StrategyReport]) -> StrategyReport:
        r0 = reports[0]
        cat = lambda name: np.concatenate([getattr(r, name) for r in reports])  # noqa: E731
        wealth = None
        if all(r.wealth is not None for r in reports):
            wealth = np.concatenate([r.wealth for r in reports])
        extras = {}
        for k, v in r0.extras.items():
            if isinstance(v, np.ndarray):
                extras[k] = np.concatenate([r.extras[k] for r in reports])
            else:
                extras[k] = v
        return StrategyReport(
            r0.strategy, r0.x0, r0.kappa, cat("v_T"), cat("v_min"), cat("trades"), cat("cost_total"),
            cat("traded"), cat("gains"), cat("max_traded_price"), r0.scenario_hash,
            sum(r.cap_hits for r in reports), wealth, extras,
        )


def _grid_ledger(h: np.ndarray, prices: np.ndarray, x0: float, kappa: float):
    """Wealth at every node for positions ``h`` held over [t_k, t_{k+1}).

    The position is opened at t_0 from zero and liquidated at T; trades are
    charged ``kappa * |dH| * |S|``.
    """
    n, m = h.shape
    full = np.zeros((n, m + 2))
    full[:, 1:-1] = h
    dh = np.diff(full, axis=1)
    costs = kappa * np.abs(dh) * np.abs(prices)
    gains = h * np.diff(prices, axis=1)
    wealth = np.empty_like(prices)
    wealth[:, 0] = x0
    np.cumsum(gains, axis=1, out=wealth[:, 1:])
    wealth[:, 1:] += x0
    wealth -= np.cumsum(costs, axis=1)
    traded_at = dh != 0
    maxp = np.where(traded_at, np.abs(prices), 0.0).max(axis=1)
    return wealth, gains.sum(axis=1), costs.sum(axis=1), traded_at.sum(axis=1), maxp


def _poisson_prices(bundle: PathBundle, times: np.ndarray, intensity: float, count_before: np.ndarray, jumped_at: bool):
    """Exact price at event times, times any perturbation factor at that time."""
    s = bundle.s0 + count_before + (1.0 if jumped_at else 0.0) - intensity * times
    factor = bundle.extras.get("price_factor")
    if factor is not None:
        k = np.clip(np.searchsorted(bundle.grid.times, times, side="right") - 1, 0, bundle.grid.n_steps)
        s = s * factor[np.arange(bundle.n_paths), k]
    return s


def _run_poisson(strategy: BuyHoldPoisson, bundle: PathBundle, x0: float, kappa: float, intensity: float):
    g = bundle.grid
    eps = strategy.epsilon
    if not 0 < eps < g.T:
        raise ConfigurationError("epsilon must lie in (0, T)")
    n = bundle.n_paths
    j1 = bundle.first_jump()
    trade = j1 > eps
    zeros = np.zeros(n)
    p_buy = _poisson_prices(bundle, np.full(n, eps), intensity, zeros, False)
    sell_t = np.minimum(j1, g.T)
    p_sell = _poisson_prices(bundle, sell_t, intensity, zeros, True)
    no_jump = ~np.isfinite(j1)
    if np.any(no_jump):
        p_sell[no_jump] = _poisson_prices(bundle, sell_t, intensity, zeros, False)[no_jump]
    gross = np.where(trade, p_sell - p_buy, 0.0)
    cost = np.where(trade, kappa * (np.abs(p_buy) + np.abs(p_sell)), 0.0)
    v_T = x0 + gross - cost
    # mark-to-market at the nodes while the unit is held
    t = g.times[None, :]
    held = trade[:, None] & (t >= eps) & (t < sell_t[:, None])
    mtm = np.where(held, bundle.paths - p_buy[:, None], 0.0)
    after = trade[:, None] & (t >= sell_t[:, None])
    wealth = x0 + mtm - np.where(held, kappa * p_buy[:, None], 0.0)
    wealth = np.where(after, v_T[:, None], wealth)
    v_min = np.minimum(wealth.min(axis=1), v_T)
    maxp = np.where(trade, np.maximum(np.abs(p_buy), np.abs(p_sell)), 0.0)
    extras = {
        "gross": gross,
        "buy_price": np.where(trade, p_buy, np.nan),
        "sell_price": np.where(trade, p_sell, np.nan),
        "sell_time": np.where(trade, sell_t, np.nan),
    }
    return StrategyReport(
        strategy.name, x0, kappa, v_T, v_min, np.where(trade, 2, 0), cost, trade, gross, maxp,
        extras=extras,
    )


def run_strategy(
    strategy,
    bundle: PathBundle,
    x0: float,
    kappa: float = 0.0,
    *,
    intensity: float = 1.0,
    scenario_hash: str = "",
    keep_wealth: bool = False,
) -> StrategyReport:
    """Self-financing wealth V = x0 + (H . S) - costs of ``strategy`` on every path."""
    if kappa < 0:
        raise DomainError("kappa must be >= 0")
    if isinstance(strategy, BuyHoldPoisson):
        if bundle.jump_times is None:
            raise ConfigurationError("Poisson buy-and-hold needs a Poisson bundle with jump times")
        rep = _run_poisson(strategy, bundle, x0, kappa, intensity)
        rep.scenario_hash = scenario_hash
        return rep
    h, cap_hits = strategy.positions(bundle)
    wealth, gains, costs, trades, maxp = _grid_ledger(h, bundle.paths, x0, kappa)
    rep = StrategyReport(
        strategy.name, x0, kappa, wealth[:, -1].copy(), wealth.min(axis=1), trades, costs,
        trades > 0, gains, maxp, scenario_hash, cap_hits, wealth if keep_wealth else None,
        extras={"gross": gains},
    )
    return rep


def replication_error(bundle: PathBundle, kernel: SurvivalKernel, x0: float | None = None) -> np.ndarray:
    """Pathwise max over nodes of |V_t - Q[sigma > T | F_t]| for the delta hedge."""
    if x0 is None:
        x0 = kernel.value(0.0, bundle.s0)
    rep = run_strategy(DeltaHedge(kernel), bundle, x0, 0.0, keep_wealth=True)
    g = bundle.grid
    target = np.empty_like(bundle.paths)
    alive = g.times[None, :] < bundle.tau[:, None]
    target[:, :-1] = np.where(alive[:, :-1], kernel.value(g.times[None, :-1], bundle.paths[:, :-1]), 0.0)
    target[:, -1] = np.where(bundle.survived, kernel.terminal(bundle.paths[:, -1]), 0.0)
    return np.abs(rep.wealth - target).max(axis=1)


def obvious_arbitrage_line(alpha: float, T: float, bundle: PathBundle, kappa: float = 0.0) -> StrategyReport:
    """Line-barrier buy-and-hold on a P-bundle, with per-branch guarantee checks."""
    if bundle.jump_times is not None or bundle.measure_tag != "P":
        raise ConfigurationError("line buy-and-hold runs on a P-measure Brownian bundle")
    if not math.isclose(bundle.grid.T, T):
        raise ConfigurationError("bundle horizon differs from T")
    strat = BuyHoldLine(alpha, T)
    rep = run_strategy(strat, bundle, bundle.s0, kappa)
    bound = strat.guaranteed_gross(bundle.s0)
    gross = rep.gains
    ok = ~rep.traded | (gross > bound)
    rep.extras.update(
        branch=strat.branch,
        guaranteed_gross=bound,
        trading_fraction=float(rep.traded.mean()) if rep.n_paths else 0.0,
        guarantee_violations=int(np.count_nonzero(~ok)),
        net_positive_violations=int(np.count_nonzero(rep.traded & (rep.profit <= 0))),
    )
    return rep


def obvious_arbitrage_poisson(epsilon: float, bundle: PathBundle, kappa: float = 0.0, *, intensity: float = 1.0) -> StrategyReport:
    """Wait-then-buy strategy on a Poisson P-bundle, with ledger guarantee checks."""
    if bundle.jump_times is None or bundle.measure_tag != "P":
        raise ConfigurationError("Poisson buy-and-hold runs on a P-measure Poisson bundle")
    strat = BuyHoldPoisson(epsilon)
    rep = run_strategy(strat, bundle, bundle.s0, kappa, intensity=intensity)
    bound = strat.guaranteed_gross(bundle.s0, intensity)
    ok = ~rep.traded | (rep.gains > bound)
    rep.extras.update(
        guaranteed_gross=bound,
        trading_fraction=float(rep.traded.mean()) if rep.n_paths else 0.0,
        guarantee_violations=int(np.count_nonzero(~ok)),
        net_positive_violations=int(np.count_nonzero(rep.traded & (rep.profit <= 0))),
    )
    return rep


# --- streamed delta-hedge experiments --------------------------------------


def delta_hedge_run(
    spec: ScenarioSpec,
    n_paths: int,
    *,
    measure: str = "p",
    x0: float | None = None,
    kappa: float = 0.0,
    threads: int = 1,
    chunk_size: int | None = None,
) -> StrategyReport:
    """Delta hedge over streamed bundles, so large path counts never sit in memory at once."""
    kern = SurvivalKernel.for_scenario(spec)
    if x0 is None:
        x0 = kern.value(0.0, spec.model.s0)
    strat = DeltaHedge(kern)
    h = scenario_hash(spec)
    reps = [run_strategy(strat, b, x0, kappa, scenario_hash=h)
            for b in iter_bundles(spec, n_paths, measure, threads=threads, chunk_size=chunk_size)]
    return StrategyReport.concat(reps)


@dataclass
class RefinementResult:
    dts: list
    errors: list
    exponent: float

    def within(self, lo: float = 0.4, hi: float = 0.6) -> bool:
        return lo <= self.exponent <= hi


def replication_refinement(
    spec: ScenarioSpec,
    dts=(1e-2, 1e-3, 1e-4),
    n_paths: int = 500,
    *,
    measure: str = "p",
    threads: int = 1,
) -> RefinementResult:
    """Fit err ~ C * dt^p, where err is the mean over paths of max_t |V_t - value(t, S_t)|.

    The same path indices are used at every step size.
    """
    kern = SurvivalKernel.for_scenario(spec)
    errs = []
    for dt in dts:
        n = max(1, int(round(spec.T / dt)))
        sub = spec.with_grid(n)
        e = [replication_error(b, kern) for b in iter_bundles(sub, n_paths, measure, threads=threads)]
        errs.append(float(np.concatenate(e).mean()))
    slope = float(np.polyfit(np.log(dts), np.log(errs), 1)[0])
    return RefinementResult(list(dts), errs, slope)
