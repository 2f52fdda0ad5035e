from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
import pytest

from arbforge.arbitrage import (
    BuyHoldLine,
    BuyHoldPoisson,
    DeltaHedge,
    StrategyReport,
    ZeroStrategy,
    delta_hedge_run,
    obvious_arbitrage_line,
    obvious_arbitrage_poisson,
    optimal_arbitrage_profit,
    replication_error,
    replication_refinement,
    run_strategy,
)
from arbforge.errors import ConfigurationError, DomainError
from arbforge.kernels import SurvivalKernel
from arbforge.model import ArithmeticBM, CompensatedPoisson, HitLine, HitZero, ScenarioSpec, TimeGrid
from arbforge.simulate import simulate_p_direct, simulate_q

BM0 = ScenarioSpec(ArithmeticBM(1.0), HitZero(), TimeGrid(1.0, 1000), seed=201)
LINE1 = ScenarioSpec(ArithmeticBM(1.0), HitLine(1.0), TimeGrid(1.0, 500), seed=202)
LINE2 = ScenarioSpec(ArithmeticBM(1.0), HitLine(2.0), TimeGrid(1.0, 500), seed=203)
POIS = ScenarioSpec(CompensatedPoisson(1.0, 1.0), HitZero(), TimeGrid(2.0, 200), seed=204)
SP0 = 0.6826894921370859


@pytest.fixture(scope="module")
def p_bm0():
    return simulate_p_direct(BM0, 1000)


@pytest.fixture(scope="module")
def q_bm0():
    return simulate_q(BM0, 1000)


@pytest.fixture(scope="module")
def p_pois():
    return simulate_p_direct(POIS, 20_000)


# --- U(T) ---------------------------------------------------------------------


def test_optimal_arbitrage_profit():
    r = optimal_arbitrage_profit(0.6826895)
    assert r.U == pytest.approx(1.46480, abs=1e-5) and r.optimal_arbitrage
    r = optimal_arbitrage_profit(1.0)
    assert r.U == 1.0 and not r.optimal_arbitrage
    assert optimal_arbitrage_profit(0.5).U == 2.0
    for bad in (0.0, -0.1, 1.0000001):
        with pytest.raises(DomainError):
            optimal_arbitrage_profit(bad)


def test_reciprocal_is_bit_exact():
    for sp in (SP0, 0.331898, 0.1, 0.75):
        assert optimal_arbitrage_profit(sp).U == 1.0 / sp


# --- ledger -------------------------------------------------------------------


def test_zero_strategy(q_bm0):
    rep = run_strategy(ZeroStrategy(), q_bm0, 1.0)
    assert np.all(rep.v_T == 1.0) and np.all(rep.trades == 0)


@pytest.mark.parametrize("kappa", [0.0, 1e-3, 1e-2])
def test_self_financing_identity(p_bm0, kappa):
    rep = run_strategy(DeltaHedge(SurvivalKernel(1.0)), p_bm0, SP0, kappa)
    scale = max(1.0, float(np.abs(p_bm0.paths).max()))
    assert np.max(np.abs(rep.ledger_residual())) <= 1e-10 * scale


def test_self_financing_identity_poisson(p_pois):
    rep = run_strategy(BuyHoldPoisson(0.1), p_pois, 1.0, 1e-3)
    assert np.max(np.abs(rep.ledger_residual())) <= 1e-12


@dataclass(frozen=True)
class _Scaled:
    inner: DeltaHedge
    c: float
    name = "scaled"

    def positions(self, bundle):
        h, hits = self.inner.positions(bundle)
        return self.c * h, hits


@pytest.mark.parametrize("c", [4.0, 0.25, 3.0])
def test_scaling(p_bm0, c):
    base = DeltaHedge(SurvivalKernel(1.0))
    a = run_strategy(base, p_bm0, SP0)
    b = run_strategy(_Scaled(base, c), p_bm0, c * SP0)
    if math.log2(c).is_integer():
        assert np.array_equal(b.v_T, c * a.v_T)
    else:
        assert np.allclose(b.v_T, c * a.v_T, rtol=1e-13, atol=1e-15)


# --- delta hedge ----------------------------------------------------------------


def test_delta_hedge_positions_zero_after_stop_and_frozen(q_bm0):
    kern = SurvivalKernel(1.0)
    h, _ = DeltaHedge(kern).positions(q_bm0)
    t = q_bm0.grid.times[:-1]
    after = t[None, :] >= q_bm0.tau[:, None]
    assert np.all(h[after] == 0)
    # no rebalancing strictly inside (T - freeze, T]
    alive = np.isinf(q_bm0.tau)
    hw, _ = DeltaHedge(kern, freeze=0.1).positions(q_bm0)
    k = int(np.searchsorted(t, 0.9, side="right")) - 1
    assert np.all(hw[alive, k:] == hw[alive, k : k + 1])


def test_delta_hedge_cap_is_logged():
    spec = BM0.with_grid(100)
    b = simulate_q(spec, 2000)
    h, hits = DeltaHedge(SurvivalKernel(1.0), freeze=0.01).positions(b)
    assert np.all(np.abs(h) <= 10.0)
    assert hits >= 0


def test_delta_hedge_replicates_on_p_paths(p_bm0):
    rep = run_strategy(DeltaHedge(SurvivalKernel(1.0)), p_bm0, SP0)
    assert np.mean(np.abs(rep.v_T - 1.0) <= 0.05) >= 0.95  # dt = 1e-3 here; 1e-4 in the acceptance suite
    assert rep.v_min.min() >= -0.05


def test_replication_error_small_on_q_paths(q_bm0):
    err = replication_error(q_bm0, SurvivalKernel(1.0))
    assert np.median(err) < 0.05


def test_delta_hedge_run_streams_same_result():
    spec = BM0.with_grid(200)
    a = delta_hedge_run(spec, 300, chunk_size=300)
    b = delta_hedge_run(spec, 300, chunk_size=50, threads=2)
    assert np.array_equal(a.v_T, b.v_T)


def test_refinement_exponent_on_q_paths():
    r = replication_refinement(BM0, n_paths=300, measure="q")
    assert r.errors[0] > r.errors[1] > r.errors[2]
    assert r.within(0.4, 0.6), r


def test_delta_hedge_rejects_poisson_bundle(p_pois):
    with pytest.raises(ConfigurationError):
        run_strategy(DeltaHedge(SurvivalKernel(2.0)), p_pois, 0.5)


# --- obvious arbitrages ---------------------------------------------------------


def test_line_hold_from_start_profit():
    b = simulate_p_direct(LINE2, 2000)
    rep = obvious_arbitrage_line(2.0, 1.0, b, 0.0)
    assert rep.extras["branch"] == "hold_from_start"
    assert np.all(rep.profit >= 1.0)
    rep = obvious_arbitrage_line(2.0, 1.0, b, 1e-3)
    assert np.all(rep.trades == 2)
    assert np.all(rep.profit >= 1.0 - 2e-3 * rep.max_traded_price)
    assert np.all(rep.profit > 0)
    # costs are exactly the two logged trades
    assert np.allclose(rep.cost_total, 1e-3 * (1.0 + b.terminal), rtol=1e-15)
    assert rep.extras["guarantee_violations"] == 0 and rep.extras["net_positive_violations"] == 0


def test_line_buy_at_half_branch():
    b = simulate_p_direct(LINE1, 2000)
    rep = obvious_arbitrage_line(1.0, 1.0, b, 0.0)
    assert rep.extras["branch"] == "buy_at_half_line"
    assert 0 < rep.extras["trading_fraction"] < 1
    assert np.all(rep.profit[rep.traded] > 0.5)
    assert np.all(rep.profit[~rep.traded] == 0)
    assert np.all(rep.trades <= 2)


def test_line_guaranteed_gross():
    assert BuyHoldLine(2.0, 1.0).guaranteed_gross(1.0) == 1.0
    assert BuyHoldLine(1.0, 1.0).guaranteed_gross(1.0) == 0.5


def test_poisson_wait_then_buy(p_pois):
    rep = obvious_arbitrage_poisson(0.1, p_pois, 0.0)
    tr = rep.traded
    assert np.all(rep.profit[tr] >= 0.1)
    assert np.all(rep.profit[~tr] == 0)
    assert np.all(rep.trades <= 2)
    # P[no jump on [0, eps]] with intensity (s+1)/s along s = 1 - t
    exact = math.exp(-(0.1 - math.log(0.9)))
    frac = tr.mean()
    assert abs(frac - exact) <= 3 * math.sqrt(exact * (1 - exact) / tr.size)
    rep = obvious_arbitrage_poisson(0.1, p_pois, 1e-3)
    assert np.all(rep.profit[tr] >= 0.1 - 2e-3 * 2.0)
    assert np.all(rep.profit[tr] > 0)
    assert np.allclose(rep.cost_total[tr], 1e-3 * (rep.extras["buy_price"] + rep.extras["sell_price"])[tr])
    assert np.all(rep.extras["buy_price"][tr] <= 2.0)


def test_poisson_no_trades_when_everyone_jumps_first(p_pois):
    # under P the first jump always comes before t = 1
    rep = obvious_arbitrage_poisson(1.0, p_pois, 1e-3)
    assert not rep.traded.any() and np.all(rep.v_T == 1.0)


def test_obvious_arbitrage_rejects_wrong_bundles(p_pois, q_bm0, p_bm0):
    with pytest.raises(ConfigurationError):
        obvious_arbitrage_line(2.0, 1.0, p_pois)
    with pytest.raises(ConfigurationError):
        obvious_arbitrage_line(2.0, 1.0, q_bm0)
    with pytest.raises(ConfigurationError):
        obvious_arbitrage_poisson(0.1, p_bm0)
    with pytest.raises(ConfigurationError):
        obvious_arbitrage_line(2.0, 2.0, p_bm0)
    with pytest.raises(DomainError):
        run_strategy(ZeroStrategy(), p_bm0, 1.0, -0.1)


# --- reports --------------------------------------------------------------------


def test_report_serialization(tmp_path, p_bm0):
    rep = run_strategy(DeltaHedge(SurvivalKernel(1.0)), p_bm0, SP0, 1e-3, scenario_hash="abc")
    d = json.loads(rep.to_json(tmp_path / "r.json"))
    for key in ("scenario_hash", "x0", "kappa", "n_paths", "vt_min", "vt_mean", "vt_q01", "fraction_below_1",
                "trades_mean", "cost_total_mean"):
        assert key in d
    assert d["scenario_hash"] == "abc" and d["n_paths"] == 1000
    rep.to_csv(tmp_path / "r.csv")
    assert len((tmp_path / "r.csv").read_text().splitlines()) == 1001


def test_report_concat(p_bm0):
    strat = DeltaHedge(SurvivalKernel(1.0))
    whole = run_strategy(strat, p_bm0, SP0)
    assert StrategyReport.concat([whole, whole]).n_paths == 2000
