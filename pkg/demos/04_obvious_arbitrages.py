"""Explicit buy-and-hold arbitrages that need no model for the hedge.

Line barrier alpha*t: under P the price stays above alpha*t, so buying one
unit at 0 and selling at T earns at least alpha*T - s0 when that is positive.
Poisson: after a quiet wait of length eps the price is below s0, and buying
then earns a guaranteed profit because P forbids ever reaching 0.
"""
from __future__ import annotations

from arbforge import ArithmeticBM, CompensatedPoisson, HitLine, HitZero, ScenarioSpec, TimeGrid
from arbforge import obvious_arbitrage_line, obvious_arbitrage_poisson, simulate_p_direct

line = ScenarioSpec(ArithmeticBM(1.0), HitLine(2.0), TimeGrid(1.0, 512), seed=3)
rep = obvious_arbitrage_line(2.0, 1.0, simulate_p_direct(line, 2_000))
print(f"line alpha=2: min profit {rep.profit.min():.4f}, guarantee {rep.extras['guaranteed_gross']:.4f},"
      f" violations {rep.extras['guarantee_violations']}")

pois = ScenarioSpec(CompensatedPoisson(1.0, 1.0), HitZero(), TimeGrid(2.0, 200), seed=5)
rep = obvious_arbitrage_poisson(0.1, simulate_p_direct(pois, 5_000))
traded = rep.profit[rep.traded]
print(f"Poisson wait 0.1: traded on {rep.extras['trading_fraction']:.3f} of paths,"
      f" min profit when trading {traded.min():.4f}, violations {rep.extras['guarantee_violations']}")
