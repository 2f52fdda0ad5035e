"""Replicating the survival claim by delta hedging along P paths.

Starting from the Q-price of the claim, the self-financing hedge ends near 1
on every P path. The replication error shrinks like sqrt(dt).
"""
from __future__ import annotations

import numpy as np

from arbforge import ArithmeticBM, HitZero, ScenarioSpec, TimeGrid
from arbforge.arbitrage import delta_hedge_run, replication_refinement

spec = ScenarioSpec(ArithmeticBM(1.0), HitZero(), TimeGrid(1.0, 1000), seed=11)
rep = delta_hedge_run(spec, 300)
print(f"initial capital {rep.x0:.7f}, target payoff 1")
print(f"terminal wealth: mean {rep.v_T.mean():.4f}, 1% quantile {np.quantile(rep.v_T, 0.01):.4f}")
print(f"share of paths within 0.05 of the payoff: {(rep.v_T >= 0.95).mean():.3f}")

ref = replication_refinement(spec, dts=(1e-2, 1e-3), n_paths=100)
for dt, err in zip(ref.dts, ref.errors):
    print(f"  dt={dt:g}: mean max error {err:.4f}")
print(f"fitted error exponent {ref.exponent:.2f} (0.5 expected)")
