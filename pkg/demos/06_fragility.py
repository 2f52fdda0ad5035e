"""How the arbitrages behave once trading costs and price errors are added.

Each cell of the sweep reruns the strategy with proportional cost kappa on
prices perturbed by a ratio within 1 +/- eps. A strategy is operationally
robust when small frictions never break its guarantee.
"""
from __future__ import annotations

from arbforge import ArithmeticBM, CompensatedPoisson, HitLine, HitZero, ScenarioSpec, TimeGrid, fragility_sweep

kappas, epss = [0.0, 1e-3, 1e-2], [0.0, 1e-2]
cases = [
    (ScenarioSpec(ArithmeticBM(1.0), HitZero(), TimeGrid(1.0, 512), seed=1), "delta_hedge"),
    (ScenarioSpec(ArithmeticBM(1.0), HitLine(2.0), TimeGrid(1.0, 512), seed=2), "buy_hold"),
    (ScenarioSpec(CompensatedPoisson(1.0, 1.0), HitZero(), TimeGrid(2.0, 200), seed=4), "buy_hold"),
]
for spec, strategy in cases:
    rep = fragility_sweep(spec, strategy, kappas, epss, n_paths=500)
    print(f"{spec.kind} / {strategy}: {rep.verdict}")
    for k in kappas:
        row = "  ".join(f"{rep.cell(k, e)['fraction_below_guarantee']:.3f}" for e in epss)
        print(f"  kappa={k:<6g} share below guarantee per eps {epss}: {row}")
