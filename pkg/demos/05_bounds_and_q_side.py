"""Upper bounds in incomplete markets and a Monte-Carlo check under the toy Q.

For the volatility bet the claim pays if the price avoids 0 while the
volatility stays above a floor. On that event the quadratic variation is at
least sigma_lo^2 T, so the hit probability is at least the reflection value.
"""
from __future__ import annotations

from pathlib import Path

from arbforge.model import load_scenario
from arbforge.superhedge import q_side_check, superhedge_for_scenario

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

for name in ("volbet_lo1_T1", "bracket_a1_b2_T1"):
    spec = load_scenario(SCENARIOS / f"{name}.json")
    bound = superhedge_for_scenario(spec)
    chk = q_side_check(spec, 4_000)
    print(name)
    print(f"  price bound {bound.price_or_bound:.7f}")
    print(f"  Q[zero hit, second rule never] = {chk.joint_estimate:.4f} +/- {chk.joint_se:.4f}"
          f" (positive: {chk.assumption_holds})")
    print(f"  Q[zero hit | second rule never] = {chk.cond_estimate:.4f} >= {chk.bound_complement:.4f}:"
          f" {chk.bound_consistent}")
