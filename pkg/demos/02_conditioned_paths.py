"""Simulating the conditioned measure P two ways and checking they agree.

P-direct paths carry a Girsanov drift that pushes them away from the barrier
and never touch it. The alternative reweights Q paths by the density M_T.
Both estimate the same P-expectations, which is the cross-validation below.
"""
from __future__ import annotations

from arbforge import ArithmeticBM, HitZero, ScenarioSpec, TimeGrid, cross_validate, simulate_p_direct, simulate_q

spec = ScenarioSpec(ArithmeticBM(1.0), HitZero(), TimeGrid(1.0, 256), seed=7)

q = simulate_q(spec, 5_000)
p = simulate_p_direct(spec, 5_000)
print(f"Q paths stopped before T: {1 - q.survived.mean():.3f} (exact {1 - 0.6826895:.3f})")
print(f"P paths stopped before T: {1 - p.survived.mean():.3f}, lowest point {p.paths.min():.4f}")
print(f"rejected Euler steps under P: {p.extras['rejected_steps']}")

print("P-direct vs M_T-weighted Q, z-scores:")
for name, res in cross_validate(spec, n_paths=5_000).items():
    print(f"  {name:<8} direct={res.direct.mean:.4f} weighted={res.weighted.mean:.4f} z={res.z:+.2f}")
