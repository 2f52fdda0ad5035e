"""Optimal arbitrage by absolutely continuous measure change: simulation, pricing and stress tests."""
from __future__ import annotations

from .arbitrage import (
    BuyHoldLine,
    BuyHoldPoisson,
    DeltaHedge,
    StrategyReport,
    ZeroStrategy,
    obvious_arbitrage_line,
    obvious_arbitrage_poisson,
    optimal_arbitrage_profit,
    run_strategy,
)
from .errors import ConfigurationError, DomainError, ScenarioValidationError, ScenarioWarning, SimulationError
from .fragility import FragilityReport, PerturbationSpec, fragility_sweep, perturb
from .kernels import (
    SurvivalKernel,
    density_M,
    girsanov_drift,
    hedge_bm_line,
    hedge_bm_zero,
    poisson_p_intensity,
    survival_bm_line,
    survival_bm_zero,
)
from .model import (
    ArithmeticBM,
    BracketLine,
    BubbleToy,
    CompensatedPoisson,
    ExceedCap,
    FirstOf,
    HitLine,
    HitLineAffine,
    HitZero,
    PathBundle,
    ScenarioSpec,
    StochVolToy,
    TimeGrid,
    VolFloor,
    evaluate_stopping,
    load_scenario,
    validate_scenario,
)
from .simulate import cross_validate, simulate_p_direct, simulate_p_weighted, simulate_q
from .superhedge import (
    SuperhedgeReport,
    bound_bracket,
    bound_bubble,
    bound_incomplete_line,
    bound_volbet,
    sp_bm_line,
    sp_bm_zero,
    sp_poisson,
)

__version__ = "0.1.0"
