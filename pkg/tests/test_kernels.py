from __future__ import annotations

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arbforge.errors import ConfigurationError, DomainError
from arbforge.kernels import (
    SurvivalKernel,
    density_M,
    girsanov_drift,
    hedge_bm_line,
    hedge_bm_zero,
    poisson_p_intensity,
    survival_bm_line,
    survival_bm_zero,
)
from arbforge.model import (
    ArithmeticBM,
    CompensatedPoisson,
    FirstOf,
    HitLine,
    HitZero,
    ScenarioSpec,
    StochVolToy,
    TimeGrid,
    VolFloor,
)

mp.mp.dps = 40


def mp_Phi(x):
    return mp.ncdf(x)


def oracle_zero(t, s, T):
    return 1 - 2 * mp_Phi(-mp.mpf(s) / mp.sqrt(T - t))


def oracle_line(t, s, T, a):
    t, s, T, a = map(mp.mpf, (t, s, T, a))
    tau = mp.sqrt(T - t)
    y1 = (s - a * T) / tau
    y2 = (-s + 2 * a * t - a * T) / tau
    return mp_Phi(y1) - mp.exp(2 * a * (s - a * t)) * mp_Phi(y2)


def oracle_line_delta(t, s, T, a):
    return mp.diff(lambda x: oracle_line(t, x, T, a), s)


# --- spot values ------------------------------------------------------------


def test_survival_zero_values():
    assert survival_bm_zero(0.0, 1.0, 1.0) == pytest.approx(float(oracle_zero(0, 1, 1)), abs=1e-15)
    assert round(float(survival_bm_zero(0.0, 1.0, 1.0)), 7) == 0.6826895
    assert survival_bm_zero(0.5, 1.0, 1.0) == pytest.approx(float(mp.erf(1)), abs=1e-15)
    assert round(float(survival_bm_zero(0.5, 1.0, 1.0)), 7) == 0.8427008
    assert survival_bm_zero(0.3, 0.0, 1.0) == 0.0
    assert survival_bm_zero(0.3, -2.0, 1.0) == 0.0


def test_survival_line_values():
    v = float(survival_bm_line(0.0, 1.0, 1.0, 1.0))
    assert v == pytest.approx(float(mp_Phi(0) - mp.e**2 * mp_Phi(-2)), abs=1e-14)
    assert v == pytest.approx(0.331897, abs=1.5e-6)
    assert survival_bm_line(0.4, 0.4, 1.0, 1.0) == 0.0
    assert survival_bm_line(0.4, 0.3, 1.0, 1.0) == 0.0


def test_line_value_in_the_far_tail_stays_finite():
    # e^{2 alpha x} overflows on its own here; the product with the tail probability does not
    v = survival_bm_line(0.0, 400.0, 1.0, 1.0)
    assert v == pytest.approx(1.0)
    v = survival_bm_line(0.0, 1.0, 1.0, 10.0)
    assert 0 <= v < 1e-6
    assert v == pytest.approx(float(oracle_line(0, 1, 1, 10)), rel=1e-9)


def test_hedge_values():
    h = float(hedge_bm_zero(0.0, 1.0, 1.0))
    assert h == pytest.approx(float(mp.sqrt(2 / mp.pi) * mp.exp(-0.5)), abs=1e-15)
    assert round(h, 6) == 0.483941
    assert hedge_bm_zero(0.2, -0.1, 1.0) == 0.0
    assert abs(hedge_bm_line(0.0, 50.0, 1.0, 1.0)) < 1e-200
    assert hedge_bm_line(0.0, 1.0, 1.0, 1.0) == pytest.approx(float(oracle_line_delta(0, 1, 1, 1)), rel=1e-12)


def test_hedge_central_difference_spot_checks():
    h = 1e-5
    fd = (survival_bm_zero(0, 1 + h, 1) - survival_bm_zero(0, 1 - h, 1)) / (2 * h)
    assert fd == pytest.approx(0.483941, abs=1e-6)
    fd = (survival_bm_line(0, 1 + h, 1, 1) - survival_bm_line(0, 1 - h, 1, 1)) / (2 * h)
    assert fd == pytest.approx(float(hedge_bm_line(0, 1, 1, 1)), abs=1e-6)


def test_alpha_to_zero_limits():
    for a in (1e-6, 1e-8):
        assert survival_bm_line(0.0, 1.0, 1.0, a) == pytest.approx(0.6826895, abs=1e-5)
        assert hedge_bm_line(0.0, 1.0, 1.0, a) == pytest.approx(0.483941, abs=1e-5)
    assert survival_bm_line(0.0, 1.0, 1.0, 1e-12) == pytest.approx(float(survival_bm_zero(0, 1, 1)), abs=1e-10)


@pytest.mark.parametrize("fn", [survival_bm_zero, hedge_bm_zero])
def test_domain_errors_zero(fn):
    with pytest.raises(DomainError):
        fn(1.0, 1.0, 1.0)
    with pytest.raises(DomainError):
        fn(-0.1, 1.0, 1.0)


@pytest.mark.parametrize("fn", [survival_bm_line, hedge_bm_line])
def test_domain_errors_line(fn):
    with pytest.raises(DomainError):
        fn(1.5, 1.0, 1.0, 1.0)


# --- lattice checks ---------------------------------------------------------


def _lattice(kern: SurvivalKernel):
    T = kern.T
    t = np.linspace(0.0, 0.98 * T, 50)[:, None]
    s = kern.boundary(t) + np.sqrt(T - t) * np.linspace(0.02, 3.0, 50)[None, :]
    return t, s


@pytest.mark.parametrize("alpha", [0.0, 0.5, 1.0, 2.0])
def test_delta_matches_central_differences_on_lattice(alpha):
    kern = SurvivalKernel(1.0, alpha)
    t, s = _lattice(kern)
    h = 1e-5
    fd = (kern.value(t, s + h) - kern.value(t, s - h)) / (2 * h)
    d = kern.delta(t, s)
    assert np.max(np.abs(fd - d) / np.abs(d)) <= 1e-6


@pytest.mark.parametrize("alpha", [0.0, 1.0])
def test_value_bounds_and_monotone_in_distance(alpha):
    kern = SurvivalKernel(1.0, alpha)
    t, s = _lattice(kern)
    v = kern.value(t, s)
    assert np.all((v >= 0) & (v <= 1))
    assert np.all(np.diff(v, axis=1) >= 0)
    far = kern.value(t, kern.boundary(t) + 40.0)
    assert np.allclose(far, 1.0)


@pytest.mark.parametrize("alpha", [0.0, 1.0])
def test_drift_identity_on_lattice(alpha):
    kern = SurvivalKernel(1.0, alpha)
    t, s = _lattice(kern)
    assert np.max(np.abs(kern.drift(t, s) * kern.value(t, s) - kern.delta(t, s))) <= 1e-12


def test_line_kernel_against_high_precision_oracle():
    for t, s, a in [(0.0, 1.0, 1.0), (0.3, 0.5, 1.0), (0.7, 3.0, 2.0), (0.1, 0.2, 0.5)]:
        assert survival_bm_line(t, s, 1.0, a) == pytest.approx(float(oracle_line(t, s, 1.0, a)), rel=1e-12, abs=1e-15)
        assert hedge_bm_line(t, s, 1.0, a) == pytest.approx(float(oracle_line_delta(t, s, 1.0, a)), rel=1e-10)


@given(
    t=st.floats(0.0, 0.99),
    d=st.floats(1e-3, 8.0),
    alpha=st.floats(0.0, 3.0),
)
@settings(max_examples=200, deadline=None)
def test_kernel_properties(t, d, alpha):
    kern = SurvivalKernel(1.0, alpha)
    s = float(kern.boundary(t)) + d
    v = float(kern.value(t, s))
    assert 0.0 <= v <= 1.0
    assert float(kern.value(t, s + 0.1)) >= v
    assert float(kern.delta(t, s)) >= -1e-15 if alpha == 0 else True
    if v > 0:
        assert float(kern.drift(t, s)) * v == pytest.approx(float(kern.delta(t, s)), rel=1e-12, abs=1e-300)


# --- density, drift, Poisson intensity --------------------------------------


def test_girsanov_drift_values():
    spec = ScenarioSpec(ArithmeticBM(1.0), HitZero(), TimeGrid(1.0, 10))
    d = float(girsanov_drift(0.0, 1.0, spec))
    assert d == pytest.approx(float(mp.sqrt(2 / mp.pi) * mp.exp(-0.5) / oracle_zero(0, 1, 1)), rel=1e-13)
    # the quoted 0.708876 is 0.483941/0.682689 from rounded inputs; exact is 0.7088749
    assert d == pytest.approx(0.708876, abs=2e-6)
    assert float(girsanov_drift(0.0, 60.0, spec)) == 0.0
    with pytest.raises(DomainError):
        girsanov_drift(0.5, 0.0, spec)
    with pytest.raises(ConfigurationError):
        girsanov_drift(0.0, 1.0, ScenarioSpec(CompensatedPoisson(), HitZero(), TimeGrid(2.0, 10)))


def test_density_bm_zero():
    spec = ScenarioSpec(ArithmeticBM(1.0), HitZero(), TimeGrid(1.0, 2))
    path = np.array([1.0, 1.0, 0.7])
    assert density_M(0.0, path, spec, tau=np.inf) == 1.0
    m = density_M(0.5, path, spec, tau=np.inf)
    assert m == pytest.approx(float(mp.erf(1) / oracle_zero(0, 1, 1)), rel=1e-13)
    assert round(m, 6) == 1.234384
    assert density_M(1.0, path, spec, tau=np.inf) == pytest.approx(1 / float(oracle_zero(0, 1, 1)))
    assert density_M(0.5, path, spec, tau=0.25) == 0.0


def test_density_poisson():
    spec = ScenarioSpec(CompensatedPoisson(1.0, 1.0), HitZero(), TimeGrid(2.0, 5))
    # one jump before t = 0.4: S_0.4 = 2 - 0.4
    path = np.array([1.0, 1.6, 1.2, 0.8, 0.4, 0.0])
    assert density_M(0.4, path, spec, tau=2.0) == pytest.approx(1.6)
    assert density_M(0.0, path, spec, tau=2.0) == 1.0
    assert density_M(2.0, path, spec, tau=2.0) == 0.0


def test_density_unsupported():
    spec = ScenarioSpec(StochVolToy(1.0, 1.5), FirstOf((VolFloor(1.0), HitZero())), TimeGrid(1.0, 2))
    with pytest.raises(ConfigurationError):
        density_M(0.5, np.ones(3), spec, tau=np.inf)


def test_poisson_intensity():
    assert poisson_p_intensity(1.0) == 2.0
    assert poisson_p_intensity(0.5) == 3.0
    assert poisson_p_intensity(1e12) == pytest.approx(1.0)
    assert poisson_p_intensity(1.0, 2.5) == 5.0
    with pytest.raises(DomainError):
        poisson_p_intensity(0.0)
    with pytest.raises(DomainError):
        poisson_p_intensity(-1.0)


def test_kernel_for_scenario():
    k = SurvivalKernel.for_scenario(ScenarioSpec(ArithmeticBM(1.0), HitLine(2.0), TimeGrid(3.0, 4)))
    assert (k.T, k.alpha) == (3.0, 2.0)
    with pytest.raises(ConfigurationError):
        SurvivalKernel.for_scenario(ScenarioSpec(CompensatedPoisson(), HitZero(), TimeGrid(2.0, 4)))
