"""Closed-form survival probabilities, hedge ratios and conditioned drifts.

For S_t = s0 + W_t under Q and a barrier L(t) = alpha * t (alpha = 0 is the
zero barrier), ``value(t, s)`` is Q[no hit before T | S_t = s] and ``delta``
its derivative in s. The conditioned measure has density value/value(0, s0)
and adds ``delta / value`` to the drift of S.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erf, log_ndtr, ndtr

from .errors import ConfigurationError, DomainError
from .model import ArithmeticBM, CompensatedPoisson, HitLine, HitZero, ScenarioSpec

_SQRT_2PI = np.sqrt(2.0 * np.pi)
_SQRT_2_OVER_PI = np.sqrt(2.0 / np.pi)


def _time_to_go(t, T):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t >= T):
        raise DomainError(f"kernels need 0 <= t < T (T={T})")
    return T - t


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def survival_bm_zero(t, s, T):
    """Q[Brownian path from s at time t stays above 0 until T] = 1 - 2 N(-s / sqrt(T - t))."""
    tau = _time_to_go(t, T)
    s = np.asarray(s, dtype=float)
    # 1 - 2N(-x) == erf(x / sqrt 2), no cancellation for small x
    v = erf(s / np.sqrt(2.0 * tau))
    return _out(np.where(s > 0, v, 0.0))


def hedge_bm_zero(t, s, T):
    """d/ds of :func:`survival_bm_zero`; zero at or below the barrier."""
    tau = _time_to_go(t, T)
    s = np.asarray(s, dtype=float)
    h = _SQRT_2_OVER_PI / np.sqrt(tau) * np.exp(-(s * s) / (2.0 * tau))
    return _out(np.where(s > 0, h, 0.0))


def _line_terms(t, s, T, alpha):
    if not alpha > 0:
        raise DomainError("alpha must be > 0")
    tau = _time_to_go(t, T)
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    rt = np.sqrt(tau)
    x = s - alpha * t
    y1 = (s - alpha * T) / rt
    y2 = (-s + 2.0 * alpha * t - alpha * T) / rt
    return x, y1, y2, rt


def survival_bm_line(t, s, T, alpha):
    """Q[no hit of the line alpha*u before T | S_t = s].

    N(Y1) - exp(2 alpha (s - alpha t)) N(Y2), with the exponential folded
    into log N(Y2) so the product stays finite far from the line.
    """
    x, y1, y2, _ = _line_terms(t, s, T, alpha)
    with np.errstate(over="ignore"):
        v = ndtr(y1) - np.exp(2.0 * alpha * x + log_ndtr(y2))
    return _out(np.where(x > 0, np.clip(v, 0.0, 1.0), 0.0))


def hedge_bm_line(t, s, T, alpha):
    """d/ds of :func:`survival_bm_line` (not divided by Q[sigma > T])."""
    x, y1, y2, rt = _line_terms(t, s, T, alpha)
    ex = 2.0 * alpha * x
    with np.errstate(over="ignore"):
        h = (
            np.exp(-0.5 * y1 * y1) / (_SQRT_2PI * rt)
            + np.exp(ex - 0.5 * y2 * y2) / (_SQRT_2PI * rt)
            - 2.0 * alpha * np.exp(ex + log_ndtr(y2))
        )
    return _out(np.where(x > 0, h, 0.0))


@dataclass(frozen=True)
class SurvivalKernel:
    """Survival probability of the zero barrier (``alpha == 0``) or a line barrier."""

    T: float
    alpha: float = 0.0

    @classmethod
    def for_scenario(cls, spec: ScenarioSpec) -> SurvivalKernel:
        if not isinstance(spec.model, ArithmeticBM):
            raise ConfigurationError("survival kernels exist only for arithmetic BM scenarios")
        if isinstance(spec.stopping, HitZero):
            return cls(spec.T)
        if isinstance(spec.stopping, HitLine):
            return cls(spec.T, spec.stopping.alpha)
        raise ConfigurationError(f"no survival kernel for {type(spec.stopping).__name__}")

    def boundary(self, t):
        return self.alpha * np.asarray(t, dtype=float)

    def value(self, t, s):
        if self.alpha == 0.0:
            return survival_bm_zero(t, s, self.T)
        return survival_bm_line(t, s, self.T, self.alpha)

    def delta(self, t, s):
        if self.alpha == 0.0:
            return hedge_bm_zero(t, s, self.T)
        return hedge_bm_line(t, s, self.T, self.alpha)

    def drift(self, t, s):
        """Extra drift of S under the conditioned measure: delta / value."""
        v = np.asarray(self.value(t, s))
        if np.any(v <= 0):
            raise DomainError("conditioned drift is singular where the survival probability is 0")
        return _out(np.asarray(self.delta(t, s)) / v)

    def terminal(self, s):
        """Limit of value(t, s) as t -> T: indicator of being above the barrier."""
        return (np.asarray(s, dtype=float) > self.alpha * self.T).astype(float)


def girsanov_drift(t, s, spec: ScenarioSpec):
    """Drift added to S by conditioning on survival: hedge / survival."""
    return SurvivalKernel.for_scenario(spec).drift(t, s)


def survival_probability(spec: ScenarioSpec) -> float:
    """Q[sigma > T] from the starting point (closed form, BM scenarios)."""
    return SurvivalKernel.for_scenario(spec).value(0.0, spec.model.s0)


def poisson_p_intensity(s_minus, base_intensity: float = 1.0):
    """Jump intensity of S under the conditioned Poisson measure, base * (s + 1) / s."""
    s_minus = np.asarray(s_minus, dtype=float)
    if np.any(s_minus <= 0):
        raise DomainError("conditioned Poisson intensity needs s_minus > 0")
    return _out(base_intensity * (s_minus + 1.0) / s_minus)


def density_M(t: float, path, spec: ScenarioSpec, *, tau: float) -> float:
    """Density process M_t of the conditioned measure along one grid path.

    ``path`` holds the path on ``spec.grid`` and ``tau`` is its stopping time.
    BM scenarios use value(t, S_t) / value(0, s0); the Poisson scenario uses
    S_{t ^ tau} / s0.
    """
    k = spec.grid.index_of(t)
    s_t = float(np.asarray(path, dtype=float)[k])
    if t >= tau:
        return 0.0
    if isinstance(spec.model, CompensatedPoisson):
        if not isinstance(spec.stopping, HitZero):
            raise ConfigurationError("Poisson density needs the HitZero rule")
        return s_t / spec.model.s0
    kern = SurvivalKernel.for_scenario(spec)
    norm = kern.value(0.0, spec.model.s0)
    if k == spec.grid.n_steps:
        return float(kern.terminal(s_t)) / norm
    return float(kern.value(t, s_t)) / norm


def terminal_density(bundle, spec: ScenarioSpec) -> np.ndarray:
    """M_T for every path of a Q-bundle."""
    alive = bundle.survived
    if isinstance(spec.model, CompensatedPoisson):
        return np.where(alive, bundle.terminal / spec.model.s0, 0.0)
    kern = SurvivalKernel.for_scenario(spec)
    norm = kern.value(0.0, spec.model.s0)
    return np.where(alive, kern.terminal(bundle.terminal) / norm, 0.0)
