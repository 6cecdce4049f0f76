"""Null laws of the maximum of a negatively drifted walk and its argmax.

For a random walk (or Brownian motion) S with drift -delta/2 and unit
variance started at 0, let M = sup S and sigma = the time at which the
supremum is attained.  Looking backward from a detection alarm, the CUSUM
value and the estimated detection delay of an *unchanged* panel are
distributed like (M, sigma), so these laws are the null reference used to
isolate changed panels.

Continuous-time laws are exact; ``corrected_exponential_cdf`` and
``ig_overshoot_cdf`` are the discrete-time approximations with the
overshoot correction rho = 0.5826 for standard normal steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.integrate import quad
from scipy.special import gammainc, log_ndtr, ndtr

OVERSHOOT_RHO = 0.5826

_SQRT2PI = math.sqrt(2.0 * math.pi)


class NumericError(RuntimeError):
    """Quadrature failed to reach the requested tolerance."""


@dataclass(frozen=True)
class NullLawParams:
    """Drift magnitude of the monitored walk; the walk drift is -delta/2."""

    delta: float
    rho: float = OVERSHOOT_RHO

    def __post_init__(self) -> None:
        if not (self.delta > 0.0 and math.isfinite(self.delta)):
            raise ValueError(f"delta must be a positive finite real, got {self.delta}")


def _phi(z: float) -> float:
    return math.exp(-0.5 * z * z) / _SQRT2PI


def _exp_ndtr(log_coef: float, z: float) -> float:
    # exp(log_coef) * Phi(z), evaluated in log space so that large
    # exponential factors against tiny normal tails cannot overflow.
    return math.exp(log_coef + log_ndtr(z))


def max_tail(x: float, params: NullLawParams) -> float:
    """P[M > x] = exp(-delta * x) for x >= 0: the maximum is exponential."""
    if x < 0.0:
        raise ValueError(f"x must be nonnegative, got {x}")
    return math.exp(-params.delta * x)


def joint_density(t: float, x: float, params: NullLawParams) -> float:
    """Joint density of (argmax, max): f(t, x) = (delta*x/t^1.5) * phi(x/sqrt(t) + (delta/2)*sqrt(t))."""
    _require_positive(t=t, x=x)
    d = params.delta
    rt = math.sqrt(t)
    return d * x / (t * rt) * _phi(x / rt + 0.5 * d * rt)


def argmax_given_max_cdf(t: float, x: float, params: NullLawParams) -> float:
    """P[argmax < t | max = x]: inverse Gaussian first-passage CDF.

    Equals the probability that a Brownian motion with drift +delta/2
    crosses level x before time t:
    exp(delta*x) * Phi(-x/sqrt(t) - (delta/2)*sqrt(t)) + Phi(-x/sqrt(t) + (delta/2)*sqrt(t)).
    """
    _require_positive(t=t, x=x)
    d = params.delta
    rt = math.sqrt(t)
    a = x / rt
    b = 0.5 * d * rt
    val = _exp_ndtr(d * x, -a - b) + ndtr(-a + b)
    return min(1.0, max(0.0, val))


def argmax_given_max_density(t: float, x: float, params: NullLawParams) -> float:
    """Conditional density of the argmax given max = x: (x/t^1.5) * phi(-x/sqrt(t) + (delta/2)*sqrt(t))."""
    _require_positive(t=t, x=x)
    rt = math.sqrt(t)
    return x / (t * rt) * _phi(-x / rt + 0.5 * params.delta * rt)


def argmax_density(t: float, params: NullLawParams) -> float:
    """Marginal density of the argmax: (delta/sqrt(t)) * phi((delta/2)*sqrt(t)) - (delta^2/2) * (1 - Phi((delta/2)*sqrt(t)))."""
    _require_positive(t=t)
    d = params.delta
    rt = math.sqrt(t)
    b = 0.5 * d * rt
    return d / rt * _phi(b) - 0.5 * d * d * (1.0 - ndtr(b))


def argmax_survival(t: float, params: NullLawParams) -> float:
    """P[argmax > t] = (4 + (delta^2/2) t) (1 - Phi((delta/2) sqrt(t))) - (1 - G(t)).

    G is the regularized lower incomplete gamma CDF with shape 3/2 and
    rate delta^2/8.
    """
    if t < 0.0:
        raise ValueError(f"t must be nonnegative, got {t}")
    d = params.delta
    b = 0.5 * d * math.sqrt(t)
    gamma_cdf = gammainc(1.5, d * d * t / 8.0)
    val = (4.0 + 0.5 * d * d * t) * (1.0 - ndtr(b)) - (1.0 - gamma_cdf)
    return min(1.0, max(0.0, val))


def argmax_max_moments(params: NullLawParams) -> tuple[float, float, float, float]:
    """(E[argmax], Var(argmax), Cov(argmax, max), Corr(argmax, max)).

    Closed forms: 2/delta^2, 12/delta^4, 2/delta^3 and 1/sqrt(3); the
    correlation is drift-free.
    """
    d = params.delta
    return 2.0 / d**2, 12.0 / d**4, 2.0 / d**3, 1.0 / math.sqrt(3.0)


def joint_tail(t: float, x: float, params: NullLawParams) -> float:
    """P[argmax < t, max > x], by quadrature over the exponential law of the max.

    On {max > x} the walk first reaches x and climbs an independent
    Exp(delta) height E above it; the argmax then sits at the first
    passage of level x + E under the reversed, positive-drift dynamics:

        P[argmax < t, max > x]
            = exp(-delta*x) * E[ FP(t, x + E) ],

    with FP(t, c) the drift +delta/2 first-passage CDF evaluated by
    ``argmax_given_max_cdf``.  The expectation is a one-dimensional
    adaptive quadrature with the substitution u = delta * m.
    """
    _require_positive(t=t, x=x)
    d = params.delta

    def integrand(u: float) -> float:
        return math.exp(-u) * argmax_given_max_cdf(t, x + u / d, params)

    val, err = quad(integrand, 0.0, math.inf, epsabs=1e-12, epsrel=1e-10, limit=200)
    if err > max(1e-8 * abs(val), 1e-12):
        raise NumericError(
            f"joint_tail quadrature error {err:.3e} exceeds tolerance at t={t}, x={x}"
        )
    return math.exp(-d * x) * val


def corrected_exponential_cdf(x: float, params: NullLawParams) -> float:
    """Working null CDF of delta*(M + rho) in discrete time: max(0, 1 - exp(-x))."""
    return max(0.0, 1.0 - math.exp(-min(x, 700.0)))


def ig_overshoot_cdf(n: float, x: float, params: NullLawParams) -> float:
    """P[argmax <= n | max = x] for the discrete walk, overshoot-corrected.

    Same inverse Gaussian form as ``argmax_given_max_cdf`` with x replaced
    by x + rho; clamped to [0, 1].
    """
    _require_positive(n=n, x=x)
    return argmax_given_max_cdf(n, x + params.rho, params)


def _require_positive(**named: float) -> None:
    for name, value in named.items():
        if not (value > 0.0 and math.isfinite(value)):
            raise ValueError(f"{name} must be a positive finite real, got {value}")
