"""Simulation checks of the series approximations behind the bias correction.

Two expansions of E[1/n] for a Poisson count n are compared on the same
draws: the Taylor series in central moments around the sample mean, and the
inverse-factorial series whose summands are sample means of
1/((n+1)...(n+j)) terms.  The inverse-factorial route converges much faster,
which is the reason the +1 denominator adjustment works as well as it does.
The second-order identity E[n10 n01 / n11] ~ (m10 m01 / m11)(m11 + 1)/m11
and the exact identity E[1/(n+1)] = (1 - e^{-m})/m are checked by direct
Monte Carlo.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_N_TERMS = 5


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed))


@dataclass(frozen=True)
class ApproxReport:
    """Cumulative Taylor and inverse-factorial approximations of E[1/n].

    ``empirical_target`` is the mean of 1/n over the nonzero draws (a zero
    draw would make the naive mean infinite; at the Poisson means of
    interest zeros are essentially impossible anyway).  Deltas are
    ``empirical_target - approximation``.
    """

    m: float
    draws: int
    n_zero_draws: int
    empirical_target: float
    target_se: float
    taylor: tuple[float, ...]
    inverse_factorial: tuple[float, ...]

    @property
    def taylor_delta(self) -> tuple[float, ...]:
        return tuple(self.empirical_target - t for t in self.taylor)

    @property
    def inverse_factorial_delta(self) -> tuple[float, ...]:
        return tuple(self.empirical_target - t for t in self.inverse_factorial)


def compare_expansions(m: float, draws: int, seed: int) -> ApproxReport:
    """Five-term Taylor vs inverse-factorial approximations of E[1/n]."""
    if m <= 0:
        raise ValueError("the Poisson mean must be positive")
    if draws < 1000:
        raise ValueError("need at least 1000 draws")
    x = _rng(seed).poisson(m, draws).astype(float)
    nonzero = x[x > 0]
    inv = 1.0 / nonzero
    target = float(inv.mean())
    target_se = float(inv.std(ddof=1) / math.sqrt(inv.size))

    m_hat = float(x.mean())
    centered = x - m_hat
    taylor = []
    acc = 0.0
    for j in range(_N_TERMS):
        term = (-1.0) ** j * float(np.mean(centered**j)) / m_hat ** (j + 1)
        acc += term
        taylor.append(acc)

    factors = np.ones_like(x)
    if_terms = []
    acc = 0.0
    for j in range(1, _N_TERMS + 1):
        factors = factors * (x + j)
        acc += math.factorial(j - 1) * float(np.mean(1.0 / factors))
        if_terms.append(acc)

    return ApproxReport(
        m=float(m),
        draws=draws,
        n_zero_draws=int(draws - nonzero.size),
        empirical_target=target,
        target_se=target_se,
        taylor=tuple(taylor),
        inverse_factorial=tuple(if_terms),
    )


@dataclass(frozen=True)
class BiasIdentityReport:
    """Monte Carlo check of the second-order product-ratio identity and of
    the exact reciprocal identity E[1/(n+1)] = (1 - e^{-m})/m."""

    m11: float
    m10: float
    m01: float
    draws: int
    n_zero_excluded: int
    product_mean_empirical: float
    product_mean_predicted: float
    reciprocal_mean_empirical: float
    reciprocal_mean_se: float
    reciprocal_mean_exact: float

    @property
    def product_ratio(self) -> float:
        """Empirical over predicted product mean; 1 means the identity holds."""
        return self.product_mean_empirical / self.product_mean_predicted


def taylor_bias_identity_check(
    m11: float, m10: float, m01: float, draws: int, seed: int
) -> BiasIdentityReport:
    """Draw independent Poisson triples and evaluate both identity sides.

    The product identity is second order, so its two sides agree only up to
    higher-order terms that shrink as the means grow; the reciprocal
    identity is exact up to Monte Carlo noise.
    """
    if min(m11, m10, m01) <= 0:
        raise ValueError("all Poisson means must be positive")
    rng = _rng(seed)
    n11 = rng.poisson(m11, draws).astype(float)
    n10 = rng.poisson(m10, draws).astype(float)
    n01 = rng.poisson(m01, draws).astype(float)

    positive = n11 > 0
    product = n10[positive] * n01[positive] / n11[positive]
    predicted = (m10 * m01 / m11) * (m11 + 1.0) / m11

    recip = 1.0 / (n11 + 1.0)
    return BiasIdentityReport(
        m11=float(m11),
        m10=float(m10),
        m01=float(m01),
        draws=draws,
        n_zero_excluded=int(draws - product.size),
        product_mean_empirical=float(product.mean()),
        product_mean_predicted=float(predicted),
        reciprocal_mean_empirical=float(recip.mean()),
        reciprocal_mean_se=float(recip.std(ddof=1) / math.sqrt(draws)),
        reciprocal_mean_exact=float(-math.expm1(-m11) / m11),
    )
