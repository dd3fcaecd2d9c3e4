"""Unified population-size estimation plus closed-form cross-checks.

``estimate`` routes a count table through the adjusted-count recipe of the
chosen estimator and a single Poisson GLM fit, so that differences between
estimators are exclusively differences in pseudo-counts.  ``closed_form_m000``
evaluates the direct missing-cell formulas that exist for the three-source
models and for square saturated designs; it is an independent oracle against
the GLM route and is never used to produce estimates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .adjust import Estimator, adjusted_counts, estimator_supported
from .glm import MarginZeroError, fit_firth, fit_ml
from .patterns import CountTable, ModelSpec, marginal, parity_signs, pattern_matrix

Z_CRITICAL_95 = 1.959963984540054  # two-sided 95% normal quantile


class Status(str, Enum):
    OK = "ok"
    FAILURE = "failure"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class EstimateResult:
    """One estimator applied to one table.

    ``n_hat = n_observed + m000`` where ``n_observed`` is the total of the
    original table, never of the adjusted pseudo-counts.  ``status`` is
    ``failure`` iff ``m000`` is nonfinite or the underlying fit did not
    converge; no magnitude threshold is applied here.
    """

    estimator: Estimator
    model: ModelSpec
    m000: float
    n_observed: float
    n_hat: float
    ci_low: float | None
    ci_high: float | None
    status: Status

    @property
    def ok(self) -> bool:
        return self.status is Status.OK


def _failure(estimator, model, n_observed) -> EstimateResult:
    return EstimateResult(
        estimator=estimator,
        model=model,
        m000=math.nan,
        n_observed=n_observed,
        n_hat=math.nan,
        ci_low=None,
        ci_high=None,
        status=Status.FAILURE,
    )


def estimate(n: CountTable, model: ModelSpec, estimator: Estimator) -> EstimateResult:
    """Population-size estimate for one table, model and estimator.

    Raises ``ValueError`` for estimator/k combinations that do not exist;
    data-driven problems (divergence, nonfinite estimates, zero margins,
    a negative pseudo-count in the two-source Bailey adjustment) come back
    as ``status=failure`` so that simulation loops can apply a replacement
    policy instead of aborting.
    """
    estimator = Estimator(estimator)
    if n.k != model.k:
        raise ValueError(f"table has k={n.k} but model has k={model.k}")
    if not estimator_supported(estimator, n.k):
        raise ValueError(f"estimator {estimator.value!r} is not defined for k={n.k}")

    total = n.observed_total()
    try:
        if estimator is Estimator.CFK:
            fit = fit_firth(n, model)
        else:
            # support and dimensions were checked above, so a ValueError
            # here is data-driven (Bailey's n01 - 1 gone negative)
            fit = fit_ml(adjusted_counts(estimator, n, model), model)
    except (MarginZeroError, ValueError):
        return _failure(estimator, model, total)

    if not fit.converged or not math.isfinite(fit.m000):
        return _failure(estimator, model, total)

    ci_low = ci_high = None
    if math.isfinite(fit.se_log_m000):
        half = Z_CRITICAL_95 * fit.se_log_m000
        log_m = float(fit.params[0])
        ci_low = math.exp(log_m - half)
        ci_high = math.exp(log_m + half) if log_m + half < 709 else math.inf
    return EstimateResult(
        estimator=estimator,
        model=model,
        m000=fit.m000,
        n_observed=total,
        n_hat=total + fit.m000,
        ci_low=ci_low,
        ci_high=ci_high,
        status=Status.OK,
    )


def _only_index(k: int, sources: tuple[int, ...]) -> int:
    """Canonical index of the pattern whose set bits are exactly ``sources``."""
    bits = pattern_matrix(k)
    target = np.zeros(k)
    target[list(sources)] = 1.0
    return int(np.nonzero((bits == target).all(axis=1))[0][0])


def closed_form_m000(n: CountTable, model: ModelSpec, corrected: bool) -> float | None:
    """Direct missing-cell formula, or ``None`` where no closed form exists.

    Covers the square saturated model for any k and the three-source
    two-pair/one-pair models; the three-source independence model has no
    closed form.  ``corrected=True`` adds one to the denominator counts.
    A zero denominator yields ``inf`` as a failure marker.
    """
    if n.k != model.k:
        raise ValueError(f"table has k={n.k} but model has k={model.k}")
    c = 1.0 if corrected else 0.0
    v = n.values

    if model == ModelSpec.saturated(n.k):
        signs = parity_signs(n.k)
        num = float(np.prod(v[signs > 0]))
        den = float(np.prod(v[signs < 0] + c))
        return _ratio(num, den)

    if n.k == 3 and all(len(t) == 2 for t in model.terms):
        if len(model.terms) == 2:
            # the pair missing from the model carries the closed form
            all_pairs = {(0, 1), (0, 2), (1, 2)}
            i, j = next(iter(all_pairs - set(model.terms)))
            num = v[_only_index(3, (i,))] * v[_only_index(3, (j,))]
            den = v[_only_index(3, (i, j))] + c
            return _ratio(float(num), float(den))
        if len(model.terms) == 1:
            pair = model.terms[0]
            third = next(i for i in range(3) if i not in pair)
            absent = marginal(n, third, level=0)
            single = v[_only_index(3, (third,))]
            bits = pattern_matrix(3)
            with_third = bits[:, third] == 1
            with_third[_only_index(3, (third,))] = False
            den = float(v[with_third].sum()) + c
            return _ratio(float(single) * absent, den)

    return None


def _ratio(num: float, den: float) -> float:
    if den == 0.0:
        return math.nan if num == 0.0 else math.inf
    return num / den


def regularity_check(n: CountTable, reference_n: float) -> bool:
    """Two-source condition ``n_1+ n_+1 / N > log N`` for near-unbiasedness.

    ``reference_n`` is a true or estimated population size supplied by the
    caller.  When the condition fails the bias-corrected two-source
    estimator can carry substantial negative bias.
    """
    if n.k != 2:
        raise ValueError("the regularity condition is defined for two sources only")
    if reference_n <= 1:
        raise ValueError("reference population size must exceed 1")
    return marginal(n, 0) * marginal(n, 1) / reference_n > math.log(reference_n)
