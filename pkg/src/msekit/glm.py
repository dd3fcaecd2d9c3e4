"""Maximum-likelihood and adjusted-score fitting of log-linear count models.

Fitting is iteratively reweighted least squares under a Poisson working
model with log link.  Fractional counts are legal throughout (the quasi
likelihood is formally identical).  A square design with strictly positive
counts is solved exactly in one linear solve, since the saturated MLE
reproduces the observed table.

Boundary handling: with zero cells the MLE can sit on the boundary of the
parameter space.  The intercept then drifts by a near-constant amount per
IRLS step while the score still shrinks to zero.  A downward drift means the
missing-cell estimate tends to zero, which is a legitimate limit and is
reported as converged; an upward drift means the estimate is unbounded and
the fit is reported as not converged, which the estimator layer treats as a
failure.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np
from scipy.linalg import lu_factor, lu_solve, solve_triangular
from scipy.special import gammaln, xlogy

from .patterns import CountTable, ModelSpec, build_design, parity_signs, pattern_matrix

MAX_ITERATIONS = 100
SCORE_TOL = 1e-10
DEVIANCE_TOL = 1e-12
FIRTH_STEP_TOL = 1e-10
# an IRLS step this large at the stopping point signals boundary drift,
# not an interior optimum (interior stops have steps ~ sqrt(SCORE_TOL))
_DRIFT_STEP = 1e-3
_ETA_OVERFLOW = 690.0


class MarginZeroError(ValueError):
    """A source margin is structurally zero; the model cannot be fitted."""


@dataclass(frozen=True)
class FitResult:
    """Outcome of one log-linear fit.

    ``m000 = exp(params[0])`` is the missing-cell estimate; ``se_log_m000``
    is the square root of the intercept diagonal of ``(X' W X)^{-1}`` at the
    optimum with ``W = diag(fitted)``.
    """

    model: ModelSpec
    params: np.ndarray
    fitted: np.ndarray
    m000: float
    se_log_m000: float
    deviance: float
    aic: float
    converged: bool
    iterations: int

    def __post_init__(self) -> None:
        self.params.flags.writeable = False
        self.fitted.flags.writeable = False


def _check_inputs(n: CountTable, model: ModelSpec) -> None:
    if n.k != model.k:
        raise ValueError(f"table has k={n.k} but model has k={model.k}")
    margins = pattern_matrix(n.k).T @ n.values
    if np.any(margins <= 0):
        src = int(np.argmax(margins <= 0))
        raise MarginZeroError(f"source {src} has a zero margin; fit is undefined")


@lru_cache(maxsize=None)
def _design_lu(model: ModelSpec):
    return lu_factor(np.asarray(build_design(model)), check_finite=False)


@lru_cache(maxsize=None)
def _design_qr(model: ModelSpec):
    Q, R = np.linalg.qr(build_design(model))
    Q.flags.writeable = False
    R.flags.writeable = False
    return Q, R


def _deviance(y: np.ndarray, mu: np.ndarray) -> float:
    return float(2.0 * (xlogy(y, y / mu) - (y - mu)).sum())


def _loglik(y: np.ndarray, mu: np.ndarray) -> float:
    return float((xlogy(y, mu) - mu - gammaln(y + 1.0)).sum())


def _wls_qr(X: np.ndarray, w: np.ndarray, target: np.ndarray):
    """Weighted least squares via QR of the rescaled design."""
    sw = np.sqrt(w)
    Q, R = np.linalg.qr(X * sw[:, None])
    diag = np.abs(np.diag(R))
    if diag.min() <= 1e-14 * max(diag.max(), 1.0):
        raise np.linalg.LinAlgError("weighted design numerically singular")
    return solve_triangular(R, Q.T @ (sw * target), check_finite=False), R


def _intercept_se(R: np.ndarray) -> float:
    e0 = np.zeros(R.shape[0])
    e0[0] = 1.0
    try:
        u = solve_triangular(R, e0, trans="T", check_finite=False)
    except np.linalg.LinAlgError:
        return math.inf
    return float(np.linalg.norm(u))


def _start_values(model: ModelSpec, y: np.ndarray) -> np.ndarray:
    Q, R = _design_qr(model)
    return solve_triangular(R, Q.T @ np.log(y + 0.5), check_finite=False)


def _clipped_mu(X: np.ndarray, params: np.ndarray) -> np.ndarray:
    # the clip only matters on diverged fits, where fitted values are
    # diagnostics at best; it keeps downstream linear algebra finite
    return np.exp(np.minimum(X @ params, _ETA_OVERFLOW))


def _finish(model, params, y, converged, iterations) -> FitResult:
    X = build_design(model)
    params = np.array(params, dtype=float)
    mu = _clipped_mu(X, params)
    _, R_weighted = np.linalg.qr(X * np.sqrt(mu)[:, None])
    with np.errstate(over="ignore"):
        m000 = float(np.exp(params[0]))
    return FitResult(
        model=model,
        params=params,
        fitted=mu,
        m000=m000,
        se_log_m000=_intercept_se(R_weighted),
        deviance=_deviance(y, mu),
        aic=-2.0 * _loglik(y, mu) + 2.0 * X.shape[1],
        converged=converged,
        iterations=iterations,
    )


def fit_ml(n: CountTable, model: ModelSpec) -> FitResult:
    """Maximize the Poisson log likelihood of ``log m = X params``.

    Starts from least squares on ``log(n + 0.5)`` and stops when the score
    max-norm falls below 1e-10 or the deviance change falls below 1e-12
    (relative, with an absolute floor).  Non-convergence within 100
    iterations, or an unbounded intercept, is reported via
    ``converged=False`` rather than raised.
    """
    _check_inputs(n, model)
    X = build_design(model)
    y = n.values

    if model.is_square and np.all(y > 0):
        # saturated MLE: fitted values equal the observed counts exactly
        params = lu_solve(_design_lu(model), np.log(y), check_finite=False)
        return _finish(model, params, y, converged=True, iterations=0)

    params = _start_values(model, y)
    prev_dev = math.inf
    last_intercept_step = 0.0
    converged = False
    iterations = 0
    for it in range(1, MAX_ITERATIONS + 1):
        iterations = it
        eta = X @ params
        if not np.all(np.isfinite(params)) or eta.max() > _ETA_OVERFLOW:
            break
        mu = np.exp(eta)
        score = X.T @ (y - mu)
        dev = _deviance(y, mu)
        if np.abs(score).max() < SCORE_TOL or abs(prev_dev - dev) <= DEVIANCE_TOL * (abs(dev) + 1.0):
            # boundary drift: a persistent upward intercept step means the
            # missing-cell estimate is unbounded
            converged = last_intercept_step <= _DRIFT_STEP
            break
        prev_dev = dev
        try:
            new_params, _ = _wls_qr(X, mu, eta + (y - mu) / mu)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(new_params)):
            break
        last_intercept_step = new_params[0] - params[0]
        params = new_params
    return _finish(model, params, y, converged, iterations)


def fit_firth(n: CountTable, model: ModelSpec) -> FitResult:
    """Adjusted-score (mean bias reducing) fit of the log-linear model.

    Each step refits the working least squares against pseudo-counts
    ``n + h/2`` where ``h`` holds the leverages at the current fit, the
    canonical-link form of the adjusted score equations.  With a square
    design all leverages are 1 and the result coincides with the ML fit on
    ``n + 0.5``.  Deviance and AIC are reported against the raw counts.
    """
    _check_inputs(n, model)
    X = build_design(model)
    y = n.values

    params = _start_values(model, y)
    converged = False
    iterations = 0
    for it in range(1, MAX_ITERATIONS + 1):
        iterations = it
        eta = X @ params
        if not np.all(np.isfinite(params)) or eta.max() > _ETA_OVERFLOW:
            break
        mu = np.exp(eta)
        sw = np.sqrt(mu)
        Q, R = np.linalg.qr(X * sw[:, None])
        diag = np.abs(np.diag(R))
        if diag.min() <= 1e-14 * max(diag.max(), 1.0):
            break
        leverage = (Q * Q).sum(axis=1)
        target = eta + (y + 0.5 * leverage - mu) / mu
        new_params = solve_triangular(R, Q.T @ (sw * target), check_finite=False)
        if not np.all(np.isfinite(new_params)):
            break
        step = np.abs(new_params - params).max()
        params = new_params
        if step < FIRTH_STEP_TOL:
            converged = True
            break
    return _finish(model, params, y, converged, iterations)


def fienberg_m000(fitted: np.ndarray, k: int) -> float:
    """Missing-cell value implied by a fitted table: odd product over even product."""
    fitted = np.asarray(fitted, dtype=float)
    if fitted.shape != (2**k - 1,):
        raise ValueError(f"expected {2**k - 1} fitted values for k={k}")
    if np.any(fitted <= 0):
        raise ValueError("fitted values must be strictly positive")
    signs = parity_signs(k)
    return float(np.prod(fitted[signs > 0]) / np.prod(fitted[signs < 0]))
