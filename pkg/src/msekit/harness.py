"""Monte Carlo studies over scenarios and estimators.

Each replication draws one table and runs every estimator on that same table
(paired design), so observed-total summaries agree across estimator rows and
estimator comparisons are tighter than with independent draws.  Failed
replications (nonfinite estimate or non-converged fit) are replaced, post
hoc, by the highest successful estimate of the reference bias-corrected
estimator in the sample; affected estimators are flagged with a dagger.

Replications are split into contiguous chunks over a process pool.  Streams
are keyed by replication index and aggregation is an ordered reduction, so
results are bit-identical for any worker count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc

from .adjust import Estimator, estimator_supported
from .estimators import estimate
from .patterns import ModelSpec
from .scenarios import ScenarioSpec, replication_rng, sample_table, solve_cell_probabilities

_NORMAL_APPROX_DF = 1000
_MIN_PARALLEL_REPS = 512


@dataclass(frozen=True)
class SimSummary:
    """Per-(scenario, estimator) Monte Carlo summary.

    ``rmse`` is the root mean squared error around the true N, so that
    ``rmse^2 = bias^2 + sd^2 (R-1)/R`` with ``sd`` the sample standard
    deviation.  ``stars`` counts the two-sided t-test thresholds (0.05,
    0.01, 0.001) at which equality with N is rejected; ``dagger`` records
    that failed replications were replaced.
    """

    scenario_id: str
    estimator: Estimator
    fitted_model: ModelSpec
    R: int
    mean_nhat: float
    sd: float
    rmse: float
    t_stat: float
    p_value: float
    stars: int
    failure_count: int
    dagger: bool
    mean_n: float


def t_test_vs_N(estimates, N: float) -> tuple[float, float]:
    """One-sample two-sided t statistic and p-value against the fixed value N.

    Uses the regularized incomplete beta function for the exact p-value and
    switches to the normal approximation above 1000 degrees of freedom,
    where the approximation error is far below the 1e-6 accuracy target.
    """
    x = np.asarray(estimates, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two estimates for a t-test")
    if not np.all(np.isfinite(x)):
        raise ValueError("estimates must be finite (apply the failure policy first)")
    mean = float(x.mean())
    sd = float(x.std(ddof=1))
    if sd == 0.0:
        if mean == N:
            return 0.0, 1.0
        return math.copysign(math.inf, mean - N), 0.0
    t = (mean - N) / (sd / math.sqrt(x.size))
    df = x.size - 1
    if df > _NORMAL_APPROX_DF:
        p = math.erfc(abs(t) / math.sqrt(2.0))
    else:
        p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return t, min(max(p, 0.0), 1.0)


def _stars(p: float) -> int:
    return sum(p < threshold for threshold in (0.05, 0.01, 0.001))


def apply_failure_policy(
    nhat: np.ndarray,
    failed: np.ndarray,
    estimators: list[Estimator],
    reference: Estimator,
) -> np.ndarray:
    """Replace every failed cell by the reference column's highest success.

    The replacement maximum is taken over the reference estimator's own
    successful replications; an all-failed reference column is an error.
    """
    nhat = np.array(nhat, dtype=float)
    failed = np.asarray(failed, dtype=bool)
    if nhat.shape != failed.shape:
        raise ValueError("estimate and failure matrices must have the same shape")
    if not failed.any():
        return nhat
    try:
        ref_col = estimators.index(reference)
    except ValueError:
        raise ValueError(f"reference estimator {reference!r} not in the estimate matrix") from None
    ref_ok = ~failed[:, ref_col]
    if not ref_ok.any():
        raise ValueError(f"all replications of reference estimator {reference!r} failed")
    replacement = float(nhat[ref_ok, ref_col].max())
    nhat[failed] = replacement
    return nhat


def reference_estimator(k: int) -> Estimator:
    """Bias-corrected estimator whose sample maximum replaces failures."""
    return Estimator.CHAPMAN_DSE if k == 2 else Estimator.CHAP_MSE


def _run_chunk(spec: ScenarioSpec, fitted_model: ModelSpec, estimators, seed: int, start: int, stop: int):
    q = solve_cell_probabilities(spec)
    count = stop - start
    nhat = np.empty((count, len(estimators)))
    failed = np.zeros((count, len(estimators)), dtype=bool)
    n_observed = np.empty(count)
    for offset, rep in enumerate(range(start, stop)):
        rng = replication_rng(seed, spec.id, rep)
        table = sample_table(q, spec.N, rng)
        n_observed[offset] = table.observed_total()
        for col, est in enumerate(estimators):
            result = estimate(table, fitted_model, est)
            nhat[offset, col] = result.n_hat
            failed[offset, col] = not result.ok
    return nhat, failed, n_observed


def run_study(
    spec: ScenarioSpec,
    fitted_model: ModelSpec,
    estimators: list[Estimator],
    R: int,
    seed: int,
    threads: int | None = None,
) -> list[SimSummary]:
    """Monte Carlo study of one scenario: R paired replications per estimator.

    The reference estimator is computed even when it is not requested, since
    the failure-replacement value comes from its column.  Summaries are
    returned for the requested estimators, in the requested order.
    """
    if R < 2:
        raise ValueError("need at least two replications")
    estimators = [Estimator(e) for e in estimators]
    for est in estimators:
        if not estimator_supported(est, spec.k):
            raise ValueError(f"estimator {est.value!r} is not defined for k={spec.k}")
    if fitted_model.k != spec.k:
        raise ValueError(f"fitted model has k={fitted_model.k} but scenario has k={spec.k}")

    reference = reference_estimator(spec.k)
    computed = list(estimators)
    if reference not in computed:
        computed.append(reference)

    if threads is None:
        threads = os.cpu_count() or 1
    threads = max(1, min(threads, R))

    if threads == 1 or R < _MIN_PARALLEL_REPS:
        chunks = [_run_chunk(spec, fitted_model, computed, seed, 0, R)]
    else:
        bounds = np.linspace(0, R, threads + 1).astype(int)
        jobs = [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [
                pool.submit(_run_chunk, spec, fitted_model, computed, seed, a, b)
                for a, b in jobs
            ]
            chunks = [f.result() for f in futures]

    nhat = np.vstack([c[0] for c in chunks])
    failed = np.vstack([c[1] for c in chunks])
    n_observed = np.concatenate([c[2] for c in chunks])

    replaced = apply_failure_policy(nhat, failed, computed, reference)
    mean_n = float(n_observed.mean())

    summaries = []
    for est in estimators:
        col = computed.index(est)
        x = replaced[:, col]
        t, p = t_test_vs_N(x, spec.N)
        failures = int(failed[:, col].sum())
        summaries.append(
            SimSummary(
                scenario_id=spec.id,
                estimator=est,
                fitted_model=fitted_model,
                R=R,
                mean_nhat=float(x.mean()),
                sd=float(x.std(ddof=1)),
                rmse=float(np.sqrt(np.mean((x - spec.N) ** 2))),
                t_stat=t,
                p_value=p,
                stars=_stars(p),
                failure_count=failures,
                dagger=failures > 0,
                mean_n=mean_n,
            )
        )
    return summaries
