"""Intercept functional of the design pseudoinverse and adjusted-count vectors.

The least-squares solution of ``log m = X lam`` expresses the log of the
missing cell as ``z . log m``, where ``z`` is the intercept row of the
pseudoinverse of ``X`` mapped back into the column space.  Cells with a
negative weight in ``z`` sit in the denominator of the missing-cell estimate,
and subtracting the negative part ``z_neg`` from the observed counts is what
turns the plain ML fit into the bias-corrected one.  The other adjusted-count
recipes implemented here (Chapman and Bailey for two sources, the
Evans-Bonett global offset, the Rivest-Levesque three-source offsets) feed
the same GLM with different pseudo-counts.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.linalg import solve_triangular

from .patterns import CountTable, ModelSpec, build_design, pattern_matrix

SNAP_TOL = 1e-9
_SNAP_MAX_DENOMINATOR = 96


class RankDeficientDesignError(ValueError):
    """Design matrix has no full column rank; no unique intercept functional."""


class Estimator(str, Enum):
    """Estimator family: each member names an adjusted-count recipe."""

    LP = "lp"
    ML = "ml"
    CHAPMAN_DSE = "chapman"
    BAILEY = "bailey"
    EB = "eb"
    CFK = "cfk"
    RL = "rl"
    CHAP_MSE = "chapman-mse"

    def __str__(self) -> str:  # argparse-friendly
        return self.value


def _snap(x: float) -> float:
    """Round to a nearby small-denominator rational if within SNAP_TOL.

    The exact intercept functionals of the hierarchical designs used here
    are rationals like -1, 1/2 or 1/3; snapping removes the factorization
    rounding so that e.g. the two-source adjustment is exactly +1.
    """
    frac = Fraction(x).limit_denominator(_SNAP_MAX_DENOMINATOR)
    fx = float(frac)
    return fx if abs(fx - x) <= SNAP_TOL else x


@dataclass(frozen=True)
class ZVector:
    """Intercept functional ``z`` of a model design and its negative part."""

    model: ModelSpec
    z: np.ndarray
    z_neg: np.ndarray

    def __post_init__(self) -> None:
        self.z.flags.writeable = False
        self.z_neg.flags.writeable = False


@lru_cache(maxsize=None)
def z_vector(model: ModelSpec) -> ZVector:
    """Intercept row of the Moore-Penrose inverse of the model design.

    Computed as ``z = Q R^{-T} e0`` from the thin QR factorization of the
    design (never by inverting the normal equations), then snapped to exact
    small rationals.  ``z`` satisfies ``z' X = (1, 0, ..., 0)`` and lies in
    the column space of ``X``.
    """
    X = build_design(model)
    Q, R = np.linalg.qr(X)
    diag = np.abs(np.diag(R))
    if diag.min() <= 1e-10 * max(diag.max(), 1.0):
        raise RankDeficientDesignError(f"design for {model.label()} is rank deficient")
    e0 = np.zeros(X.shape[1])
    e0[0] = 1.0
    z = Q @ solve_triangular(R, e0, trans="T", check_finite=False)
    z = np.array([_snap(v) for v in z])
    z_neg = np.where(z < -SNAP_TOL, z, 0.0)
    return ZVector(model, z, z_neg)


def chapman_adjusted_counts(n: CountTable, model: ModelSpec) -> CountTable:
    """Counts minus the negative part of the intercept functional.

    Entries never decrease; cells with a nonnegative weight are unchanged.
    For two sources this is Chapman's classic ``n11 + 1``; for the square
    saturated model it adds exactly 1 to every even-parity cell.
    """
    if n.k != model.k:
        raise ValueError(f"table has k={n.k} but model has k={model.k}")
    return CountTable(n.k, n.values - z_vector(model).z_neg)


def estimator_supported(estimator: Estimator, k: int) -> bool:
    """Whether an estimator is defined for a table with k sources.

    Chapman DSE and Bailey exist only for two sources.  The Rivest-Levesque
    offsets are implemented for three sources (and reduce to Chapman for
    two); no general-k rule is implemented, so RL is unsupported for k >= 4.
    """
    estimator = Estimator(estimator)
    if estimator in (Estimator.CHAPMAN_DSE, Estimator.BAILEY):
        return k == 2
    if estimator is Estimator.RL:
        return k in (2, 3)
    return True


def adjusted_counts(estimator: Estimator, n: CountTable, model: ModelSpec) -> CountTable:
    """Pseudo-counts that, fed to the ML fit, realize the chosen estimator."""
    estimator = Estimator(estimator)
    if n.k != model.k:
        raise ValueError(f"table has k={n.k} but model has k={model.k}")
    if not estimator_supported(estimator, n.k):
        raise ValueError(f"estimator {estimator.value!r} is not defined for k={n.k}")
    if estimator in (Estimator.LP, Estimator.ML, Estimator.CFK):
        return n
    if estimator is Estimator.EB:
        return CountTable(n.k, n.values + 0.5 ** (n.k - 1))
    if estimator is Estimator.CHAPMAN_DSE:
        return CountTable(n.k, n.values + np.array([1.0, 0.0, 0.0]))
    if estimator is Estimator.BAILEY:
        return CountTable(n.k, n.values + np.array([1.0, 0.0, -1.0]))
    if estimator is Estimator.RL:
        return _rivest_levesque_counts(n, model)
    if estimator is Estimator.CHAP_MSE:
        return chapman_adjusted_counts(n, model)
    raise ValueError(f"unhandled estimator {estimator!r}")


def _rivest_levesque_counts(n: CountTable, model: ModelSpec) -> CountTable:
    # Time-heterogeneity family: cells counted exactly twice get +2/t
    # (t = sources), the constant that reduces to Chapman's +1 at t=2.
    # The independence model instead uses the time-only offsets
    # (+1/3 doubles, +1/6 singles at t=3).
    if n.k == 2:
        return CountTable(2, n.values + np.array([1.0, 0.0, 0.0]))
    n_set = pattern_matrix(3).sum(axis=1)
    if not model.terms:
        offsets = np.where(n_set == 2, 1.0 / 3.0, 0.0) + np.where(n_set == 1, 1.0 / 6.0, 0.0)
    else:
        offsets = np.where(n_set == 2, 2.0 / 3.0, 0.0)
    return CountTable(3, n.values + offsets)
