"""Synthetic contingency tables from marginal probabilities and odds ratios.

A scenario fixes a population size, per-source inclusion probabilities and
pairwise conditional odds ratios.  Cell probabilities over all ``2^k``
patterns are of log-linear form, with the pair weights fixed at the log odds
ratios and the main-effect weights solved by Newton iteration so the
marginals match.  Tables are then multinomial draws of size N with the
all-zero cell discarded.

Random streams are counter-based (Philox), keyed by (master seed, scenario
id, replication index), so any replication can be drawn independently of
thread or process layout.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .patterns import CountTable, ModelSpec, SOURCE_LETTERS, pattern_matrix

_NEWTON_TOL = 1e-12
_NEWTON_MAX_ITER = 200


class ScenarioSolveError(RuntimeError):
    """Newton solve for the cell probabilities did not converge."""


def _pair_key(pair: tuple[int, int]) -> str:
    return SOURCE_LETTERS[pair[0]] + SOURCE_LETTERS[pair[1]]


def _parse_pair(key: str, k: int) -> tuple[int, int]:
    if len(key) != 2:
        raise ValueError(f"odds-ratio key must name two sources, got {key!r}")
    i, j = (SOURCE_LETTERS.find(c) for c in key.upper())
    if i < 0 or j < 0 or i >= k or j >= k or i == j:
        raise ValueError(f"odds-ratio key {key!r} invalid for k={k}")
    return (min(i, j), max(i, j))


@dataclass(frozen=True)
class ScenarioSpec:
    """One simulation scenario: N, inclusion probabilities, odds ratios.

    ``theta`` maps source pairs to conditional odds ratios; absent pairs
    mean 1 (no association).  The generating model is the log-linear model
    whose pairs are exactly those with an odds ratio different from 1.
    """

    id: str
    N: int
    k: int
    p: tuple[float, ...]
    theta: tuple[tuple[tuple[int, int], float], ...] = ()

    def __post_init__(self) -> None:
        if self.N < 1:
            raise ValueError("population size must be >= 1")
        if len(self.p) != self.k:
            raise ValueError(f"expected {self.k} inclusion probabilities, got {len(self.p)}")
        if any(not 0.0 < pi < 1.0 for pi in self.p):
            raise ValueError("inclusion probabilities must lie strictly inside (0, 1)")
        norm = []
        seen = set()
        for pair, value in self.theta:
            pair = (min(pair), max(pair))
            if pair[0] < 0 or pair[1] >= self.k or pair[0] == pair[1]:
                raise ValueError(f"invalid source pair {pair!r}")
            if pair in seen:
                raise ValueError(f"duplicate odds ratio for pair {pair!r}")
            seen.add(pair)
            if value <= 0:
                raise ValueError("odds ratios must be positive")
            norm.append((pair, float(value)))
        norm.sort()
        object.__setattr__(self, "theta", tuple(norm))
        object.__setattr__(self, "p", tuple(float(x) for x in self.p))

    @property
    def generating_model(self) -> ModelSpec:
        return ModelSpec.from_pairs(self.k, [pair for pair, v in self.theta if v != 1.0])

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "N": self.N,
            "k": self.k,
            "p": list(self.p),
            "theta": {_pair_key(pair): value for pair, value in self.theta},
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "ScenarioSpec":
        k = int(data["k"])
        theta = tuple(
            (_parse_pair(key, k), float(value)) for key, value in data.get("theta", {}).items()
        )
        return cls(
            id=str(data["id"]),
            N=int(data["N"]),
            k=k,
            p=tuple(float(x) for x in data["p"]),
            theta=theta,
        )


@dataclass(frozen=True)
class CellProbabilities:
    """Probabilities over all 2^k patterns: canonical observed order, then
    the all-zero pattern last."""

    k: int
    q: np.ndarray

    def __post_init__(self) -> None:
        self.q.flags.writeable = False

    @property
    def q_unobserved(self) -> float:
        return float(self.q[-1])


def _full_pattern_matrix(k: int) -> np.ndarray:
    return np.vstack([pattern_matrix(k), np.zeros((1, k))])


def solve_cell_probabilities(spec: ScenarioSpec) -> CellProbabilities:
    """Log-linear cell probabilities matching the scenario's marginals.

    The pair weights are the log odds ratios; the main-effect weights start
    at the logits of the marginals and are refined by Newton iteration with
    the covariance matrix of the pattern bits as Jacobian.  With all odds
    ratios at 1 the start is already exact (independence product form).
    """
    bits = _full_pattern_matrix(spec.k)
    interaction = np.zeros(bits.shape[0])
    for (i, j), value in spec.theta:
        interaction += np.log(value) * bits[:, i] * bits[:, j]
    p = np.asarray(spec.p)

    def evaluate(a):
        u = bits @ a + interaction
        u -= u.max()
        q = np.exp(u)
        q /= q.sum()
        return q, (bits.T @ q) - p

    alpha = np.log(p / (1.0 - p))
    q, g = evaluate(alpha)
    for _ in range(_NEWTON_MAX_ITER):
        err = np.abs(g).max()
        if err < _NEWTON_TOL:
            return CellProbabilities(spec.k, q)
        marginals = g + p
        cov = bits.T @ (q[:, None] * bits) - np.outer(marginals, marginals)
        try:
            step = np.linalg.solve(cov, g)
        except np.linalg.LinAlgError as exc:
            raise ScenarioSolveError(f"singular Jacobian for scenario {spec.id}") from exc
        # damped Newton: halve the step until the marginal error decreases,
        # which prevents the overshoot cycles plain Newton falls into for
        # extreme odds ratios
        scale = 1.0
        for _ in range(60):
            trial = alpha - scale * step
            q_t, g_t = evaluate(trial)
            if np.abs(g_t).max() < err:
                break
            scale *= 0.5
        else:
            raise ScenarioSolveError(f"no descent step for scenario {spec.id}")
        alpha, q, g = trial, q_t, g_t
    raise ScenarioSolveError(
        f"marginals did not converge for scenario {spec.id} (extreme odds ratios?)"
    )


def replication_rng(seed: int, scenario_id: str, rep: int) -> np.random.Generator:
    """Counter-based stream keyed by (master seed, scenario id, replication)."""
    digest = hashlib.sha256(f"{seed}|{scenario_id}|{rep}".encode()).digest()
    key = int.from_bytes(digest[:16], "little")
    return np.random.Generator(np.random.Philox(key=key))


def sample_table(q: CellProbabilities, N: int, rng: np.random.Generator) -> CountTable:
    """One multinomial draw of size N; the all-zero cell's count is discarded.

    The generator's multinomial uses the sequential conditional-binomial
    decomposition, so the draw is exact and costs O(2^k).
    """
    if N < 1:
        raise ValueError("population size must be >= 1")
    counts = rng.multinomial(N, q.q)
    return CountTable(q.k, counts[:-1].astype(float))


def _dse(id_, N, p_a, p_b):
    return ScenarioSpec(id=id_, N=N, k=2, p=(p_a, p_b))


def _mse3(id_, N, p, theta):
    pairs = {"AB": (0, 1), "AC": (0, 2), "BC": (1, 2)}
    th = tuple((pairs[key], val) for key, val in theta.items())
    return ScenarioSpec(id=id_, N=N, k=3, p=p, theta=th)


def _mse4(id_, N, p, theta):
    pairs = {"AB": (0, 1), "AC": (0, 2), "AD": (0, 3), "BC": (1, 2), "BD": (1, 3), "CD": (2, 3)}
    th = tuple((pairs[key], val) for key, val in theta.items())
    return ScenarioSpec(id=id_, N=N, k=4, p=p, theta=th)


#: Two-source study grid: the first six satisfy the regularity condition by a
#: wide margin, the seventh deliberately violates it.
DSE_SCENARIOS: tuple[ScenarioSpec, ...] = (
    _dse("D1", 100, 0.5, 0.2),
    _dse("D2", 100, 0.35, 0.3),
    _dse("D3", 500, 0.4, 0.15),
    _dse("D4", 500, 0.25, 0.2),
    _dse("D5", 10_000, 0.3, 0.1),
    _dse("D6", 10_000, 0.25, 0.15),
    _dse("D7", 100, 0.15, 0.15),
)

#: Multi-source study grid: S1-S3 independent, S4-S6 one dependent pair,
#: S7-S9 two pairs, S10-S12 three pairs, S13 four independent sources,
#: S14 four sources with four dependent pairs.
MSE_SCENARIOS: tuple[ScenarioSpec, ...] = (
    _mse3("S1", 100, (0.5, 0.4, 0.3), {}),
    _mse3("S2", 500, (0.4, 0.3, 0.2), {}),
    _mse3("S3", 10_000, (0.35, 0.3, 0.25), {}),
    _mse3("S4", 100, (0.5, 0.4, 0.3), {"AB": 1.5}),
    _mse3("S5", 500, (0.4, 0.3, 0.2), {"AB": 1.5}),
    _mse3("S6", 10_000, (0.35, 0.3, 0.25), {"AB": 1.5}),
    _mse3("S7", 100, (0.5, 0.4, 0.3), {"AB": 1.5, "BC": 0.5}),
    _mse3("S8", 500, (0.4, 0.3, 0.2), {"AB": 1.5, "BC": 0.5}),
    _mse3("S9", 10_000, (0.35, 0.3, 0.25), {"AB": 1.5, "BC": 0.5}),
    _mse3("S10", 100, (0.5, 0.4, 0.3), {"AB": 1.5, "AC": 0.75, "BC": 0.5}),
    _mse3("S11", 500, (0.4, 0.3, 0.2), {"AB": 1.5, "AC": 0.75, "BC": 0.5}),
    _mse3("S12", 10_000, (0.35, 0.3, 0.25), {"AB": 1.5, "AC": 0.75, "BC": 0.5}),
    _mse4("S13", 20_000, (0.4, 0.35, 0.3, 0.25), {}),
    _mse4("S14", 20_000, (0.4, 0.35, 0.3, 0.25), {"AB": 1.5, "AD": 1.5, "BC": 0.75, "CD": 0.5}),
)

_BUILTIN = {"dse": DSE_SCENARIOS, "mse": MSE_SCENARIOS}


def builtin_bundle(name: str) -> tuple[ScenarioSpec, ...]:
    try:
        return _BUILTIN[name.lower()]
    except KeyError:
        raise ValueError(f"unknown builtin bundle {name!r}; choose from {sorted(_BUILTIN)}") from None


def load_scenarios(source: str) -> tuple[ScenarioSpec, ...]:
    """Load scenarios from ``builtin:<name>`` or a JSON file.

    The file may hold a single scenario object or a list of them, e.g.
    ``{"id": "S1", "N": 100, "k": 3, "p": [0.5, 0.4, 0.3], "theta": {"AB": 1.5}}``.
    """
    if source.startswith("builtin:"):
        return builtin_bundle(source.split(":", 1)[1])
    data = json.loads(Path(source).read_text())
    if isinstance(data, dict):
        data = [data]
    return tuple(ScenarioSpec.from_json_dict(item) for item in data)
