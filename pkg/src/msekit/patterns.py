"""Inclusion patterns, count tables, model specifications and design matrices.

Everything downstream (adjustments, GLM fits, simulation) works on a single
canonical ordering of the observed cells of a ``2^k`` capture table: patterns
are sorted by descending number of set bits, ties broken by descending binary
value.  For ``k=3`` that is ``111, 110, 101, 011, 100, 010, 001``.  The
all-zero pattern (never observed) is not part of a :class:`CountTable`; it is
the estimation target.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations

import numpy as np

MAX_SOURCES = 16
SOURCE_LETTERS = "ABCDEFGHIJKLMNOP"


def _check_k(k: int) -> None:
    if not isinstance(k, (int, np.integer)) or not 2 <= k <= MAX_SOURCES:
        raise ValueError(f"number of sources must be an integer in [2, {MAX_SOURCES}], got {k!r}")


@dataclass(frozen=True)
class InclusionPattern:
    """Which of the k sources observed a unit, as a tuple of 0/1 indicators.

    The first bit belongs to source A, the second to source B, and so on.
    ``parity`` (count of set bits mod 2) partitions the observed patterns
    into the odd and even sets used by the missing-cell product formula.
    """

    bits: tuple[int, ...]

    def __post_init__(self) -> None:
        _check_k(len(self.bits))
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError(f"pattern bits must be 0 or 1, got {self.bits!r}")

    @classmethod
    def from_string(cls, text: str) -> "InclusionPattern":
        if not text or set(text) - {"0", "1"}:
            raise ValueError(f"pattern must be a nonempty bit string, got {text!r}")
        return cls(tuple(int(c) for c in text))

    @property
    def k(self) -> int:
        return len(self.bits)

    @property
    def n_set(self) -> int:
        return sum(self.bits)

    @property
    def parity(self) -> int:
        """1 for patterns observed an odd number of times, 0 for even."""
        return self.n_set % 2

    @property
    def is_observed(self) -> bool:
        return self.n_set > 0

    def __str__(self) -> str:
        return "".join(str(b) for b in self.bits)


@lru_cache(maxsize=None)
def canonical_patterns(k: int) -> tuple[InclusionPattern, ...]:
    """All 2^k - 1 observed patterns in canonical order.

    Descending count of set bits, ties broken by descending binary value.
    """
    _check_k(k)
    values = range(1, 2**k)
    ordered = sorted(values, key=lambda v: (-bin(v).count("1"), -v))
    return tuple(
        InclusionPattern(tuple((v >> (k - 1 - i)) & 1 for i in range(k))) for v in ordered
    )


@lru_cache(maxsize=None)
def _pattern_positions(k: int) -> dict[tuple[int, ...], int]:
    return {p.bits: i for i, p in enumerate(canonical_patterns(k))}


def pattern_index(pattern: InclusionPattern) -> int:
    """Position of an observed pattern in the canonical order."""
    if not pattern.is_observed:
        raise ValueError("the all-zero pattern has no cell in the observed table")
    return _pattern_positions(pattern.k)[pattern.bits]


@lru_cache(maxsize=None)
def pattern_matrix(k: int) -> np.ndarray:
    """(2^k - 1, k) 0/1 matrix; row i holds the bits of canonical pattern i."""
    m = np.array([p.bits for p in canonical_patterns(k)], dtype=float)
    m.flags.writeable = False
    return m


@lru_cache(maxsize=None)
def parity_signs(k: int) -> np.ndarray:
    """+1 for odd-parity patterns, -1 for even-parity, canonical order."""
    s = np.array([1.0 if p.parity else -1.0 for p in canonical_patterns(k)])
    s.flags.writeable = False
    return s


def _term_label(term: tuple[int, ...]) -> str:
    return "".join(SOURCE_LETTERS[i] for i in term)


@dataclass(frozen=True)
class ModelSpec:
    """A hierarchical log-linear model: intercept, all main effects, and a
    set of interaction terms given as sorted tuples of source indices.

    The classic three-source models are all expressible with pairwise terms
    only (``SAT(3)`` = all three pairs, ``2PD`` = two pairs, ``1PD`` = one
    pair, ``IND`` = none).  For four or more sources the saturated model
    additionally carries every interaction of order up to ``k - 1``, which
    makes its design square so that fitted values equal observed counts.
    """

    k: int
    terms: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self) -> None:
        _check_k(self.k)
        norm = []
        for term in self.terms:
            t = tuple(sorted(term))
            if len(t) < 2 or len(set(t)) != len(t):
                raise ValueError(f"interaction term must have >= 2 distinct sources, got {term!r}")
            if t[0] < 0 or t[-1] >= self.k:
                raise ValueError(f"term {term!r} has source indices outside 0..{self.k - 1}")
            norm.append(t)
        if len(set(norm)) != len(norm):
            raise ValueError("duplicate interaction terms")
        norm.sort(key=lambda t: (len(t), t))
        object.__setattr__(self, "terms", tuple(norm))
        if self.n_params > 2**self.k - 1:
            raise ValueError(
                f"{self.n_params} parameters exceed the {2**self.k - 1} observed cells"
            )

    @classmethod
    def independence(cls, k: int) -> "ModelSpec":
        return cls(k, ())

    @classmethod
    def from_pairs(cls, k: int, pairs) -> "ModelSpec":
        return cls(k, tuple(tuple(p) for p in pairs))

    @classmethod
    def saturated(cls, k: int) -> "ModelSpec":
        """All interactions of order 2..k-1 (square design, fitted = observed)."""
        _check_k(k)
        terms = []
        for size in range(2, k):
            terms.extend(combinations(range(k), size))
        return cls(k, tuple(terms))

    @property
    def pairs(self) -> frozenset[tuple[int, int]]:
        return frozenset(t for t in self.terms if len(t) == 2)

    @property
    def n_params(self) -> int:
        return 1 + self.k + len(self.terms)

    @property
    def is_square(self) -> bool:
        return self.n_params == 2**self.k - 1

    def label(self) -> str:
        if self == ModelSpec.saturated(self.k):
            return "SAT"
        if not self.terms:
            return "IND"
        names = ",".join(_term_label(t) for t in self.terms)
        if self.k == 3 and all(len(t) == 2 for t in self.terms):
            return f"{len(self.terms)}PD({names})"
        return f"terms={names}"


def parse_model(text: str, k: int | None = None) -> ModelSpec:
    """Parse a model string such as ``k=3;pairs=AB,BC``, ``sat`` or ``ind``.

    ``pairs`` accepts ``all`` (every pair), ``none``, or a comma-separated
    list of letter pairs/groups (``AB`` means sources A and B interact;
    longer groups such as ``ABC`` name higher-order terms).  A bare ``sat``,
    ``saturated`` or ``ind`` keyword may be used when ``k`` is supplied.
    """
    text = text.strip()
    parts = [p for p in text.split(";") if p]
    terms_field = None
    keyword = None
    for part in parts:
        if "=" in part:
            key, _, value = part.partition("=")
            key = key.strip().lower()
            value = value.strip()
            if key == "k":
                k = int(value)
            elif key in ("pairs", "terms"):
                terms_field = value
            else:
                raise ValueError(f"unknown model field {key!r}")
        else:
            keyword = part.strip().lower()
    if k is None:
        raise ValueError(f"model string {text!r} does not fix the number of sources")
    if keyword in ("sat", "saturated"):
        return ModelSpec.saturated(k)
    if keyword in ("ind", "independence"):
        return ModelSpec.independence(k)
    if keyword is not None:
        raise ValueError(f"unknown model keyword {keyword!r}")
    if terms_field is None or terms_field.lower() == "none":
        return ModelSpec.independence(k)
    if terms_field.lower() == "all":
        return ModelSpec.from_pairs(k, combinations(range(k), 2))
    terms = []
    for group in terms_field.split(","):
        group = group.strip().upper()
        idx = []
        for letter in group:
            pos = SOURCE_LETTERS.find(letter)
            if pos < 0 or pos >= k:
                raise ValueError(f"source letter {letter!r} invalid for k={k}")
            idx.append(pos)
        terms.append(tuple(idx))
    return ModelSpec(k, tuple(terms))


@lru_cache(maxsize=None)
def build_design(model: ModelSpec) -> np.ndarray:
    """0/1 design matrix for the observed cells of a log-linear model.

    Rows follow the canonical pattern order; columns are the intercept, the
    k main effects, then the interaction terms in (order, lexicographic)
    order.  Every model built here has full column rank.
    """
    bits = pattern_matrix(model.k)
    cols = [np.ones(bits.shape[0])]
    cols.extend(bits[:, i] for i in range(model.k))
    for term in model.terms:
        col = bits[:, term[0]].copy()
        for i in term[1:]:
            col = col * bits[:, i]
        cols.append(col)
    X = np.column_stack(cols)
    X.flags.writeable = False
    return X


@dataclass(frozen=True)
class CountTable:
    """Real-valued counts over the observed cells, canonical order.

    Values are real, not integral: bias adjustments and EM-style imputation
    both produce fractional pseudo-counts.
    """

    k: int
    values: np.ndarray

    def __post_init__(self) -> None:
        _check_k(self.k)
        v = np.ascontiguousarray(self.values, dtype=float).copy()
        if v.shape != (2**self.k - 1,):
            raise ValueError(f"expected {2**self.k - 1} cell counts for k={self.k}, got shape {v.shape}")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("cell counts must be finite and >= 0")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def observed_total(self) -> float:
        return float(self.values.sum())

    def value(self, pattern: InclusionPattern) -> float:
        if pattern.k != self.k:
            raise ValueError(f"pattern has k={pattern.k}, table has k={self.k}")
        return float(self.values[pattern_index(pattern)])

    def to_text(self) -> str:
        lines = [f"k={self.k}"]
        for p, v in zip(canonical_patterns(self.k), self.values):
            lines.append(f"{p},{float(v)!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "CountTable":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("k="):
            raise ValueError("count table must start with a 'k=<int>' header line")
        k = int(lines[0][2:])
        _check_k(k)
        values = np.zeros(2**k - 1)
        seen = set()
        for ln in lines[1:]:
            pat_text, _, count_text = ln.partition(",")
            pattern = InclusionPattern.from_string(pat_text.strip())
            if pattern.k != k:
                raise ValueError(f"pattern {pat_text!r} does not have {k} bits")
            idx = pattern_index(pattern)
            if idx in seen:
                raise ValueError(f"duplicate pattern {pat_text!r}")
            seen.add(idx)
            values[idx] = float(count_text)
        return cls(k, values)


def marginal(table: CountTable, source: int, level: int = 1) -> float:
    """Sum of counts over the patterns whose bit for ``source`` equals ``level``.

    The default ``level=1`` gives the size of a source among observed units
    (e.g. ``n_1+``); ``level=0`` gives sums such as ``n_++0``.
    """
    if not 0 <= source < table.k:
        raise ValueError(f"source index {source} out of range for k={table.k}")
    if level not in (0, 1):
        raise ValueError("level must be 0 or 1")
    bits = pattern_matrix(table.k)[:, source]
    mask = bits == level
    return float(table.values[mask].sum())
