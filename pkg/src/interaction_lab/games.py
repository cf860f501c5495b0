"""Players, subsets, masking semantics, and closed-form oracle games.

A "player" is one input dimension. A subset S of players identifies the
unmasked variables; everything outside S is replaced by a per-variable
baseline value. Synthetic polynomial games evaluate v(S) exactly from a term
list and serve as ground truth for the interaction estimators.
"""
from __future__ import annotations

import itertools
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import DimensionError, DomainError, ValidationError

MAX_PLAYERS = 64  # index sets are representable as fixed-width bitmasks


@dataclass(frozen=True)
class SubsetMask:
    """An immutable set of player indices within {0, ..., n-1}."""

    n: int
    members: frozenset[int]

    def __post_init__(self):
        if not (2 <= self.n <= MAX_PLAYERS):
            raise DomainError(f"player count must be in [2, {MAX_PLAYERS}], got {self.n}")
        if not isinstance(self.members, frozenset):
            object.__setattr__(self, "members", frozenset(self.members))
        for k in self.members:
            if not (0 <= int(k) < self.n):
                raise DomainError(f"member index {k} outside [0, {self.n})")

    @classmethod
    def empty(cls, n: int) -> "SubsetMask":
        return cls(n, frozenset())

    @classmethod
    def full(cls, n: int) -> "SubsetMask":
        return cls(n, frozenset(range(n)))

    @classmethod
    def of(cls, n: int, indices: Sequence[int]) -> "SubsetMask":
        return cls(n, frozenset(int(k) for k in indices))

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, k: int) -> bool:
        return k in self.members

    def add(self, *indices: int) -> "SubsetMask":
        return SubsetMask(self.n, self.members | set(indices))

    def without(self, *indices: int) -> "SubsetMask":
        return SubsetMask(self.n, self.members - set(indices))

    def sorted_members(self) -> tuple[int, ...]:
        return tuple(sorted(self.members))

    @property
    def bits(self) -> int:
        mask = 0
        for k in self.members:
            mask |= 1 << k
        return mask


@dataclass
class Baseline:
    """Per-variable replacement value for masked-out players (feature units)."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).copy()
        if self.values.ndim != 1:
            raise DimensionError("baseline must be a flat vector")
        self.values.setflags(write=False)

    def __len__(self) -> int:
        return len(self.values)

    @classmethod
    def zeros(cls, n: int) -> "Baseline":
        return cls(np.zeros(n))


def make_masked_input(x, S: SubsetMask, b: Baseline) -> np.ndarray:
    """Keep x on the players in S, substitute the baseline elsewhere."""
    x = np.asarray(x, dtype=float)
    if len(x) != len(b) or len(x) != S.n:
        raise DimensionError(
            f"sample ({len(x)}), baseline ({len(b)}) and mask ({S.n}) lengths differ")
    keep = np.zeros(S.n, dtype=bool)
    for k in S.members:
        keep[k] = True
    return np.where(keep, x, b.values)


def masked_matrix(x, subsets: Sequence[SubsetMask], b: Baseline) -> np.ndarray:
    """Stack make_masked_input over many subsets into one (len(subsets), n) matrix."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if len(b) != n:
        raise DimensionError("sample and baseline lengths differ")
    out = np.tile(b.values, (len(subsets), 1))
    for r, S in enumerate(subsets):
        if S.n != n:
            raise DimensionError("mask player count does not match the sample")
        idx = S.sorted_members()
        if idx:
            out[r, list(idx)] = x[list(idx)]
    return out


def compute_baseline(dataset) -> Baseline:
    """Column means of a feature matrix."""
    data = np.asarray(dataset, dtype=float)
    if data.size == 0:
        raise ValidationError("cannot compute a baseline from an empty dataset")
    if data.ndim != 2:
        raise DimensionError("dataset must be a 2-d feature matrix")
    return Baseline(data.mean(axis=0))


def enumerate_subsets(pool: SubsetMask, m: int) -> Iterator[SubsetMask]:
    """All size-m subsets of the pool in lexicographic order of sorted indices."""
    if not (0 <= m <= len(pool)):
        raise DomainError(f"subset size {m} outside [0, {len(pool)}]")
    for combo in itertools.combinations(pool.sorted_members(), m):
        yield SubsetMask.of(pool.n, combo)


def sample_subset(pool: SubsetMask, m: int, rng: np.random.Generator) -> SubsetMask:
    """One uniform size-m subset of the pool; identical stream -> identical subset."""
    if not (0 <= m <= len(pool)):
        raise DomainError(f"subset size {m} outside [0, {len(pool)}]")
    members = np.array(pool.sorted_members(), dtype=int)
    picked = rng.permutation(members)[:m]
    return SubsetMask.of(pool.n, picked.tolist())


class ValueFunction(ABC):
    """Deterministic, side-effect-free masked-input score v(S | x).

    `x` is whatever the concrete game expects (closed-form games ignore it;
    model-backed games take a sample or a (features, label) pair). Evaluation
    must be safe for concurrent read-only use.
    """

    n: int

    @abstractmethod
    def evaluate(self, S: SubsetMask, x=None) -> float:
        ...

    def evaluate_many(self, subsets: Sequence[SubsetMask], x=None) -> np.ndarray:
        return np.array([self.evaluate(S, x) for S in subsets])


@dataclass
class SyntheticGame:
    """Closed-form polynomial game spec: v(S) = sum of coeff(T) over terms T in S.

    kind "additive" holds one degree-1 term per player, "conjunction" a single
    unit term on the required coalition, "random_polynomial" a seeded list of
    distinct-coalition terms with degree <= degree.
    """

    kind: str
    n: int
    terms: tuple[tuple[frozenset[int], float], ...]
    seed: int | None = None
    degree: int | None = None

    def __post_init__(self):
        if self.kind not in ("additive", "conjunction", "random_polynomial"):
            raise ValidationError(f"unknown game kind {self.kind!r}")
        seen = set()
        for coalition, coeff in self.terms:
            if coalition in seen:
                raise ValidationError("term coalitions must be distinct")
            seen.add(coalition)
            if not np.isfinite(coeff):
                raise ValidationError("term coefficients must be finite")
            for k in coalition:
                if not (0 <= k < self.n):
                    raise ValidationError(f"term index {k} outside [0, {self.n})")

    @classmethod
    def additive(cls, coefficients: Sequence[float]) -> "SyntheticGame":
        coeffs = [float(a) for a in coefficients]
        terms = tuple((frozenset({k}), a) for k, a in enumerate(coeffs))
        return cls(kind="additive", n=len(coeffs), terms=terms)

    @classmethod
    def conjunction(cls, n: int, coalition: Sequence[int]) -> "SyntheticGame":
        return cls(kind="conjunction", n=n, terms=((frozenset(int(k) for k in coalition), 1.0),))

    @classmethod
    def random_polynomial(cls, n: int, degree: int, num_terms: int, seed: int) -> "SyntheticGame":
        """Seeded draw of num_terms distinct coalitions (sizes 0..degree), N(0,1) coefficients."""
        from .rng import make_rng

        if not (1 <= degree <= n):
            raise ValidationError(f"degree must be in [1, {n}]")
        rng = make_rng(seed)
        pool: list[frozenset[int]] = [frozenset()]
        for d in range(1, degree + 1):
            pool.extend(frozenset(c) for c in itertools.combinations(range(n), d))
        if num_terms > len(pool):
            raise ValidationError(f"at most {len(pool)} distinct coalitions exist")
        chosen = rng.permutation(len(pool))[:num_terms]
        terms = tuple((pool[int(k)], float(rng.normal())) for k in sorted(chosen))
        return cls(kind="random_polynomial", n=n, terms=terms, seed=seed, degree=degree)


class PolynomialGame(ValueFunction):
    """Exact evaluator for a SyntheticGame; v(S) = sum of coefficients of terms inside S."""

    def __init__(self, spec: SyntheticGame):
        self.spec = spec
        self.n = spec.n
        self._term_bits = np.array(
            [sum(1 << k for k in coal) for coal, _ in spec.terms], dtype=np.uint64)
        self._coeffs = np.array([c for _, c in spec.terms], dtype=float)

    def evaluate(self, S: SubsetMask, x=None) -> float:
        # route through evaluate_many so both paths sum in the same order
        return float(self.evaluate_many([S], x)[0])

    def evaluate_many(self, subsets: Sequence[SubsetMask], x=None) -> np.ndarray:
        bits = np.array([S.bits for S in subsets], dtype=np.uint64)[:, None]
        inside = (self._term_bits[None, :] & bits) == self._term_bits[None, :]
        # row-wise reduction keeps each value independent of batch size
        return (inside * self._coeffs).sum(axis=1)


def synthetic_game(spec: SyntheticGame) -> PolynomialGame:
    return PolynomialGame(spec)
