"""Probability models on finite outcome sets and the Gaussian location family.

The likelihood-ratio conventions follow the four-way support split: finite
values on common support, +inf where only the alternative has mass, 0 where
only the null has mass, and an explicit "arbitrary" marker where neither
does.  Arbitrary entries resolve to 0 in all numeric use; they carry zero
mass under both models, so the choice cannot affect any expectation.

Everything here is immutable and pure, safe to share across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidInputError, ModelMismatchError

PROB_SUM_TOL = 1e-12


def _as_readonly(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FiniteDistribution:
    """Probability mass function over named outcomes.

    Inputs outside the mass-sum tolerance are rejected rather than
    renormalized so that validity audits stay exact.
    """

    outcomes: tuple
    probs: np.ndarray

    def __init__(self, outcomes: Sequence, probs: Sequence[float]):
        outcomes = tuple(outcomes)
        arr = _as_readonly(probs)
        if len(outcomes) != arr.shape[0]:
            raise InvalidInputError("outcomes and probs must have equal length")
        if len(set(outcomes)) != len(outcomes):
            raise InvalidInputError("outcome labels must be unique")
        if arr.ndim != 1 or arr.shape[0] == 0:
            raise InvalidInputError("probs must be a nonempty vector")
        if np.any(arr < 0.0) or not np.all(np.isfinite(arr)):
            raise InvalidInputError("probabilities must be finite and nonnegative")
        if abs(float(arr.sum()) - 1.0) > PROB_SUM_TOL:
            raise InvalidInputError(
                f"probabilities sum to {arr.sum()!r}, outside tolerance {PROB_SUM_TOL}"
            )
        object.__setattr__(self, "outcomes", outcomes)
        object.__setattr__(self, "probs", arr)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, FiniteDistribution)
            and self.outcomes == other.outcomes
            and np.array_equal(self.probs, other.probs)
        )

    def __len__(self) -> int:
        return len(self.outcomes)

    @property
    def support(self) -> np.ndarray:
        return self.probs > 0.0

    def same_outcomes(self, other: "FiniteDistribution") -> bool:
        return self.outcomes == other.outcomes

    def sample_indices(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Seeded outcome-index draws; deterministic given the generator state."""
        return rng.choice(len(self.outcomes), size=size, p=self.probs)

    def to_json(self) -> dict:
        return {"outcomes": list(self.outcomes), "probs": [float(p) for p in self.probs]}

    @classmethod
    def from_json(cls, obj: dict) -> "FiniteDistribution":
        try:
            return cls(obj["outcomes"], obj["probs"])
        except (KeyError, TypeError) as exc:
            raise InvalidInputError(f"bad distribution payload: {exc}") from exc


@dataclass(frozen=True, eq=False)
class FiniteMeasure:
    """Unsigned finite measure over named outcomes (no normalization)."""

    outcomes: tuple
    masses: np.ndarray

    def __init__(self, outcomes: Sequence, masses: Sequence[float]):
        outcomes = tuple(outcomes)
        arr = _as_readonly(masses)
        if len(outcomes) != arr.shape[0]:
            raise InvalidInputError("outcomes and masses must have equal length")
        if np.any(arr < 0.0) or not np.all(np.isfinite(arr)):
            raise InvalidInputError("masses must be finite and nonnegative")
        object.__setattr__(self, "outcomes", outcomes)
        object.__setattr__(self, "masses", arr)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, FiniteMeasure)
            and self.outcomes == other.outcomes
            and np.array_equal(self.masses, other.masses)
        )

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    @classmethod
    def from_distribution(cls, dist: FiniteDistribution) -> "FiniteMeasure":
        return cls(dist.outcomes, dist.probs)

    def to_json(self) -> dict:
        return {"outcomes": list(self.outcomes), "masses": [float(m) for m in self.masses]}


@dataclass(frozen=True)
class GaussianLocation:
    """Normal model with known scale; the location is the tested parameter."""

    mu: float
    sigma: float

    def __post_init__(self):
        if not (self.sigma > 0.0) or not np.isfinite(self.sigma):
            raise InvalidInputError("sigma must be positive and finite")
        if not np.isfinite(self.mu):
            raise InvalidInputError("mu must be finite")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.normal(self.mu, self.sigma, size=size)

    def to_json(self) -> dict:
        return {"mu": float(self.mu), "sigma": float(self.sigma)}

    @classmethod
    def from_json(cls, obj: dict) -> "GaussianLocation":
        try:
            return cls(float(obj["mu"]), float(obj["sigma"]))
        except (KeyError, TypeError) as exc:
            raise InvalidInputError(f"bad Gaussian payload: {exc}") from exc


@dataclass(frozen=True, eq=False)
class ExtendedRatio:
    """Per-outcome density ratio in [0, +inf], with arbitrary-value markers.

    ``values`` holds 0.0 at marked slots; ``resolved()`` is the numeric view
    used downstream (markers resolve to 0, the conservative choice).
    """

    outcomes: tuple
    values: np.ndarray
    arbitrary: np.ndarray

    def __init__(self, outcomes: Sequence, values: Sequence[float], arbitrary: Sequence[bool]):
        outcomes = tuple(outcomes)
        vals = _as_readonly(values)
        arb = np.array(arbitrary, dtype=bool)
        arb.setflags(write=False)
        if not (len(outcomes) == vals.shape[0] == arb.shape[0]):
            raise InvalidInputError("ratio fields must share one length")
        object.__setattr__(self, "outcomes", outcomes)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "arbitrary", arb)

    def resolved(self) -> np.ndarray:
        """Numeric values with arbitrary-marker slots set to 0."""
        return np.where(self.arbitrary, 0.0, self.values)


@dataclass(frozen=True)
class SupportPartition:
    """The four-way split of a shared outcome set by (p > 0, q > 0) signs."""

    common: tuple
    q_only: tuple
    p_only: tuple
    neither: tuple

    def as_tuple(self):
        return (self.common, self.q_only, self.p_only, self.neither)


def _require_same_outcomes(p: FiniteDistribution, q: FiniteDistribution) -> None:
    if not p.same_outcomes(q):
        raise ModelMismatchError(
            f"outcome sets differ: {p.outcomes!r} vs {q.outcomes!r}"
        )


def likelihood_ratio(p: FiniteDistribution, q: FiniteDistribution) -> ExtendedRatio:
    """Per-outcome ratio q/p with extended-value conventions.

    No normalizing constant is applied; scaling is the optimizer's job.
    """
    _require_same_outcomes(p, q)
    pp, qq = p.probs, q.probs
    values = np.zeros(len(pp))
    arbitrary = np.zeros(len(pp), dtype=bool)
    both = (pp > 0) & (qq > 0)
    q_only = (pp == 0) & (qq > 0)
    p_only = (pp > 0) & (qq == 0)
    neither = (pp == 0) & (qq == 0)
    values[both] = qq[both] / pp[both]
    values[q_only] = np.inf
    values[p_only] = 0.0
    arbitrary[neither] = True
    return ExtendedRatio(p.outcomes, values, arbitrary)


def support_partition(p: FiniteDistribution, q: FiniteDistribution) -> SupportPartition:
    """Split the shared outcome set into the four sign regions."""
    _require_same_outcomes(p, q)
    pp, qq = p.probs, q.probs
    labels = np.array(p.outcomes, dtype=object)

    def pick(mask):
        return tuple(labels[mask])

    return SupportPartition(
        common=pick((pp > 0) & (qq > 0)),
        q_only=pick((pp == 0) & (qq > 0)),
        p_only=pick((pp > 0) & (qq == 0)),
        neither=pick((pp == 0) & (qq == 0)),
    )


def expectation(d: FiniteDistribution, values) -> float:
    """Expectation with the 0 * inf := 0 convention.

    +inf (or -inf) propagates exactly when carried by an outcome of positive
    mass; zero-mass outcomes never contribute, whatever their value.
    """
    vals = np.asarray(values, dtype=float)
    if vals.shape != d.probs.shape:
        raise ModelMismatchError("values must align with the distribution's outcomes")
    mask = d.probs > 0.0
    v = vals[mask]
    has_pos_inf = np.any(np.isposinf(v))
    has_neg_inf = np.any(np.isneginf(v))
    if has_pos_inf and has_neg_inf:
        return float("nan")
    if has_pos_inf:
        return float("inf")
    if has_neg_inf:
        return float("-inf")
    return float(np.dot(d.probs[mask], v))


def product_distribution(p1: FiniteDistribution, p2: FiniteDistribution) -> FiniteDistribution:
    """Independent product model on the tuple-labelled product space."""
    outcomes = tuple((a, b) for a in p1.outcomes for b in p2.outcomes)
    probs = np.outer(p1.probs, p2.probs).reshape(-1)
    # the outer product of unit-sum vectors can drift by ~2 ulp; rescale
    probs = probs / probs.sum()
    return FiniteDistribution(outcomes, probs)
