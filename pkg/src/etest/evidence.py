"""Evidence-scale tests: values in [0, 1/alpha] whose null mean is at most 1.

A level-alpha test on this scale encodes "reject at level alpha" as the cap
value 1/alpha and intermediate values as conditional rejection probabilities
(alpha * value).  Level 0 is the e-value case: the cap is +inf and the test
is defined directly on the evidence scale.  Validity always reads the same
way: sup over null members of E[value] <= 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .errors import InvalidInputError, ModelMismatchError
from .measure import (
    FiniteDistribution,
    GaussianLocation,
    expectation,
    product_distribution,
)

VALIDITY_TOL = 1e-9
WEIGHT_SUM_TOL = 1e-12


@dataclass(frozen=True)
class Level:
    """Significance level with its evidence-scale cap 1/alpha."""

    alpha: float

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise InvalidInputError(f"level must lie in [0, 1], got {self.alpha!r}")

    @property
    def cap(self) -> float:
        return math.inf if self.alpha == 0.0 else 1.0 / self.alpha


@dataclass(frozen=True, eq=False)
class Tabulated:
    """Per-outcome test values on a finite space; +inf allowed."""

    outcomes: tuple
    values: np.ndarray

    def __init__(self, outcomes: Sequence, values: Sequence[float]):
        outcomes = tuple(outcomes)
        arr = np.array(values, dtype=float)
        arr.setflags(write=False)
        if len(outcomes) != arr.shape[0]:
            raise InvalidInputError("outcomes and values must have equal length")
        if np.any(arr < 0.0) or np.any(np.isnan(arr)):
            raise InvalidInputError("test values must be nonnegative")
        object.__setattr__(self, "outcomes", outcomes)
        object.__setattr__(self, "values", arr)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Tabulated)
            and self.outcomes == other.outcomes
            and np.array_equal(self.values, other.values)
        )

    def values_at(self, indices: np.ndarray) -> np.ndarray:
        return self.values[indices]


@dataclass(frozen=True)
class ContinuousTest:
    """A level and a body: tabulated values or a parametric Gaussian rule."""

    level: Level
    body: object  # Tabulated, or any object exposing alpha/evaluate (Gaussian)

    def __post_init__(self):
        if isinstance(self.body, Tabulated):
            if np.any(self.body.values > self.level.cap):
                raise InvalidInputError(
                    f"test values exceed the cap 1/alpha = {self.level.cap!r}"
                )
        else:
            body_alpha = getattr(self.body, "alpha", None)
            if body_alpha is None or float(body_alpha) != self.level.alpha:
                raise InvalidInputError("parametric body must carry the same level")

    @property
    def alpha(self) -> float:
        return self.level.alpha

    @property
    def cap(self) -> float:
        return self.level.cap

    @property
    def is_tabulated(self) -> bool:
        return isinstance(self.body, Tabulated)


def tabulated_test(outcomes, values, alpha: float) -> ContinuousTest:
    return ContinuousTest(Level(alpha), Tabulated(outcomes, values))


def rescale_to_evidence(tau: float, alpha: float) -> float:
    """Recode a [0, 1]-scale test value to the evidence scale tau/alpha."""
    if not (0.0 <= tau <= 1.0):
        raise InvalidInputError(f"tau must lie in [0, 1], got {tau!r}")
    if not (0.0 < alpha <= 1.0):
        raise InvalidInputError(
            "alpha must lie in (0, 1]: a level-0 test is defined directly on the evidence scale"
        )
    return tau / alpha


@dataclass(frozen=True)
class ValidityReport:
    max_expectation: float
    valid: bool
    expectations: tuple

    def __iter__(self):
        return iter((self.max_expectation, self.valid))


def check_validity_exact(
    test: ContinuousTest, hypothesis: Sequence[FiniteDistribution], tol: float = VALIDITY_TOL
) -> ValidityReport:
    """Exact sup over null members of E[test]; valid iff <= 1 + tol."""
    if not test.is_tabulated:
        raise InvalidInputError("exact validity check requires a tabulated test")
    members = list(hypothesis)
    if not members:
        raise InvalidInputError("hypothesis must contain at least one distribution")
    vals = []
    for member in members:
        if member.outcomes != test.body.outcomes:
            raise ModelMismatchError("hypothesis member is not on the test's outcome set")
        vals.append(expectation(member, test.body.values))
    sup = max(vals)
    return ValidityReport(sup, sup <= 1.0 + tol, tuple(vals))


@dataclass(frozen=True)
class MonteCarloReport:
    estimate: float
    standard_error: float

    def __iter__(self):
        return iter((self.estimate, self.standard_error))


def _draw_test_values(
    test: ContinuousTest, null_model, rng: np.random.Generator, n: int
) -> np.ndarray:
    body = test.body if isinstance(test, ContinuousTest) else test
    if isinstance(null_model, FiniteDistribution):
        if not isinstance(body, Tabulated):
            raise InvalidInputError("finite null requires a tabulated test")
        if null_model.outcomes != body.outcomes:
            raise ModelMismatchError("null model is not on the test's outcome set")
        idx = null_model.sample_indices(rng, n)
        return body.values_at(idx)
    if isinstance(null_model, GaussianLocation):
        draws = null_model.sample(rng, n)
        return np.asarray(body.evaluate(draws), dtype=float)
    if callable(null_model):
        draws = null_model(rng, n)
        return np.asarray(body.evaluate(draws), dtype=float)
    raise InvalidInputError(f"unsupported null model {null_model!r}")


def check_validity_mc(
    test: ContinuousTest, null_model, n: int, seed: int
) -> MonteCarloReport:
    """Seeded Monte Carlo estimate of the null mean with its standard error."""
    if n < 100:
        raise InvalidInputError("Monte Carlo validity check needs n >= 100")
    rng = np.random.default_rng(seed)
    values = _draw_test_values(test, null_model, rng, n)
    est = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(n))
    return MonteCarloReport(est, se)


def combine_convex(
    tests: Sequence[ContinuousTest], weights: Sequence[float]
) -> ContinuousTest:
    """Weighted average of tabulated tests on one outcome set.

    The combined level is the weighted harmonic mean of the input levels,
    which is the tight uniform bound on the combined values; a level-0
    ingredient with positive weight forces level 0.  Validity is preserved.
    """
    tests = list(tests)
    w = np.asarray(weights, dtype=float)
    if len(tests) == 0 or len(tests) != w.shape[0]:
        raise InvalidInputError("need one weight per test")
    if np.any(w < 0.0) or abs(float(w.sum()) - 1.0) > WEIGHT_SUM_TOL:
        raise InvalidInputError("weights must be nonnegative and sum to 1")
    outcomes = None
    for t in tests:
        if not t.is_tabulated:
            raise InvalidInputError("convex combination requires tabulated tests")
        if outcomes is None:
            outcomes = t.body.outcomes
        elif t.body.outcomes != outcomes:
            raise ModelMismatchError("tests must share one outcome set")
    values = np.zeros(len(outcomes))
    inv_level = 0.0
    for t, wi in zip(tests, w):
        if wi == 0.0:
            continue
        with np.errstate(invalid="ignore"):
            contrib = wi * t.body.values
        contrib = np.where(np.isposinf(t.body.values), np.inf, contrib)
        values = values + contrib
        inv_level = inv_level + (math.inf if t.alpha == 0.0 else wi / t.alpha)
    alpha = 0.0 if math.isinf(inv_level) else 1.0 / inv_level
    return tabulated_test(outcomes, values, alpha)


def combine_product(
    t1: ContinuousTest, t2: ContinuousTest, independence: bool
) -> ContinuousTest:
    """Product of two tests from independent experiments, on the product space.

    Mean-independence is the caller's assertion; the library cannot verify
    it in general.  On finite product spaces, exactness can be audited with
    ``check_validity_exact`` against the product null model.
    """
    if not independence:
        raise InvalidInputError("the product rule requires declared mean-independence")
    if not (t1.is_tabulated and t2.is_tabulated):
        raise InvalidInputError("product combination requires tabulated tests")
    outcomes = tuple((a, b) for a in t1.body.outcomes for b in t2.body.outcomes)
    with np.errstate(invalid="ignore"):
        values = np.outer(t1.body.values, t2.body.values).reshape(-1)
    values = np.nan_to_num(values, nan=0.0, posinf=np.inf)  # 0 * inf -> 0 on the dead region
    alpha = t1.alpha * t2.alpha
    return tabulated_test(outcomes, values, alpha)


def product_null(p1: FiniteDistribution, p2: FiniteDistribution) -> FiniteDistribution:
    """Null model matching ``combine_product`` outputs."""
    return product_distribution(p1, p2)


@dataclass(frozen=True)
class Interpretation:
    value: float
    alpha: float
    kind: str  # "rejection" | "partial_rejection" | "no_evidence"
    rejection_probability: float
    cross_level_alpha: Optional[float]
    cross_level_note: str

    def message(self) -> str:
        if self.kind == "rejection":
            return f"rejection at level {self.alpha:g}"
        if self.kind == "partial_rejection":
            return (
                f"rejection with probability {self.rejection_probability:g} "
                f"at level {self.alpha:g}"
            )
        return "no evidence"


_CROSS_LEVEL_NOTE = (
    "reading 1/value as a data-dependent level requires the generalized "
    "(expected relative distortion) guarantee, not the fixed-level one"
)


def interpret(value: float, alpha: float) -> Interpretation:
    """Read an evidence-scale value at its level."""
    level = Level(alpha)
    if value < 0.0 or value > level.cap:
        raise InvalidInputError(f"value {value!r} outside [0, {level.cap!r}]")
    if value == 0.0:
        return Interpretation(value, alpha, "no_evidence", 0.0, None, "")
    cross = 1.0 / value if value > 1.0 else None
    if value == level.cap and (alpha > 0.0 or math.isinf(value)):
        return Interpretation(value, alpha, "rejection", 1.0, cross, _CROSS_LEVEL_NOTE if cross else "")
    return Interpretation(
        value,
        alpha,
        "partial_rejection",
        alpha * value,
        cross,
        _CROSS_LEVEL_NOTE if cross else "",
    )


def _encode_value(v: float):
    return "inf" if math.isinf(v) else float(v)


def _decode_value(v) -> float:
    if v == "inf":
        return math.inf
    return float(v)


def test_to_json(test: ContinuousTest) -> dict:
    if test.is_tabulated:
        return {
            "alpha": float(test.alpha),
            "kind": "tabulated",
            "outcomes": list(test.body.outcomes),
            "values": [_encode_value(v) for v in test.body.values],
        }
    body = test.body
    out = {
        "alpha": float(test.alpha),
        "kind": "gaussian",
        "mu": float(body.mu),
        "sigma": float(body.sigma),
        "h": float(body.h),
        "b": float(body.b),
    }
    if getattr(body, "threshold", None) is not None:
        out["threshold"] = float(body.threshold)
    return out


def test_from_json(obj: dict) -> ContinuousTest:
    try:
        kind = obj["kind"]
        alpha = float(obj["alpha"])
        if kind == "tabulated":
            values = [_decode_value(v) for v in obj["values"]]
            return tabulated_test(obj["outcomes"], values, alpha)
        if kind == "gaussian":
            from .gaussian import GaussianTest  # local import to avoid a cycle

            body = GaussianTest(
                mu=float(obj["mu"]),
                sigma=float(obj["sigma"]),
                h=float(obj["h"]),
                b=float(obj["b"]),
                alpha=alpha,
                threshold=(float(obj["threshold"]) if "threshold" in obj else None),
            )
            return ContinuousTest(Level(alpha), body)
    except (KeyError, TypeError) as exc:
        raise InvalidInputError(f"bad test payload: {exc}") from exc
    raise InvalidInputError(f"unknown test kind {obj.get('kind')!r}")
