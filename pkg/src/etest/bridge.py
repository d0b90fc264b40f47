"""Conversions between e-values, capped tests, binary decisions, and p-values.

Rounding an e-value down to [0, 1/alpha] or {0, 1/alpha} preserves validity
because both conversions only ever shrink the value; the chain
indicator <= floor <= min <= alpha*x is the deterministic skeleton behind
Markov-type inequalities and holds pointwise before any expectation is
taken.  The reciprocal of a valid evidence value is a "strong" p-value
(E[1/p] <= 1), a strictly stronger guarantee than the per-level condition
P(p <= alpha) <= alpha that classical p-values satisfy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InvalidInputError

_REL_EPS = 1e-12


def e_to_continuous(e: float, alpha: float) -> float:
    """Round an e-value down to the level-alpha codomain [0, 1/alpha]."""
    if e < 0.0 or math.isnan(e):
        raise InvalidInputError("e-values are nonnegative")
    if not (0.0 < alpha <= 1.0):
        raise InvalidInputError("alpha must lie in (0, 1]")
    return min(e, 1.0 / alpha)


def e_to_binary(e: float, alpha: float) -> float:
    """Round an e-value down to the binary codomain {0, 1/alpha}."""
    if e < 0.0 or math.isnan(e):
        raise InvalidInputError("e-values are nonnegative")
    if not (0.0 < alpha <= 1.0):
        raise InvalidInputError("alpha must lie in (0, 1]")
    return 1.0 / alpha if alpha * e >= 1.0 else 0.0


def randomize(epsilon: float, alpha: float, u: float) -> bool:
    """External randomization of a capped test value: reject iff u <= alpha*value.

    Over repeated uniform draws the rejection frequency estimates
    alpha * value, the conditional rejection probability the value encodes.
    """
    if not (0.0 <= u <= 1.0):
        raise InvalidInputError("u must be a uniform draw in [0, 1]")
    prob = alpha * epsilon
    if prob < -_REL_EPS or prob > 1.0 + _REL_EPS:
        raise InvalidInputError("alpha * value must lie in [0, 1] (value above cap?)")
    return u <= prob


@dataclass(frozen=True)
class PValueFamily:
    """A rejection family sorted in the level: rejecting gets easier as it grows.

    Either a threshold family (reject iff alpha >= p0, the continuum case)
    or an explicit grid of levels with rejection flags.
    """

    kind: str  # "threshold" | "grid"
    p0: Optional[float] = None
    alphas: Optional[tuple] = None
    rejects: Optional[tuple] = None

    def __post_init__(self):
        if self.kind == "threshold":
            if self.p0 is None or self.p0 < 0.0:
                raise InvalidInputError("threshold family needs p0 >= 0")
        elif self.kind == "grid":
            if not self.alphas or self.rejects is None or len(self.alphas) != len(self.rejects):
                raise InvalidInputError("grid family needs aligned alphas and flags")
            alphas = tuple(float(a) for a in self.alphas)
            rejects = tuple(bool(r) for r in self.rejects)
            if any(a <= 0.0 for a in alphas):
                raise InvalidInputError("grid levels must be positive")
            if list(alphas) != sorted(alphas):
                raise InvalidInputError("grid levels must be sorted ascending")
            for earlier, later in zip(rejects, rejects[1:]):
                if earlier and not later:
                    raise InvalidInputError(
                        "family not sorted: a rejection must persist at larger levels"
                    )
            object.__setattr__(self, "alphas", alphas)
            object.__setattr__(self, "rejects", rejects)
        else:
            raise InvalidInputError(f"unknown family kind {self.kind!r}")

    @classmethod
    def threshold(cls, p0: float) -> "PValueFamily":
        return cls(kind="threshold", p0=float(p0))

    @classmethod
    def grid(cls, alphas: Sequence[float], rejects: Sequence[bool]) -> "PValueFamily":
        return cls(kind="grid", alphas=tuple(alphas), rejects=tuple(rejects))


@dataclass(frozen=True)
class FamilyReading:
    p_value: float
    sup_evidence: float
    identity_holds: bool


def p_from_family(family: PValueFamily) -> FamilyReading:
    """Smallest rejecting level, with the reciprocal-supremum identity check.

    The supremum of the evidence values 1/alpha over rejecting levels is
    1/p bitwise (correctly rounded division is monotone), so the identity
    check is exact for threshold families; grid families are resolution
    limited by construction and read the grid minimum of rejecting levels.
    Never rejecting reads p = +inf and supremum 0.
    """
    if family.kind == "threshold":
        p = float(family.p0)
        sup = math.inf if p == 0.0 else 1.0 / p
    else:
        rejecting = [a for a, r in zip(family.alphas, family.rejects) if r]
        if not rejecting:
            return FamilyReading(math.inf, 0.0, True)
        p = min(rejecting)
        sup = max(1.0 / a for a in rejecting)
    expected_sup = math.inf if p == 0.0 else (0.0 if math.isinf(p) else 1.0 / p)
    return FamilyReading(p, sup, sup == expected_sup)


def strong_p(epsilon: float) -> float:
    """Reciprocal conversion between evidence values and strong p-values.

    1/0 = inf and 1/inf = 0; a level-alpha input yields an output bounded
    below by alpha.
    """
    if epsilon < 0.0 or math.isnan(epsilon):
        raise InvalidInputError("evidence values are nonnegative")
    if epsilon == 0.0:
        return math.inf
    if math.isinf(epsilon):
        return 0.0
    return 1.0 / epsilon


@dataclass(frozen=True)
class MarkovChainValues:
    indicator: float
    floor: float
    capped: float
    product: float
    equality_value: float  # sup over levels of indicator/level, attained at 1/x

    def as_tuple(self):
        return (self.indicator, self.floor, self.capped, self.product)


def markov_chain_values(x: float, alpha: float) -> MarkovChainValues:
    """The pointwise chain indicator <= floor <= min <= alpha*x at one (x, alpha).

    Also evaluates the equality form: dividing the indicator by the level
    and taking the best level recovers x itself (at level 1/x).
    """
    if x < 0.0 or math.isnan(x):
        raise InvalidInputError("x must be nonnegative")
    if not (0.0 < alpha <= 1.0):
        raise InvalidInputError("alpha must lie in (0, 1]")
    product = alpha * x
    indicator = 1.0 if product >= 1.0 else 0.0
    capped = min(product, 1.0)
    floor = math.floor(capped)
    if not (indicator == floor <= capped <= product):
        raise AssertionError("chain ordering violated")  # pragma: no cover
    equality = x if x > 0.0 else 0.0  # indicator at level 1/x, divided by 1/x
    return MarkovChainValues(indicator, float(floor), capped, product, equality)


@dataclass(frozen=True)
class ExceedanceRow:
    alpha: float
    frequency: float
    standard_error: float
    flagged: bool


def weak_p_audit(
    p_sampler: Callable[[np.ndarray], np.ndarray] | Callable,
    alpha_grid: Sequence[float],
    n: int,
    seed: int,
) -> list:
    """Empirical P(p <= alpha) across a level grid, flagging 3-sigma excesses.

    ``p_sampler(rng, n)`` must return n draws of the p-value under the null.
    """
    if n < 10_000:
        raise InvalidInputError("exceedance audit needs n >= 10^4")
    rng = np.random.default_rng(seed)
    draws = np.asarray(p_sampler(rng, n), dtype=float)
    rows = []
    for alpha in alpha_grid:
        freq = float(np.mean(draws <= alpha))
        se = math.sqrt(max(freq * (1.0 - freq), 1.0 / n) / n)
        rows.append(ExceedanceRow(float(alpha), freq, se, freq > alpha + 3.0 * se))
    return rows


@dataclass(frozen=True)
class CrossLevelReport:
    raw_estimate: float
    raw_se: float
    reduced_estimate: float
    reduced_se: float
    flagged: bool


def cross_level_audit(test, null_model, n: int, seed: int) -> CrossLevelReport:
    """Audit the data-dependent-level reading alpha~ = 1/value.

    Simulates the rule "report a rejection at level 1/value with conditional
    probability min(1, value/value) = 1" and estimates the expected relative
    distortion E[I(reject)/alpha~]; by construction the ratio equals the
    test value itself, so the audit reduces to the validity condition
    E[value] <= 1.  Both the randomized (raw) and reduced estimates are
    reported; a 3-sigma excess above 1 is flagged.
    """
    if n < 10_000:
        raise InvalidInputError("cross-level audit needs n >= 10^4")
    if getattr(test, "alpha", None) in (None, 0.0):
        raise InvalidInputError("cross-level audit needs a positive-level test")
    from .evidence import _draw_test_values  # shared sampling dispatch

    rng = np.random.default_rng(seed)
    values = _draw_test_values(test, null_model, rng, n)
    u = rng.random(n)
    tilde_alpha = np.where(values > 0.0, 1.0 / np.maximum(values, 1e-300), np.inf)
    with np.errstate(invalid="ignore"):
        cond_prob = np.where(values > 0.0, np.minimum(1.0, values * tilde_alpha), 0.0)
    reject = u <= cond_prob  # probability 1 when the value is positive
    with np.errstate(divide="ignore"):
        ratio = np.where(reject & (values > 0.0), values, 0.0)
    raw = float(ratio.mean())
    raw_se = float(ratio.std(ddof=1) / math.sqrt(n))
    reduced = float(values.mean())
    reduced_se = float(values.std(ddof=1) / math.sqrt(n))
    return CrossLevelReport(
        raw_estimate=raw,
        raw_se=raw_se,
        reduced_estimate=reduced,
        reduced_se=reduced_se,
        flagged=reduced > 1.0 + 3.0 * reduced_se,
    )
