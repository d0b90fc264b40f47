"""Power targets: the utility interface, the power family, and generalized means.

The power family U_h(x) = (x^h - 1)/h for h != 0 (log at h = 0, its limit)
has derivative x^(h-1) and inverse derivative y^(1/(h-1)).  Maximizing its
expectation under the alternative is equivalent to maximizing the
h-generalized mean (E[x^h])^(1/h); h = 1 is classical power, h -> 0 the
growth-rate (expected-log) target.  h = 1 is kept as a degenerate member:
its derivative is constant, hence not invertible, and solvers route it to
the linear-program path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import InvalidInputError
from .measure import FiniteDistribution, expectation

_ROUND_TRIP_GRID = np.array([0.1, 0.25, 0.5, 1.0, 2.0, 5.0, 20.0, 100.0])
_ROUND_TRIP_TOL = 1e-9


@dataclass(frozen=True)
class Utility:
    """A concave nondecreasing power target with derivative machinery.

    ``marginal_value`` is x * U'(x) evaluated with its limits at 0 and inf;
    its boundedness is the admissibility criterion for level-0 problems and
    it appears in first-order conditions, so it gets a dedicated method
    rather than leaving callers to multiply infinities.
    """

    family: str  # "power" | "log" | "custom"
    h: Optional[float]
    strictly_concave: bool
    invertible_derivative: bool
    _value: Callable[[np.ndarray], np.ndarray]
    _derivative: Callable[[np.ndarray], np.ndarray]
    _inverse_derivative: Optional[Callable[[np.ndarray], np.ndarray]]
    _marginal: Callable[[np.ndarray], np.ndarray]

    def value(self, x):
        return self._value(np.asarray(x, dtype=float))

    def derivative(self, x):
        return self._derivative(np.asarray(x, dtype=float))

    def inverse_derivative(self, y):
        if self._inverse_derivative is None:
            raise InvalidInputError(
                "derivative is not invertible for this utility (linear case)"
            )
        return self._inverse_derivative(np.asarray(y, dtype=float))

    def marginal_value(self, x):
        return self._marginal(np.asarray(x, dtype=float))

    def to_json(self) -> dict:
        if self.family == "log":
            return {"utility": "log"}
        if self.family == "power":
            return {"utility": "power", "h": float(self.h)}
        raise InvalidInputError("custom utilities have no JSON form")

    @classmethod
    def from_json(cls, obj: dict) -> "Utility":
        kind = obj.get("utility")
        if kind == "log":
            return power_utility(0.0)
        if kind == "power":
            if "h" not in obj:
                raise InvalidInputError('power utility requires field "h"')
            return power_utility(float(obj["h"]))
        raise InvalidInputError(f"unknown utility spec: {obj!r}")


def _power_value(h: float):
    if h == 0.0:
        def val(x):
            with np.errstate(divide="ignore"):
                return np.log(x)
        return val

    def val(x):
        with np.errstate(divide="ignore", over="ignore"):
            return (np.power(x, h) - 1.0) / h
    return val


def _power_derivative(h: float):
    def der(x):
        with np.errstate(divide="ignore", over="ignore"):
            return np.power(x, h - 1.0)
    return der


def _power_inverse_derivative(h: float):
    # y^(1/(h-1)); maps 0 -> inf and inf -> 0 for h < 1
    expo = 1.0 / (h - 1.0)

    def inv(y):
        with np.errstate(divide="ignore", over="ignore"):
            return np.power(y, expo)
    return inv


def _power_marginal(h: float):
    if h == 0.0:
        def marg(x):
            # x * (1/x) = 1 on (0, inf); both endpoint limits are 1 as well
            return np.ones_like(np.asarray(x, dtype=float))
        return marg

    def marg(x):
        with np.errstate(divide="ignore", over="ignore"):
            return np.power(x, h)
    return marg


def power_utility(h: float) -> Utility:
    """The power-family utility with exponent h <= 1 (log at h = 0)."""
    if not np.isfinite(h) or h > 1.0:
        raise InvalidInputError(f"power exponent must satisfy h <= 1, got {h!r}")
    if h == 1.0:
        return Utility(
            family="power",
            h=1.0,
            strictly_concave=False,
            invertible_derivative=False,
            _value=lambda x: x - 1.0,
            _derivative=lambda x: np.ones_like(x),
            _inverse_derivative=None,
            _marginal=lambda x: x,
        )
    family = "log" if h == 0.0 else "power"
    return Utility(
        family=family,
        h=float(h),
        strictly_concave=True,
        invertible_derivative=True,
        _value=_power_value(h),
        _derivative=_power_derivative(h),
        _inverse_derivative=_power_inverse_derivative(h),
        _marginal=_power_marginal(h),
    )


def log_utility() -> Utility:
    return power_utility(0.0)


def custom_utility(
    value: Callable,
    derivative: Callable,
    inverse_derivative: Optional[Callable],
    strictly_concave: bool = True,
) -> Utility:
    """Wrap caller-supplied callables, property-testing the U'/U'^-1 round trip."""
    _value = lambda x: np.asarray(value(x), dtype=float)
    _derivative = lambda x: np.asarray(derivative(x), dtype=float)
    _inverse = None
    if inverse_derivative is not None:
        _inverse = lambda y: np.asarray(inverse_derivative(y), dtype=float)
        probe = _inverse(_derivative(_ROUND_TRIP_GRID))
        if not np.allclose(probe, _ROUND_TRIP_GRID, rtol=_ROUND_TRIP_TOL, atol=_ROUND_TRIP_TOL):
            raise InvalidInputError(
                "inverse_derivative(derivative(x)) deviates from x on the probe grid"
            )

    def marginal(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(invalid="ignore"):
            out = x * _derivative(x)
        return out

    return Utility(
        family="custom",
        h=None,
        strictly_concave=strictly_concave,
        invertible_derivative=_inverse is not None,
        _value=_value,
        _derivative=_derivative,
        _inverse_derivative=_inverse,
        _marginal=marginal,
    )


@dataclass(frozen=True)
class AdmissibilityVerdict:
    status: str  # "admissible" | "not_guaranteed"
    reason: str

    @property
    def admissible(self) -> bool:
        return self.status == "admissible"


def admissibility(u: Utility, alpha: float) -> AdmissibilityVerdict:
    """Check the sufficient condition for an optimizer to exist.

    A positive level bounds the utility on its domain, which suffices; at
    level 0 the criterion is boundedness of x * U'(x).  Power exponents in
    (0, 1] fail it, which does not preclude model-specific existence.
    """
    if alpha > 0.0:
        return AdmissibilityVerdict("admissible", "alpha > 0 bounds the utility on [0, 1/alpha]")
    if u.family == "log":
        return AdmissibilityVerdict("admissible", "x*U'(x) = 1 for the log utility")
    if u.family == "power":
        if u.h <= 0.0:
            return AdmissibilityVerdict(
                "admissible", f"x*U'(x) = x^h is bounded above for h = {u.h} <= 0"
            )
        return AdmissibilityVerdict(
            "not_guaranteed",
            f"x*U'(x) = x^h is unbounded for h = {u.h} > 0 at level 0",
        )
    # custom utility: probe the marginal on a wide log grid
    grid = np.logspace(-6, 9, 61)
    marg = u.marginal_value(grid)
    if np.all(np.isfinite(marg)) and float(marg[-1]) <= float(np.max(marg[:-1])) * 1.0001 + 1e-12:
        return AdmissibilityVerdict("admissible", "x*U'(x) appears bounded on the probe grid")
    return AdmissibilityVerdict("not_guaranteed", "x*U'(x) grows along the probe grid")


def generalized_mean(q: FiniteDistribution, values, h: float) -> float:
    """(E_Q[v^h])^(1/h) for h != 0, exp(E_Q[log v]) for h = 0.

    Zero values force the mean to 0 whenever h <= 0 and they carry positive
    mass; the mean is positively homogeneous of degree one in the values.
    """
    if h > 1.0:
        raise InvalidInputError("generalized mean requires h <= 1")
    vals = np.asarray(values, dtype=float)
    if np.any(vals < 0.0):
        raise InvalidInputError("generalized mean requires nonnegative values")
    mask = q.probs > 0.0
    v = vals[mask]
    w = q.probs[mask]
    if h == 0.0:
        if np.any(v == 0.0):
            return 0.0
        if np.any(np.isposinf(v)):
            return float("inf")
        return float(np.exp(np.dot(w, np.log(v))))
    if h < 0.0 and np.any(v == 0.0):
        return 0.0
    if h > 0.0 and np.any(np.isposinf(v)):
        return float("inf")
    with np.errstate(divide="ignore"):
        powered = np.power(v, h)
    m = float(np.dot(w, powered))
    if m == 0.0:
        # all mass on v = inf with h < 0: the mean diverges
        return float("inf") if h < 0.0 else 0.0
    return float(np.power(m, 1.0 / h))


def legendre(u: Utility, y: float) -> float:
    """Legendre transform V(y) = sup_x U(x) - y*x, via the stationary point.

    Requires an invertible derivative; the supremum is attained at
    x = U'^-1(y).  For the log utility this is -log(y) - 1.
    """
    if not u.invertible_derivative:
        raise InvalidInputError("Legendre transform requires an invertible derivative")
    if not (y > 0.0):
        raise InvalidInputError("Legendre transform evaluated at y > 0 only")
    x_star = float(u.inverse_derivative(y))
    if x_star == 0.0:
        return float(u.value(0.0))
    if math.isinf(x_star):
        return float("inf")
    return float(u.value(x_star) - y * x_star)


def expected_utility(q: FiniteDistribution, values, u: Utility) -> float:
    """E_Q[U(values)] with extended-value conventions on zero-mass outcomes."""
    vals = np.asarray(values, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        util = u.value(vals)
    return expectation(q, util)
