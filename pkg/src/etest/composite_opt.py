"""Optimal tests against finitely many null distributions on finite spaces.

The primal problem maximizes E_Q[U(test)] over the box [0, 1/alpha] subject
to one linear budget per null member.  Strict concavity makes the optimum
unique on the alternative's support and characterized by the first-order
condition E_Q[U'(test*)(test - test*)] <= 0 over all valid tests, which is
a finite linear program and therefore checkable exactly.

The solver works in the dual: for fixed multipliers the inner maximization
separates per outcome with the same U'^-1 form as the simple case, and the
dual is smooth (the envelope derivative 1 - E_P[test] is continuous across
cap kinks), so a box-constrained quasi-Newton minimization from a few
seeded starting points followed by a Newton polish on the binding
constraints reaches first-order slacks near machine precision.  The method
is a contract on the outcome (the verified slack), not on the trajectory.

The optimal multipliers also identify the projection of the alternative
onto the effective null: dP*/dQ proportional to U'(test*).  Its total mass
can be below one when the cap binds; membership in the effective null is
itself an LP and is exposed for audits.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog, minimize

from .errors import (
    FrameworkViolationError,
    InvalidInputError,
    ModelMismatchError,
    NonConvergenceError,
)
from .evidence import ContinuousTest, tabulated_test
from .measure import FiniteDistribution, FiniteMeasure, expectation
from .utility import Utility, admissibility, expected_utility, legendre

FOC_DEFAULT_TOL = 1e-6
VERTEX_MAX_OUTCOMES = 6
_RESTARTS = 3


@dataclass(frozen=True)
class CompositeProblem:
    hypothesis: tuple
    alternative: FiniteDistribution
    alpha: float
    utility: Utility

    def __init__(self, hypothesis, alternative, alpha, utility):
        members = tuple(hypothesis)
        if not members:
            raise InvalidInputError("hypothesis must be nonempty")
        for member in members:
            if member.outcomes != alternative.outcomes:
                raise ModelMismatchError("all distributions must share one outcome set")
        if not (0.0 <= alpha <= 1.0):
            raise InvalidInputError("alpha must lie in [0, 1]")
        if alpha == 0.0:
            if utility.h is not None and utility.h > 0.0:
                raise FrameworkViolationError(
                    "level 0 requires a power exponent h <= 0"
                )
            if utility.h is None and not admissibility(utility, 0.0).admissible:
                raise FrameworkViolationError(
                    "level 0 requires a bounded x*U'(x) for custom utilities"
                )
        object.__setattr__(self, "hypothesis", members)
        object.__setattr__(self, "alternative", alternative)
        object.__setattr__(self, "alpha", float(alpha))
        object.__setattr__(self, "utility", utility)

    @property
    def cap(self) -> float:
        return math.inf if self.alpha == 0.0 else 1.0 / self.alpha

    def null_matrix(self) -> np.ndarray:
        return np.stack([m.probs for m in self.hypothesis])


@dataclass(frozen=True)
class CompositeSolution:
    values: np.ndarray
    test: ContinuousTest
    objective: float
    duals: np.ndarray
    ripr: Optional[FiniteMeasure]
    foc_slack: float
    restarts_spread: float


def _free_evidence_mask(prob: CompositeProblem) -> np.ndarray:
    """Coordinates carrying alternative mass but no null mass at all."""
    return (prob.alternative.probs > 0) & np.all(prob.null_matrix() == 0.0, axis=0)


_DUAL_CEILING = 1e15
_VALUE_FLOOR = 1e-250


def _inner_values(
    prob: CompositeProblem,
    lam: np.ndarray,
    include_free: bool = True,
    ceiling: float = None,
) -> np.ndarray:
    """Per-outcome maximizer of q*U(x) - (lam @ P)*x over the box.

    Free-evidence coordinates sit at the cap regardless of the multipliers;
    with ``include_free`` False they are reported as 0 so budget algebra
    never multiplies a zero row into an infinite value.  ``ceiling`` bounds
    the box during dual iterations: near-zero multipliers would otherwise
    blow the inner maximizer to infinity and poison gradients, while the
    true optimum sits far below any reasonable ceiling.
    """
    u = prob.utility
    q = prob.alternative.probs
    s = lam @ prob.null_matrix()
    values = np.zeros(len(q))
    qs = (q > 0) & ~_free_evidence_mask(prob)
    with np.errstate(divide="ignore"):
        ratio = np.where(qs, s / np.where(qs, q, 1.0), np.inf)
    box = prob.cap if ceiling is None else min(prob.cap, ceiling)
    with np.errstate(over="ignore"):
        inv = u.inverse_derivative(ratio[qs])
    # the optimum is strictly positive on the alternative's support, but for
    # exponents near 1 the true value can underflow float64; keep it positive
    values[qs] = np.maximum(np.minimum(inv, box), _VALUE_FLOOR)
    if include_free:
        values[_free_evidence_mask(prob)] = prob.cap
    return values


def _dual_value_grad(prob: CompositeProblem, lam: np.ndarray):
    u = prob.utility
    q = prob.alternative.probs
    P = prob.null_matrix()
    values = _inner_values(prob, lam, include_free=False, ceiling=_DUAL_CEILING)
    qs = (q > 0) & ~_free_evidence_mask(prob)
    with np.errstate(divide="ignore"):
        util = u.value(values[qs])
    g = float(np.dot(q[qs], util) - lam @ (P @ values - 1.0))
    grad = 1.0 - P @ values
    return g, grad


def _budget_residuals(prob: CompositeProblem, lam: np.ndarray) -> np.ndarray:
    values = _inner_values(prob, lam, include_free=False, ceiling=_DUAL_CEILING)
    return prob.null_matrix() @ values - 1.0


def _power_jacobian(prob: CompositeProblem, lam: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Analytic d(budget residual)/d(log lambda) on the active set.

    Power family only: uncapped coordinates have d(value)/d(s) =
    -kappa * value / s, and s is linear in the multipliers.  The log
    parametrization keeps the iteration scale-free, which matters for
    exponents close to 1 where kappa amplifies multiplier errors a
    thousandfold.
    """
    kappa = 1.0 / (1.0 - prob.utility.h)
    P = prob.null_matrix()
    q = prob.alternative.probs
    s = lam @ P
    values = _inner_values(prob, lam, include_free=False, ceiling=_DUAL_CEILING)
    box = min(prob.cap, _DUAL_CEILING)
    qs = (q > 0) & ~_free_evidence_mask(prob)
    unc = qs & (values < box * (1.0 - 1e-12)) & (s > 0.0)
    jac = np.zeros((len(idx), len(idx)))
    if np.any(unc):
        # d resid_{P'} / d theta_P = -kappa * lam_P * sum_unc p'_i v_i p_{P,i} / s_i
        weight = values[unc] / s[unc]
        for col, pj in enumerate(idx):
            sens = -kappa * lam[pj] * P[:, unc] @ (weight * P[pj, unc])
            jac[:, col] = sens[idx]
    return jac


def _newton_polish(prob: CompositeProblem, lam: np.ndarray, tol: float = 1e-13) -> np.ndarray:
    """Active-set damped Newton driving binding budgets to exact equality.

    The KKT system (binding budgets at 1, multipliers nonnegative, inactive
    budgets feasible) is sufficient for optimality of the concave primal, so
    converging it certifies the solution; the first-order LP check remains
    as an independent audit.  Power families use the analytic Jacobian in
    log-multiplier space; other utilities fall back to finite differences.
    """
    P = prob.null_matrix()
    lam = np.maximum(np.array(lam, dtype=float), 0.0)
    is_power = prob.utility.h is not None and prob.utility.h < 1.0
    for _round in range(12):
        resid = _budget_residuals(prob, lam)
        active = (lam > 1e-11) | (resid > 1e-12)
        if not np.any(active):
            return lam
        idx = np.where(active)[0]
        lam[idx] = np.maximum(lam[idx], 1e-30)
        converged = False
        for _ in range(80):
            r = _budget_residuals(prob, lam)[idx]
            if not np.all(np.isfinite(r)):
                break
            err = float(np.max(np.abs(r)))
            if err < tol:
                converged = True
                break
            if is_power:
                jac = _power_jacobian(prob, lam, idx)
            else:
                jac = np.zeros((len(idx), len(idx)))
                step = 1e-7 * max(1.0, float(np.max(lam)))
                for col, j in enumerate(idx):
                    bumped = lam.copy()
                    bumped[j] += step
                    jac[:, col] = (
                        (_budget_residuals(prob, bumped))[idx] - r
                    ) / step * lam[j]  # scale to log space
            if not np.all(np.isfinite(jac)):
                break
            try:
                delta = np.linalg.lstsq(jac, -r, rcond=None)[0]
            except np.linalg.LinAlgError:
                break
            delta = np.clip(delta, -2.0, 2.0)  # log-space trust region
            theta = np.log(lam[idx])
            improved = False
            scale = 1.0
            for _half in range(25):
                trial = lam.copy()
                trial[idx] = np.exp(theta + scale * delta)
                r_trial = _budget_residuals(prob, trial)[idx]
                if np.all(np.isfinite(r_trial)) and float(
                    np.max(np.abs(r_trial))
                ) < err:
                    lam = trial
                    improved = True
                    break
                scale *= 0.5
            if not improved:
                break
        resid = _budget_residuals(prob, lam)
        # drop multipliers that collapsed, add violated budgets, re-run
        drop = active & (lam <= 1e-25) & (resid < -1e-12)
        add = ~active & (resid > 1e-12)
        if converged and not np.any(add):
            lam[lam <= 1e-25] = 0.0
            return lam
        if not np.any(drop) and not np.any(add):
            break
        lam[drop] = 0.0
    return lam


def lp_max_over_valid_tests(
    weights: np.ndarray,
    hypothesis: Sequence[FiniteDistribution],
    alpha: float,
) -> Tuple[float, Optional[np.ndarray], bool]:
    """max weights @ test over the valid-test polytope.

    Returns (value, argmax, bounded).  Unbounded directions exist only at
    level 0 on coordinates carrying no null mass; a positive weight there
    makes the program unbounded.  Coordinates are boxed by the budget-implied
    bounds min over members of 1/p, which leaves the feasible set unchanged.
    Vertex enumeration is used for small spaces, a dense simplex-type solver
    above.
    """
    members = list(hypothesis)
    P = np.stack([m.probs for m in members])
    w = np.asarray(weights, dtype=float)
    n = w.shape[0]
    cap = math.inf if alpha == 0.0 else 1.0 / alpha

    ub = np.full(n, cap)
    for i in range(n):
        pos = P[:, i] > 0
        if np.any(pos):
            ub[i] = min(ub[i], float(np.min(1.0 / P[pos, i])))
        if math.isinf(ub[i]):
            if w[i] > 0.0:
                return math.inf, None, False
            ub[i] = 0.0  # weightless free coordinate: pin it

    if n <= VERTEX_MAX_OUTCOMES:
        best, arg = _vertex_enumerate(w, P, ub)
        return best, arg, True
    res = linprog(-w, A_ub=P, b_ub=np.ones(P.shape[0]), bounds=list(zip([0.0] * n, ub)), method="highs")
    if not res.success:
        raise NonConvergenceError(f"LP solver failed: {res.message}")
    return float(-res.fun), np.asarray(res.x), True


def _vertex_enumerate(w: np.ndarray, P: np.ndarray, ub: np.ndarray):
    """Exhaustive basic-solution enumeration of {0 <= x <= ub, Px <= 1}."""
    m, n = P.shape
    rows = []
    rhs = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        rows.append(e)
        rhs.append(0.0)
        rows.append(e.copy())
        rhs.append(ub[i])
    for k in range(m):
        rows.append(P[k])
        rhs.append(1.0)
    rows = np.asarray(rows)
    rhs = np.asarray(rhs)
    best = -math.inf
    arg = None
    for combo in itertools.combinations(range(len(rows)), n):
        A = rows[list(combo)]
        b = rhs[list(combo)]
        det = np.linalg.det(A)
        if abs(det) < 1e-12:
            continue
        x = np.linalg.solve(A, b)
        if np.any(x < -1e-9) or np.any(x > ub + 1e-9) or np.any(P @ x > 1.0 + 1e-9):
            continue
        v = float(w @ x)
        if v > best + 1e-15:
            best = v
            arg = x
    if arg is None:
        # the origin is always feasible
        best, arg = 0.0, np.zeros(n)
    return best, arg


def verify_foc(values: np.ndarray, prob: CompositeProblem) -> float:
    """First-order-condition slack of a candidate solution.

    Maximizes E_Q[U'(values) * test] over all valid tests by LP and
    subtracts E_Q[U'(values) * values]; the candidate is optimal iff the
    slack is nonpositive up to tolerance.
    """
    u = prob.utility
    q = prob.alternative.probs
    vals = np.asarray(values, dtype=float)
    with np.errstate(divide="ignore"):
        deriv = u.derivative(vals)
    if np.any((q > 0) & np.isposinf(deriv)):
        # a zero on the alternative's support with U'(0) = inf is never optimal
        return math.inf
    weights = np.where(q > 0, q * np.where(q > 0, deriv, 0.0), 0.0)
    # q-weighted marginal at the candidate, with its limit at inf values
    marginal = float(np.dot(q[q > 0], u.marginal_value(vals[q > 0])))
    best, _, bounded = lp_max_over_valid_tests(weights, prob.hypothesis, prob.alpha)
    if not bounded:
        return math.inf
    return best - marginal


def solve_composite(
    prob: CompositeProblem,
    tol: float = FOC_DEFAULT_TOL,
    max_iter: int = 500,
    seed: int = 0,
) -> CompositeSolution:
    """Maximize E_Q[U(test)] over valid level-alpha tests.

    Dual quasi-Newton from seeded restarts, Newton polish on the binding
    budgets, first-order-condition verification by LP.  Deterministic given
    the seed; raises when the verified slack misses ``tol``.
    """
    if not prob.utility.invertible_derivative:
        raise FrameworkViolationError(
            "composite solver requires a strictly concave utility; "
            "use np_limit for the linear target"
        )
    P = prob.null_matrix()
    m = P.shape[0]
    q = prob.alternative.probs

    rng = np.random.default_rng(seed)
    starts = [np.full(m, 1.0 / m)]
    for _ in range(_RESTARTS - 1):
        starts.append(np.full(m, 1.0 / m) * rng.uniform(0.25, 4.0, size=m))

    candidates = []
    for lam0 in starts:
        res = minimize(
            lambda lam: _dual_value_grad(prob, lam),
            lam0,
            jac=True,
            method="L-BFGS-B",
            bounds=[(0.0, None)] * m,
            options={"ftol": 1e-16, "gtol": 1e-12, "maxiter": max_iter},
        )
        lam = _newton_polish(prob, res.x)
        reduced = _inner_values(prob, lam, include_free=False)
        with np.errstate(invalid="ignore"):
            budget = np.where(P > 0, P * reduced, 0.0).sum(axis=1)
        worst_budget = float(np.max(budget - 1.0, initial=0.0))
        if not np.all(np.isfinite(reduced[(q > 0) & ~_free_evidence_mask(prob)])):
            worst_budget = math.inf
        candidates.append((lam, reduced, worst_budget))

    feasible = [c for c in candidates if c[2] <= 1e-7]
    if not feasible:
        raise NonConvergenceError("no restart produced a feasible multiplier vector")
    constrained = (q > 0) & ~_free_evidence_mask(prob)
    spread = float(
        max(
            np.max(np.abs(c[1][constrained] - feasible[0][1][constrained]), initial=0.0)
            for c in feasible
        )
    )
    reduced_objectives = [
        float(np.dot(q[constrained], prob.utility.value(c[1][constrained])))
        if np.any(constrained)
        else 0.0
        for c in feasible
    ]
    best_idx = int(np.argmax(reduced_objectives))
    lam = feasible[best_idx][0]
    values = _inner_values(prob, lam, include_free=True)
    objective = expected_utility(prob.alternative, values, prob.utility)

    slack = verify_foc(values, prob)
    if not (slack <= tol):
        raise NonConvergenceError(
            f"first-order slack {slack:.3e} above tolerance {tol:.1e}"
        )
    ripr_measure = None
    if prob.utility.strictly_concave and np.all(values[q > 0] > 0.0):
        ripr_measure = ripr(values, prob)
    test = tabulated_test(prob.alternative.outcomes, values, prob.alpha)
    return CompositeSolution(
        values=test.body.values,
        test=test,
        objective=objective,
        duals=lam,
        ripr=ripr_measure,
        foc_slack=slack,
        restarts_spread=spread,
    )


def ripr(values: np.ndarray, prob: CompositeProblem) -> FiniteMeasure:
    """Projection of the alternative onto the effective null.

    Mass q * U'(test*) / E_Q[U'(test*) * test*]; an unsigned measure whose
    total can drop below one when the cap binds.  Requires strict positivity
    of the solution on the alternative's support.
    """
    q = prob.alternative.probs
    vals = np.asarray(values, dtype=float)
    if np.any((q > 0) & (vals <= 0.0)):
        raise InvalidInputError("projection requires positivity on the alternative support")
    u = prob.utility
    marginal = float(np.dot(q[q > 0], u.marginal_value(vals[q > 0])))
    if not (marginal > 0.0) or math.isinf(marginal):
        raise InvalidInputError("degenerate normalizer in projection")
    deriv = np.zeros_like(vals)
    mask = q > 0
    deriv[mask] = u.derivative(vals[mask])
    deriv[mask & np.isposinf(vals)] = 0.0
    masses = q * deriv / marginal
    masses = np.where(mask, masses, 0.0)
    return FiniteMeasure(prob.alternative.outcomes, masses)


def reconstruct_from_projection(
    projection: FiniteMeasure, prob: CompositeProblem, values: np.ndarray
) -> np.ndarray:
    """Invert the projection identity test* = U'^-1(marginal * dP*/dQ).

    Round-trip diagnostic: with the exact projection this reproduces the
    optimal values on the alternative's support.
    """
    q = prob.alternative.probs
    u = prob.utility
    marginal = float(np.dot(q[q > 0], u.marginal_value(np.asarray(values)[q > 0])))
    out = np.zeros_like(q)
    mask = q > 0
    ratio = marginal * projection.masses[mask] / q[mask]
    out[mask] = np.minimum(u.inverse_derivative(ratio), prob.cap)
    return out


@dataclass(frozen=True)
class MembershipReport:
    value: float
    member: bool

    def __iter__(self):
        return iter((self.value, self.member))


def effective_membership(
    candidate, hypothesis: Sequence[FiniteDistribution], alpha: float, tol: float = 1e-9
) -> MembershipReport:
    """Does every valid level-alpha test keep mean <= 1 under ``candidate``?

    Solved as an LP over the valid-test polytope.  At level 0 the polytope
    can be unbounded along null-free coordinates; candidate mass there means
    non-membership with value +inf.
    """
    masses = candidate.masses if isinstance(candidate, FiniteMeasure) else candidate.probs
    members = list(hypothesis)
    if not members:
        raise InvalidInputError("hypothesis must be nonempty")
    if len(masses) != len(members[0].probs):
        raise ModelMismatchError("candidate must live on the shared outcome set")
    value, _, bounded = lp_max_over_valid_tests(np.asarray(masses, dtype=float), members, alpha)
    if not bounded:
        return MembershipReport(math.inf, False)
    return MembershipReport(value, value <= 1.0 + tol)


def renyi_divergence(q: FiniteDistribution, p, order: float) -> float:
    """Renyi divergence of the alternative from a null candidate.

    Computed on the alternative's support; +inf whenever the alternative
    has mass where the candidate has none.  order = 1 is Kullback-Leibler,
    order = inf the log of the essential supremum of the density ratio.
    """
    if not (order > 0.0):
        raise InvalidInputError("order must be positive")
    masses = p.masses if isinstance(p, FiniteMeasure) else p.probs
    masses = np.asarray(masses, dtype=float)
    mask = q.probs > 0.0
    qq = q.probs[mask]
    pp = masses[mask]
    if np.any(pp == 0.0):
        return math.inf
    ratio = qq / pp
    if math.isinf(order):
        return float(np.log(np.max(ratio)))
    if order == 1.0:
        return float(np.dot(qq, np.log(ratio)))
    h = order - 1.0
    return float(np.log(np.dot(qq, np.power(ratio, h))) / h)


def testing_distance(q: FiniteDistribution, p_star) -> float:
    """Essential supremum of dQ/dP* over the alternative's support."""
    masses = p_star.masses if isinstance(p_star, FiniteMeasure) else p_star.probs
    masses = np.asarray(masses, dtype=float)
    mask = q.probs > 0.0
    if np.any(masses[mask] == 0.0):
        return math.inf
    return float(np.max(q.probs[mask] / masses[mask]))


def duality_gap(values: np.ndarray, prob: CompositeProblem) -> float:
    """|primal - dual| at the candidate, via the Legendre transform.

    The dual evaluates E_Q[V(lambda * dP*/dQ)] + lambda with
    lambda = E_Q[U'(test*) * test*]; zero gap certifies optimality.
    """
    u = prob.utility
    if not u.invertible_derivative:
        raise InvalidInputError("duality gap needs an invertible derivative")
    q = prob.alternative.probs
    vals = np.asarray(values, dtype=float)
    projection = ripr(vals, prob)
    lam = float(np.dot(q[q > 0], u.marginal_value(vals[q > 0])))
    mask = q > 0
    ratio = lam * projection.masses[mask] / q[mask]
    dual = float(np.dot(q[mask], [legendre(u, float(r)) for r in ratio])) + lam
    primal = expected_utility(prob.alternative, vals, u)
    return abs(primal - dual)


@dataclass(frozen=True)
class NpLimitReport:
    schedule: tuple
    objectives: tuple
    limit_values: np.ndarray
    lp_values: np.ndarray
    lp_objective: float
    objective_deviation: float


def np_limit(
    prob: CompositeProblem, schedule: Sequence[float] = (0.9, 0.99, 0.999)
) -> NpLimitReport:
    """Approach the linear-power optimum along a schedule of exponents.

    Solves the strictly concave problem for each h in the schedule and the
    h = 1 problem directly as an LP; the deviation is measured between
    classical-power objectives, since the linear optimizer need not be
    unique pointwise.
    """
    if prob.alpha == 0.0:
        raise FrameworkViolationError("the linear-power limit needs alpha > 0")
    from .utility import power_utility

    objectives = []
    last_values = None
    for h in schedule:
        if not (0.0 < h < 1.0):
            raise InvalidInputError("schedule must lie in (0, 1)")
        sub = CompositeProblem(prob.hypothesis, prob.alternative, prob.alpha, power_utility(h))
        sol = solve_composite(sub)
        objectives.append(float(expectation(prob.alternative, sol.values)))
        last_values = sol.values
    lp_value, lp_arg, bounded = lp_max_over_valid_tests(
        prob.alternative.probs, prob.hypothesis, prob.alpha
    )
    if not bounded:
        raise NonConvergenceError("linear program unbounded")
    deviation = abs(lp_value - objectives[-1])
    return NpLimitReport(
        schedule=tuple(schedule),
        objectives=tuple(objectives),
        limit_values=last_values,
        lp_values=lp_arg,
        lp_objective=float(lp_value),
        objective_deviation=float(deviation),
    )
