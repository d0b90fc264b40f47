"""Optimal evidence-scale tests against a simple null on finite spaces.

For a strictly concave utility the optimizer is U'^-1(lambda * p/q) capped
at 1/alpha, with the multiplier lambda* chosen so the null mean is exactly 1
(or 0 when the all-cap test is already feasible).  The null mean
M(lambda) = E_P[candidate(lambda)] is continuous and nonincreasing on the
common support, so a doubling bracket plus bisection finds the root; for
the power family the root additionally has a segment-wise closed form (the
capped set is a likelihood-ratio prefix), used for machine-precision roots
and for solving many levels at once in sequential constructions.

The linear utility (classical power) is handled separately: the optimum is
the cap above a likelihood-ratio threshold, a boundary value K exhausting
the null budget, and 0 below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import (
    ExistenceFailureError,
    FrameworkViolationError,
    InvalidInputError,
)
from .evidence import ContinuousTest, Level, tabulated_test
from .measure import FiniteDistribution, expectation, likelihood_ratio
from .utility import Utility, expected_utility

LAMBDA_TOL = 1e-10
MAX_DOUBLINGS = 200
BUDGET_TOL = 1e-12


@dataclass(frozen=True)
class SimpleSolution:
    """An optimal test with its multiplier and solver diagnostics.

    ``objective`` is the expected utility under the alternative, except on
    the linear route where it is the classical power E_Q[test] (also always
    available as ``power``).  The Neyman-Pearson fields (critical value and
    boundary value K) are None on the strictly concave route, and
    ``lambda_star`` is None on the linear route.
    """

    test: ContinuousTest
    lambda_star: Optional[float]
    objective: float
    null_mean: float
    iterations: int
    power: float
    critical_value: Optional[float] = None
    boundary_value: Optional[float] = None


def _case_masks(p: FiniteDistribution, q: FiniteDistribution):
    pp, qq = p.probs, q.probs
    return (
        (pp > 0) & (qq > 0),  # common support
        (pp == 0) & (qq > 0),  # null-free evidence: gets the cap
        (pp > 0) & (qq == 0),  # alternative-free: gets 0
    )


def candidate(
    lam: float, p: FiniteDistribution, q: FiniteDistribution, u: Utility, alpha: float
) -> ContinuousTest:
    """The multiplier-indexed family U'^-1(lambda p/q) capped at 1/alpha.

    Off the common support: the cap where only q has mass, 0 where only p
    has mass, and 0 on outcomes dead under both.  lambda = 0 yields the
    constant cap on the common support.
    """
    if not u.invertible_derivative:
        raise FrameworkViolationError(
            "candidate family needs an invertible derivative; "
            "use neyman_pearson for the linear utility"
        )
    if lam < 0.0:
        raise InvalidInputError("lambda must be nonnegative")
    level = Level(alpha)
    common, q_only, _ = _case_masks(p, q)
    values = np.zeros(len(p.outcomes))
    if np.any(common):
        ratio = lam * p.probs[common] / q.probs[common]
        values[common] = np.minimum(u.inverse_derivative(ratio), level.cap)
    values[q_only] = level.cap
    return tabulated_test(p.outcomes, values, alpha)


def null_mean(
    lam: float, p: FiniteDistribution, q: FiniteDistribution, u: Utility, alpha: float
) -> float:
    """M(lambda): the null mean of the candidate, restricted to common support.

    The restriction keeps the root-finding well posed at level 0, where the
    q-only region carries an infinite value at zero null mass.
    """
    level = Level(alpha)
    common, _, _ = _case_masks(p, q)
    if not np.any(common):
        return 0.0
    ratio = lam * p.probs[common] / q.probs[common]
    vals = np.minimum(u.inverse_derivative(ratio), level.cap)
    if np.any(np.isposinf(vals)):
        return math.inf
    return float(np.dot(p.probs[common], vals))


def power_family_lambda_for_levels(
    p: FiniteDistribution, q: FiniteDistribution, kappa: float, alphas
) -> np.ndarray:
    """Exact multiplier for the power family, vectorized across levels.

    kappa = 1/(1 - h) > 0.  An outcome sits at the cap iff
    lambda <= LR * cap^(-1/kappa), so for each level the capped set is a
    prefix in likelihood-ratio order and each prefix size k yields a
    closed-form candidate multiplier; the one landing inside its own
    bracket is the root.  Levels where the all-cap test is feasible get 0.
    """
    if kappa <= 0.0:
        raise InvalidInputError("kappa must be positive (h < 1)")
    alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
    common = (p.probs > 0) & (q.probs > 0)
    pp = p.probs[common]
    qq = q.probs[common]
    lam = np.full(alphas.shape, np.nan)
    if pp.size == 0:
        lam[:] = 0.0
        return lam
    lr = qq / pp
    order = np.argsort(-lr, kind="stable")
    pp, qq, lr = pp[order], qq[order], lr[order]
    m = pp.size
    p_common = float(pp.sum())

    inv_cap = np.where(alphas > 0.0, alphas, 0.0)  # 1/cap, 0 at level 0
    with np.errstate(divide="ignore"):
        caps = np.where(alphas > 0.0, 1.0 / np.where(alphas > 0.0, alphas, 1.0), np.inf)
    feasible0 = p_common <= alphas * (1.0 + 1e-15)  # all-cap test already valid
    lam[feasible0] = 0.0

    prefix_p = np.concatenate([[0.0], np.cumsum(pp)])
    terms = np.power(pp, 1.0 - kappa) * np.power(qq, kappa)
    suffix_terms = np.concatenate([np.cumsum(terms[::-1])[::-1], [0.0]])
    cap_factor = np.power(inv_cap, 1.0 / kappa)  # cap^(-1/kappa); 0 at level 0

    unresolved = ~feasible0
    for k in range(m):
        if not np.any(unresolved):
            break
        # capped prefix contributes prefix_p * cap to the null mean
        denom = np.ones_like(alphas) if prefix_p[k] == 0.0 else 1.0 - prefix_p[k] * caps
        valid = unresolved & (denom > 0.0) & (suffix_terms[k] > 0.0)
        if not np.any(valid):
            continue
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            cand = np.power(suffix_terms[k] / denom, 1.0 / kappa)
        thr_hi = lr[k - 1] * cap_factor if k > 0 else np.full(alphas.shape, np.inf)
        thr_lo = lr[k] * cap_factor
        hit = valid & (cand <= thr_hi * (1.0 + 1e-12)) & (cand > thr_lo * (1.0 - 1e-12))
        lam[hit] = cand[hit]
        unresolved &= np.isnan(lam)
    if np.any(np.isnan(lam)):
        raise ExistenceFailureError("no capped-prefix bracket matched some level")
    return lam


def solve_lambda(
    p: FiniteDistribution,
    q: FiniteDistribution,
    u: Utility,
    alpha: float,
    tol: float = LAMBDA_TOL,
) -> float:
    """Root of M(lambda) = 1, or 0 when the all-cap test is already feasible.

    Power-family inputs use the exact prefix closed form.  Other utilities
    bracket by doubling from lambda = 1 until M <= 1 (M is continuous and
    nonincreasing), bisect to ``tol``, then polish with a few guarded secant
    steps so |M - 1| lands well inside the downstream 1e-9 exactness checks.
    """
    if not u.invertible_derivative:
        raise FrameworkViolationError("solve_lambda requires an invertible derivative")
    if u.h is not None and u.h < 1.0:
        kappa = 1.0 / (1.0 - u.h)
        return float(power_family_lambda_for_levels(p, q, kappa, [alpha])[0])

    M = lambda lam: null_mean(lam, p, q, u, alpha)
    if M(0.0) <= 1.0:
        return 0.0
    lo, hi = 0.0, 1.0
    doubles = 0
    while M(hi) > 1.0:
        lo = hi
        hi *= 2.0
        doubles += 1
        if doubles > MAX_DOUBLINGS:
            raise ExistenceFailureError(
                "no feasible multiplier found after bracket doubling; "
                "boundedness of x*U'(x) is the sufficient condition"
            )
    for _ in range(200):
        if hi - lo <= tol * max(1.0, hi):
            break
        mid = 0.5 * (lo + hi)
        if M(mid) > 1.0:
            lo = mid
        else:
            hi = mid
    lam = 0.5 * (lo + hi)
    f_lam = M(lam) - 1.0
    a, fa = lo, M(lo) - 1.0
    b, fb = hi, M(hi) - 1.0
    for _ in range(40):
        if abs(fb) <= 1e-13 or fa == fb:
            break
        c = b - fb * (b - a) / (fb - fa)
        if not (lo <= c <= hi):
            c = 0.5 * (a + b)
        a, fa, b, fb = b, fb, c, M(c) - 1.0
    if abs(fb) < abs(f_lam):
        lam = b
    return float(lam)


def optimal_simple(
    p: FiniteDistribution,
    q: FiniteDistribution,
    u: Utility,
    alpha: float,
    tol: float = LAMBDA_TOL,
) -> SimpleSolution:
    """Expected-utility optimal level-alpha test against the simple null p.

    The linear utility routes to ``neyman_pearson`` when alpha > 0; at
    level 0 it falls outside the framework (the optimizer degenerates to a
    point mass on the likelihood-ratio maximizer).
    """
    if not u.invertible_derivative:
        if alpha > 0.0:
            return neyman_pearson(p, q, alpha)
        raise FrameworkViolationError(
            "the linear utility at level 0 has no nondegenerate optimizer"
        )
    lam = solve_lambda(p, q, u, alpha, tol=tol)
    test = candidate(lam, p, q, u, alpha)
    values = test.body.values
    return SimpleSolution(
        test=test,
        lambda_star=lam,
        objective=expected_utility(q, values, u),
        null_mean=expectation(p, values),
        iterations=0,
        power=expectation(q, values),
    )


def neyman_pearson(
    p: FiniteDistribution, q: FiniteDistribution, alpha: float
) -> SimpleSolution:
    """Classical-power optimum: greedy cap fill in likelihood-ratio order.

    Outcomes are processed by (likelihood ratio descending, input order);
    each gets the cap while the null budget allows, the first that does not
    fit gets the partial boundary value K, everything after gets 0.  Ties
    are broken by input order, so a tied group can straddle the boundary;
    the reported critical value is the ratio at which the budget ran out.
    Deterministic by construction and optimal for E_Q[test].
    """
    if not (0.0 < alpha <= 1.0):
        raise InvalidInputError("classical-power optimum requires alpha in (0, 1]")
    cap = 1.0 / alpha
    lr = likelihood_ratio(p, q).resolved()
    n = len(p.outcomes)
    order = sorted(range(n), key=lambda i: (-lr[i], i))
    values = np.zeros(n)
    budget = 1.0
    critical = 0.0
    boundary_k = cap
    exhausted = False
    for i in order:
        if p.probs[i] == 0.0:
            if q.probs[i] > 0.0:
                values[i] = cap  # free evidence at zero null cost
            continue
        if exhausted:
            continue
        cost = p.probs[i] * cap
        if cost <= budget + BUDGET_TOL:
            values[i] = cap
            budget = max(0.0, budget - cost)
            critical = lr[i]
        else:
            values[i] = budget / p.probs[i]
            critical = lr[i]
            boundary_k = values[i]
            budget = 0.0
            exhausted = True
    test = tabulated_test(p.outcomes, values, alpha)
    power = expectation(q, values)
    return SimpleSolution(
        test=test,
        lambda_star=None,
        objective=power,
        null_mean=expectation(p, values),
        iterations=0,
        power=power,
        critical_value=critical,
        boundary_value=boundary_k,
    )


def brute_force_oracle(
    p: FiniteDistribution,
    q: FiniteDistribution,
    u: Utility,
    alpha: float,
    grid_n: int = 21,
) -> Tuple[float, np.ndarray]:
    """Independent grid-search oracle for acceptance testing.

    Exhaustively enumerates per-outcome value grids over [0, min(cap, 1/p)]
    keeping feasible combinations (null mean <= 1), then refines once around
    the incumbent at the original spacing.  Deliberately ignorant of the
    candidate-family structure; only the box and the budget constraint are
    used.
    """
    n = len(p.outcomes)
    if n > 6:
        raise InvalidInputError("oracle restricted to sample spaces of size <= 6")
    if grid_n > 101 or grid_n < 2:
        raise InvalidInputError("oracle grid_n must lie in [2, 101]")
    cap = math.inf if alpha == 0.0 else 1.0 / alpha

    fixed = {}
    free_idx = []
    bounds = []
    for i in range(n):
        if p.probs[i] == 0.0:
            fixed[i] = cap if q.probs[i] > 0.0 else 0.0
            if math.isinf(fixed[i]):
                best = np.zeros(n)
                for j, v in fixed.items():
                    best[j] = v
                return math.inf, best  # unconstrained evidence: objective diverges
            continue
        free_idx.append(i)
        bounds.append(min(cap, 1.0 / p.probs[i]))

    base_null = sum(p.probs[j] * v for j, v in fixed.items())
    base_obj = sum(
        q.probs[j] * float(u.value(v)) for j, v in fixed.items() if q.probs[j] > 0
    )

    if not free_idx:
        vals = np.zeros(n)
        for j, v in fixed.items():
            vals[j] = v
        return expected_utility(q, vals, u), vals

    p_free = p.probs[free_idx]
    q_free = q.probs[free_idx]

    def best_on(grids):
        axes = [np.asarray(g, dtype=float) for g in grids]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([axis.reshape(-1) for axis in mesh], axis=1)
        feasible = pts @ p_free + base_null <= 1.0 + 1e-12
        if not np.any(feasible):
            return None, -math.inf
        pts = pts[feasible]
        with np.errstate(divide="ignore", invalid="ignore"):
            util = u.value(pts)
        util = np.where(np.isnan(util), -np.inf, util)
        obj = util @ q_free + base_obj
        k = int(np.argmax(obj))  # first maximizer in lexicographic order
        return pts[k], float(obj[k])

    grids = [np.linspace(0.0, b, grid_n) for b in bounds]
    incumbent, best_obj = best_on(grids)
    if incumbent is None:
        raise ExistenceFailureError("no feasible grid point found")
    spacings = [b / (grid_n - 1) for b in bounds]
    refined = [
        np.linspace(max(0.0, v - s), min(b, v + s), grid_n)
        for v, s, b in zip(incumbent, spacings, bounds)
    ]
    inc2, obj2 = best_on(refined)
    if obj2 > best_obj:
        incumbent, best_obj = inc2, obj2
    values = np.zeros(n)
    for j, v in fixed.items():
        values[j] = v
    values[free_idx] = incumbent
    return best_obj, values
