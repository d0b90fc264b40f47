"""Sequential testing: wealth processes built from per-step evidence factors.

The running product of sequential factors with conditional null mean at most
one is a nonnegative supermartingale started at 1, so optional stopping
keeps its mean at most one and crossing 1/alpha has null probability at
most alpha.  The capped construction picks the step level alpha_t =
min(1, alpha * M_(t-1)), which pins every step's cap at 1/(alpha * M) and
therefore keeps the wealth inside [0, 1/alpha] pathwise, for every seed and
horizon.

Paths are simulated from per-step i.i.d. finite models.  The per-level
optimal step factors for the power family are computed with the exact
prefix closed form, vectorized across paths, so large path counts stay
cheap; other utilities fall back to the scalar solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidInputError, ModelMismatchError
from .evidence import Level
from .measure import FiniteDistribution
from .simple_opt import optimal_simple, power_family_lambda_for_levels
from .utility import Utility, log_utility

WEALTH_REL_TOL = 1e-12


@dataclass(frozen=True)
class StreamModel:
    """Per-step null and alternative laws, i.i.d. across steps."""

    null: FiniteDistribution
    alternative: FiniteDistribution

    def __post_init__(self):
        if self.null.outcomes != self.alternative.outcomes:
            raise ModelMismatchError("step laws must share one outcome set")

    @property
    def n_outcomes(self) -> int:
        return len(self.null.outcomes)


@dataclass(frozen=True)
class EProcessState:
    """Wealth process state: time, running product, and its factor history."""

    t: int
    wealth: float
    target_level: Level
    history: tuple = ()  # (factor, step_level) pairs

    def __post_init__(self):
        if self.wealth < 0.0:
            raise InvalidInputError("wealth must be nonnegative")

    @classmethod
    def initial(cls, alpha: float) -> "EProcessState":
        return cls(t=0, wealth=1.0, target_level=Level(alpha))

    def replay_product(self) -> float:
        prod = 1.0
        for factor, _ in self.history:
            prod *= factor
        return prod


def update(state: EProcessState, factor: float, step_level: Optional[float] = None) -> EProcessState:
    """Multiply the wealth by a nonnegative factor; 0 is absorbing."""
    if factor < 0.0 or math.isnan(factor):
        raise InvalidInputError("factors must be nonnegative")
    level = state.target_level.alpha if step_level is None else step_level
    return EProcessState(
        t=state.t + 1,
        wealth=state.wealth * factor,
        target_level=state.target_level,
        history=state.history + ((float(factor), float(level)),),
    )


def fischer_step(
    state: EProcessState, stream: StreamModel, utility: Optional[Utility] = None
):
    """Capped-step choice: level alpha_t = min(1, alpha * wealth).

    Returns the optimal per-outcome factor table at that level and the level
    itself.  The step cap 1/alpha_t equals 1/(alpha * M), so the updated
    wealth cannot exceed 1/alpha pointwise.  The log utility is the default
    (growth-optimal) choice.
    """
    alpha = state.target_level.alpha
    if alpha <= 0.0:
        raise InvalidInputError("the capped construction needs a positive target level")
    if state.wealth == 0.0:
        raise InvalidInputError("absorbed at zero wealth; no further testing")
    u = utility if utility is not None else log_utility()
    step_alpha = min(1.0, alpha * state.wealth)
    sol = optimal_simple(stream.null, stream.alternative, u, step_alpha)
    return sol.test.body.values, step_alpha


class FischerStrategy:
    """Capped per-step optimal testing toward a target level.

    Precomputes the likelihood-ratio ordering so whole vectors of step
    levels resolve through the exact power-family multiplier at once.
    """

    def __init__(self, stream: StreamModel, alpha: float, utility: Optional[Utility] = None):
        if not (0.0 < alpha <= 1.0):
            raise InvalidInputError("target level must lie in (0, 1]")
        self.stream = stream
        self.alpha = alpha
        self.utility = utility if utility is not None else log_utility()

    def factors(self, t: int, wealth: float) -> np.ndarray:
        if wealth == 0.0:
            return np.zeros(self.stream.n_outcomes)
        values, _ = fischer_step(
            EProcessState(t=t, wealth=wealth, target_level=Level(self.alpha)),
            self.stream,
            self.utility,
        )
        return values

    def factors_batch(self, wealth: np.ndarray) -> np.ndarray:
        """(paths, outcomes) factor table for a vector of wealth states."""
        wealth = np.asarray(wealth, dtype=float)
        u = self.utility
        if u.h is None or u.h >= 1.0:
            return np.stack([self.factors(0, w) for w in wealth])
        kappa = 1.0 / (1.0 - u.h)
        absorbed = wealth == 0.0
        levels = np.where(absorbed, 1.0, np.minimum(1.0, self.alpha * wealth))
        p = self.stream.null
        q = self.stream.alternative
        lam = power_family_lambda_for_levels(p, q, kappa, levels)
        caps = 1.0 / levels
        common = (p.probs > 0) & (q.probs > 0)
        q_only = (p.probs == 0) & (q.probs > 0)
        values = np.zeros((wealth.size, p.probs.size))
        with np.errstate(divide="ignore", over="ignore"):
            ratio = np.outer(lam, p.probs[common]) / q.probs[common]
            unc = np.power(ratio, -kappa)  # U'^-1 for the power family
        values[:, common] = np.minimum(unc, caps[:, None])
        values[:, q_only] = caps[:, None]
        values[absorbed, :] = 0.0
        return values


class FixedFactorStrategy:
    """Constant per-outcome factors, e.g. the plain likelihood ratio."""

    def __init__(self, factors: Sequence[float]):
        arr = np.asarray(factors, dtype=float)
        if np.any(arr < 0.0):
            raise InvalidInputError("factors must be nonnegative")
        self._factors = arr

    def factors(self, t: int, wealth: float) -> np.ndarray:
        return self._factors

    def factors_batch(self, wealth: np.ndarray) -> np.ndarray:
        return np.tile(self._factors, (np.asarray(wealth).size, 1))


def likelihood_ratio_strategy(stream: StreamModel) -> FixedFactorStrategy:
    """Uncapped growth-optimal factors for a full-support step model."""
    from .measure import likelihood_ratio

    return FixedFactorStrategy(likelihood_ratio(stream.null, stream.alternative).resolved())


def optional_stopping_audit(stream: StreamModel, strategy, horizon: int) -> float:
    """Maximum of E_null[M_tau] over all adapted stopping rules.

    Backward dynamic programming on the outcome tree: a rule stops or
    continues at each node, leaves stop, so the node value is
    max(M, E[child values]).  Equals exactly 1 for martingale factors and
    stays below for strict supermartingales.
    """
    if horizon > 8:
        raise InvalidInputError("stopping-rule audit restricted to horizon <= 8")
    if stream.n_outcomes > 3:
        raise InvalidInputError("stopping-rule audit restricted to <= 3 outcomes per step")
    null_probs = stream.null.probs

    def node_value(t: int, wealth: float) -> float:
        if t == horizon:
            return wealth
        factors = strategy.factors(t, wealth)
        continue_value = 0.0
        for prob, factor in zip(null_probs, factors):
            if prob == 0.0:
                continue
            continue_value += prob * node_value(t + 1, wealth * factor)
        return max(wealth, continue_value)

    return node_value(0, 1.0)


@dataclass(frozen=True)
class SimulationSummary:
    n_paths: int
    horizon: int
    under: str
    crossing_frequency: float
    crossing_se: float
    terminal_quantiles: dict
    mean_log_terminal: float
    se_log_terminal: float
    max_wealth_seen: float

    def to_json(self) -> dict:
        return {
            "n_paths": self.n_paths,
            "horizon": self.horizon,
            "under": self.under,
            "crossing_frequency": self.crossing_frequency,
            "crossing_se": self.crossing_se,
            "terminal_quantiles": self.terminal_quantiles,
            "mean_log_terminal": self.mean_log_terminal,
            "se_log_terminal": self.se_log_terminal,
            "max_wealth_seen": self.max_wealth_seen,
        }


def simulate(
    stream: StreamModel,
    strategy,
    n_paths: int,
    horizon: int,
    under: str,
    seed: int,
    target_alpha: Optional[float] = None,
) -> SimulationSummary:
    """Seeded path simulation with crossing, quantile, and growth summaries.

    The crossing frequency counts paths whose running supremum reaches the
    target cap 1/alpha; under the null it is bounded by alpha up to binomial
    noise.  Mean log terminal wealth estimates the growth rate under the
    alternative.  Deterministic given the seed.
    """
    if n_paths < 1000:
        raise InvalidInputError("simulation needs at least 1000 paths")
    if under not in ("null", "alternative"):
        raise InvalidInputError('sampling law must be "null" or "alternative"')
    law = stream.null if under == "null" else stream.alternative
    alpha = target_alpha
    if alpha is None:
        alpha = getattr(strategy, "alpha", 0.0)
    cap = math.inf if alpha == 0.0 else 1.0 / alpha

    rng = np.random.default_rng(seed)
    cum = np.cumsum(law.probs)
    cum[-1] = 1.0
    draws = rng.random((n_paths, horizon))

    wealth = np.ones(n_paths)
    running_max = np.ones(n_paths)
    for t in range(horizon):
        idx = np.searchsorted(cum, draws[:, t], side="left")
        table = strategy.factors_batch(wealth)
        wealth = wealth * table[np.arange(n_paths), idx]
        running_max = np.maximum(running_max, wealth)

    crossed = running_max >= cap * (1.0 - 1e-12)
    freq = float(crossed.mean())
    crossing_se = float(math.sqrt(max(freq * (1.0 - freq), 0.0) / n_paths))
    with np.errstate(divide="ignore"):
        logs = np.log(wealth)
    finite_logs = logs[np.isfinite(logs)]
    mean_log = float(finite_logs.mean()) if finite_logs.size else -math.inf
    se_log = (
        float(finite_logs.std(ddof=1) / math.sqrt(finite_logs.size))
        if finite_logs.size > 1
        else 0.0
    )
    qs = {
        "q10": float(np.quantile(wealth, 0.10)),
        "q50": float(np.quantile(wealth, 0.50)),
        "q90": float(np.quantile(wealth, 0.90)),
    }
    return SimulationSummary(
        n_paths=n_paths,
        horizon=horizon,
        under=under,
        crossing_frequency=freq,
        crossing_se=crossing_se,
        terminal_quantiles=qs,
        mean_log_terminal=mean_log,
        se_log_terminal=se_log,
        max_wealth_seen=float(running_max.max()),
    )
