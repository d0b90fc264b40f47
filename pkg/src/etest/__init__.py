"""Evidence-scale continuous testing toolkit.

Tests live on [0, 1/alpha] with the universal validity condition
E[test] <= 1 under every null member; level 0 recovers e-values.  The
package builds expected-utility-optimal tests for simple and composite
finite hypotheses, closed-form Gaussian location tests, sequential test
martingales with the capped per-step construction, and the conversions
between e-values, binary decisions, and p-values.
"""

from .errors import (
    EtestError,
    ExistenceFailureError,
    FrameworkViolationError,
    InvalidInputError,
    ModelMismatchError,
    NonConvergenceError,
)
from .evidence import (
    ContinuousTest,
    Level,
    Tabulated,
    check_validity_exact,
    check_validity_mc,
    combine_convex,
    combine_product,
    interpret,
    rescale_to_evidence,
    tabulated_test,
    test_from_json,
    test_to_json,
)
from .measure import (
    ExtendedRatio,
    FiniteDistribution,
    FiniteMeasure,
    GaussianLocation,
    expectation,
    likelihood_ratio,
    product_distribution,
    support_partition,
)
from .utility import (
    Utility,
    admissibility,
    custom_utility,
    generalized_mean,
    legendre,
    log_utility,
    power_utility,
)

__version__ = "0.1.0"

__all__ = [
    "ContinuousTest",
    "EtestError",
    "ExistenceFailureError",
    "ExtendedRatio",
    "FiniteDistribution",
    "FiniteMeasure",
    "FrameworkViolationError",
    "GaussianLocation",
    "InvalidInputError",
    "Level",
    "ModelMismatchError",
    "NonConvergenceError",
    "Tabulated",
    "Utility",
    "admissibility",
    "check_validity_exact",
    "check_validity_mc",
    "combine_convex",
    "combine_product",
    "custom_utility",
    "expectation",
    "generalized_mean",
    "interpret",
    "legendre",
    "likelihood_ratio",
    "log_utility",
    "power_utility",
    "product_distribution",
    "rescale_to_evidence",
    "support_partition",
    "tabulated_test",
    "test_from_json",
    "test_to_json",
]
