"""
Utility modules initialization.
"""

from .exceptions import (
    ConfigError,
    DimensionError,
    MixedAdcError,
    NonConvergenceError,
    NumericalError,
)
from .helpers import (
    TrialSeeds,
    derive_trial_seed,
    make_rng,
    noise_variance_to_snr_db,
    snr_db_to_noise_variance,
    spec_hash,
    split_seed,
    utc_now,
)
from .numerics import (
    NormalRule,
    gauss_hermite_rule,
    q_function,
    trapezoid_normal_rule,
    truncated_normal_moments,
)

__all__ = [
    "ConfigError",
    "DimensionError",
    "MixedAdcError",
    "NonConvergenceError",
    "NumericalError",
    "TrialSeeds",
    "derive_trial_seed",
    "make_rng",
    "noise_variance_to_snr_db",
    "snr_db_to_noise_variance",
    "spec_hash",
    "split_seed",
    "utc_now",
    "NormalRule",
    "gauss_hermite_rule",
    "q_function",
    "trapezoid_normal_rule",
    "truncated_normal_moments",
]
