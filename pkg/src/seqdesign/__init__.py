"""Sequential Bayesian experimental design for simulator models.

Proposes, one iteration at a time, the measurement design that maximizes the
mutual information between parameters and prospective data, estimating both
the utility and the posterior update with classifier-based density ratios and
optimizing designs with a Gaussian-process surrogate.
"""

from .belief import ParticleSet, ess, resample, sample_belief, update_weights
from .engine import RunConfig, RunState, simulated_oracle
from .gp import bo_optimize, expected_improvement, gp_fit, matern52
from .models import make_model
from .ratio import LfireConfig, RatioModel, RatioModelBatch, sample_marginal, train_ratio
from .utilities import (
    UtilityEstimate,
    bd_opt,
    bd_opt_stable,
    estimate_mi,
    estimate_mi_weighted,
    reference_mi,
)

__all__ = [
    "ParticleSet",
    "ess",
    "resample",
    "sample_belief",
    "update_weights",
    "RunConfig",
    "RunState",
    "simulated_oracle",
    "bo_optimize",
    "expected_improvement",
    "gp_fit",
    "matern52",
    "make_model",
    "LfireConfig",
    "RatioModel",
    "RatioModelBatch",
    "sample_marginal",
    "train_ratio",
    "UtilityEstimate",
    "bd_opt",
    "bd_opt_stable",
    "estimate_mi",
    "estimate_mi_weighted",
    "reference_mi",
]

__version__ = "0.1.0"
