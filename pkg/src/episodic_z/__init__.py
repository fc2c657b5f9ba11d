"""Re-weighted Z-estimation for adaptively collected episodic data.

Simulation of partial linear Markovian models, behaviour policies with an
exploration floor, four weighting schemes, confidence intervals and
simultaneous bands, off-policy evaluation, and a seeded Monte Carlo CLI.
"""

from .estimator import ZEstimate, solve, standardized_error
from .inference import ConfidenceRegion, confidence_band, confidence_interval, coverage_experiment
from .model_plm import (EpisodeBatch, EpisodeRecord, FeatureMap, PlmConfig, TrueParameters,
                        counterfactual_value, derive_true_parameters, simulate_episode)
from .moments import ParameterVector, evaluate_moment, jacobian
from .ope import BlipContrast, ReferencePolicy, contrast_features, evaluate_policy
from .policy import PolicyFamily, PolicySnapshot, adaptive_policy_family, conditional_moments
from .weights import WeightConfig, WeightMatrices, inv_sqrt

__version__ = "0.1.0"
