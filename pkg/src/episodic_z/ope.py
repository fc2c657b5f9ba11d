"""Dynamic off-policy evaluation through blip contrasts.

For a deterministic reference pi the blip regressor of stage j becomes

    gamma_{i,j} = phi_j(X_{1:j}, T_{1:j}) - phi_j(X_{1:j}, (T_{1:j-1}, pi(history))),

which replaces phi in the residuals and the Jacobian while the instruments
phi - q stay unchanged. theta_0 is then the value E[y(pi)].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .estimator import ZEstimate, solve
from .inference import ConfidenceRegion, confidence_interval
from .model_plm import (EpisodeBatch, FeatureMap, PlmConfig, counterfactual_value,
                        reference_stage_parameters)
from .nuisance import NuisanceConfig
from .weights import WeightConfig


class ReferenceDomainError(ValueError):
    """The reference policy returned an arm outside the treatment set."""


@dataclass(frozen=True)
class ReferencePolicy:
    """Deterministic map from the stage-j history to an arm.

    ``arms`` gives one constant arm per stage; ``rule`` (if set) overrides it
    with a callable (j, X, T) -> arms of shape (m,).
    """

    name: str
    arms: Optional[tuple] = None
    rule: Optional[Callable] = None

    @classmethod
    def constant(cls, arm: int, horizon: int, name: Optional[str] = None) -> "ReferencePolicy":
        return cls(name or f"constant-{arm}", tuple([int(arm)] * horizon))

    @classmethod
    def zero_policy(cls, horizon: int) -> "ReferencePolicy":
        return cls.constant(0, horizon, "zero")

    @classmethod
    def always_treat(cls, horizon: int, arm: int = 1) -> "ReferencePolicy":
        return cls.constant(arm, horizon, "always-treat")

    @property
    def is_constant(self) -> bool:
        return self.rule is None and self.arms is not None

    @property
    def is_zero(self) -> bool:
        return self.is_constant and all(a == 0 for a in self.arms)

    def choose(self, features: FeatureMap, j: int, X: np.ndarray, T: np.ndarray) -> np.ndarray:
        m = X.shape[0]
        out = (np.asarray(self.rule(j, X, T), dtype=int) if self.rule is not None
               else np.full(m, self.arms[j - 1], dtype=int))
        if out.shape != (m,) or np.any(out < 0) or np.any(out >= features.n_arms):
            raise ReferenceDomainError(f"reference {self.name!r} left the treatment set at stage {j}")
        return out


@dataclass
class BlipContrast:
    reference: ReferencePolicy
    gamma: np.ndarray

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, float)


def contrast_features(batch: EpisodeBatch, reference: ReferencePolicy,
                      features: FeatureMap) -> BlipContrast:
    """gamma (n, l, d) from two feature evaluations per stage."""
    n, l = len(batch), batch.horizon
    gamma = np.empty((n, l, batch.dim))
    for j in range(1, l + 1):
        ref = reference.choose(features, j, batch.X, batch.T)
        gamma[:, j - 1] = (features.eval_batch(j, batch.X, batch.T[:, j - 1])
                           - features.eval_batch(j, batch.X, ref))
    return BlipContrast(reference, gamma)


def true_ope_parameters(config: PlmConfig, reference: ReferencePolicy, oracle_samples: int = 1_000_000,
                        seed: int = 0) -> tuple[np.ndarray, float]:
    """theta^(pi) = (E[y(pi)], blip coefficients) for a constant reference,
    with the Monte Carlo standard error of the value."""
    if not reference.is_constant:
        raise NotImplementedError("closed-form blip coefficients need a constant reference")
    value, se = counterfactual_value(config, reference, oracle_samples, np.random.default_rng(seed))
    stages = reference_stage_parameters(config, reference.arms)
    return np.concatenate([[value], stages.reshape(-1)]), se


@dataclass
class PolicyEvaluation:
    estimate: ZEstimate
    interval: ConfidenceRegion
    reference: str

    @property
    def value(self) -> float:
        return float(self.estimate.theta[0])

    def to_dict(self) -> dict:
        return {"reference": self.reference, "value": self.value,
                "estimate": self.estimate.to_dict(), "interval": self.interval.to_dict()}


def evaluate_policy(batch: EpisodeBatch, snapshots: dict, features: FeatureMap,
                    reference: ReferencePolicy, weights: Union[str, WeightConfig] = "feasible",
                    alpha: float = 0.0, c: Optional[float] = None, a: float = 0.05, *,
                    oracle_f: Optional[np.ndarray] = None, nuisance: Optional[NuisanceConfig] = None,
                    schedule: str = "prequential", moments_cache=None) -> PolicyEvaluation:
    """Value of ``reference`` with a CI for e_0^T theta.

    Partial-linear nuisances need a constant reference (product map unless
    the reference is the zero policy); other references fall back to the
    generic regression route.
    """
    if nuisance is None:
        plm_ok = reference.is_zero or (reference.is_constant and features.kind == "product")
        nuisance = NuisanceConfig(mode="plm" if plm_ok else "generic")
    contrast = contrast_features(batch, reference, features)
    est = solve(batch, snapshots, features, weights, alpha, c, psi=contrast.gamma,
                reference_arms=reference.arms if reference.is_constant else None,
                oracle_f=oracle_f, nuisance=nuisance, schedule=schedule, moments_cache=moments_cache)
    e0 = np.zeros(est.theta.shape[0])
    e0[0] = 1.0
    return PolicyEvaluation(est, confidence_interval(est, e0, a), reference.name)
