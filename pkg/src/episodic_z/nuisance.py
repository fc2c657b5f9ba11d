"""Prequential nuisance estimation for feasible weights.

The feasible second moment of stage j is f_hat = g_hat_j(history)^2 + sigma_bar_j^2,
where g_j is the conditional mean of the stage-j residual given
(X_{1:j}, T_{1:j-1}) and sigma_j^2 its (homoscedastic) variance. Two routes
are offered:

``generic``  regress pseudo-outcomes y - sum_{j'>=j} theta_bar^T psi on a
             polynomial expansion of the stage-j history;
``plm``      use the partial linear structure: g_1 = theta_1^T (phi_1(pi) + beta(X_1))
             + kappa(X_1) and g_j = theta_{j-1}^T X_j + kappa(X_1) for j >= 2,
             with beta and kappa regressed on X_1.

A fitted model records the last episode index it saw (``fit_boundary``) and
refuses to predict for any episode at or before it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from typing import Optional, Sequence

import numpy as np

from .model_plm import EpisodeBatch, FeatureMap
from .moments import residuals
from .weights import StaleNuisanceError

log = logging.getLogger(__name__)

NUISANCE_MODES = ("plm", "generic")


class UnderdeterminedFitError(ValueError):
    """Fewer episodes than regression coefficients."""


def polynomial_features(Z: np.ndarray, degree: int) -> np.ndarray:
    """All monomials of the columns of Z up to ``degree`` (constant first)."""
    Z = np.asarray(Z, float)
    if Z.ndim == 1:
        Z = Z[:, None]
    cols = [np.ones(Z.shape[0])]
    for deg in range(1, degree + 1):
        for combo in combinations_with_replacement(range(Z.shape[1]), deg):
            cols.append(np.prod(Z[:, combo], axis=1))
    return np.column_stack(cols)


@dataclass
class NuisanceConfig:
    mode: str = "plm"
    degree: int = 2
    ridge: float = 1e-8
    clamp: float = np.inf
    min_fit: int = 16

    def __post_init__(self):
        if self.mode not in NUISANCE_MODES:
            raise ValueError(f"unknown nuisance mode {self.mode!r}")
        if self.degree < 0 or self.ridge < 0 or self.clamp <= 0:
            raise ValueError("degree and ridge must be non-negative, clamp positive")


@dataclass
class PolyRegressor:
    """Polynomial least squares with a small ridge on the non-constant terms.

    Inputs are standardized with the training mean and scale before the
    expansion, which keeps the least-squares problem well conditioned.
    """

    degree: int = 2
    ridge: float = 1e-8
    clamp: float = np.inf
    coef: Optional[np.ndarray] = None
    shift: Optional[np.ndarray] = None
    scale: Optional[np.ndarray] = None
    mse: float = float("nan")
    n_fit: int = 0

    def _design(self, Z):
        Z = np.asarray(Z, float)
        if Z.ndim == 1:
            Z = Z[:, None]
        return polynomial_features((Z - self.shift) / self.scale, self.degree)

    def fit(self, Z: np.ndarray, t: np.ndarray) -> "PolyRegressor":
        Z = np.asarray(Z, float)
        if Z.ndim == 1:
            Z = Z[:, None]
        t = np.asarray(t, float)
        self.shift = Z.mean(axis=0)
        sd = Z.std(axis=0)
        self.scale = np.where(sd > 0, sd, 1.0)
        P = self._design(Z)
        n, k = P.shape
        if n < k:
            raise UnderdeterminedFitError(f"{n} samples for {k} coefficients")
        # ridge as extra rows of an augmented least-squares problem; the SVD
        # solve stays accurate when history columns are collinear
        pen = np.sqrt(np.full(k, self.ridge))
        pen[0] = 0.0
        A = np.vstack([P, np.diag(pen)])
        self.coef = np.linalg.lstsq(A, np.concatenate([t, np.zeros((k,) + t.shape[1:])]), rcond=None)[0]
        self.n_fit = n
        self.mse = float(np.mean((P @ self.coef - t) ** 2))
        return self

    @property
    def fitted(self) -> bool:
        return self.coef is not None

    def predict(self, Z: np.ndarray) -> np.ndarray:
        if not self.fitted:
            raise RuntimeError("regressor has not been fitted")
        out = self._design(Z) @ self.coef
        return np.clip(out, -self.clamp, self.clamp)

    def to_dict(self) -> dict:
        arr = lambda a: None if a is None else np.asarray(a).tolist()
        return {"degree": self.degree, "ridge": self.ridge, "coef": arr(self.coef),
                "shift": arr(self.shift), "scale": arr(self.scale), "mse": self.mse,
                "n_fit": self.n_fit}


@dataclass
class KnownFunction:
    """Stand-in regressor wrapping a known function, for oracle swaps."""

    fn: object
    scalar: bool = False
    mse: float = 0.0

    def predict(self, Z: np.ndarray) -> np.ndarray:
        out = self.fn(np.atleast_2d(np.asarray(Z, float)))
        return out[:, 0] if self.scalar else out

    def to_dict(self) -> dict:
        return {"known_function": repr(self.fn)}


def history_inputs(features: FeatureMap, j: int, X: np.ndarray, T: np.ndarray) -> np.ndarray:
    """Regression inputs for stage j: X_{1:j} and the treatment values a(T_{1:j-1})."""
    n = X.shape[0]
    parts = [X[:, :j].reshape(n, -1)]
    if j > 1:
        parts.append(features.arm_values[T[:, :j - 1]].reshape(n, -1))
    return np.concatenate(parts, axis=1)


def fit_generic_g(batch: EpisodeBatch, theta_bar: np.ndarray, j: int, features: FeatureMap,
                  psi: Optional[np.ndarray] = None, config: NuisanceConfig = NuisanceConfig()) -> PolyRegressor:
    """Regress r_j(theta_bar) on a polynomial of the stage-j history."""
    psi = features_of(batch, features) if psi is None else psi
    r = residuals(batch.y, psi, theta_bar)[:, j - 1]
    reg = PolyRegressor(config.degree, config.ridge, config.clamp)
    return reg.fit(history_inputs(features, j, batch.X, batch.T), r)


def fit_sigma(batch: EpisodeBatch, theta_bar: np.ndarray, g_hat: np.ndarray, j: int,
              features: FeatureMap, psi: Optional[np.ndarray] = None) -> float:
    """(1/i) sum (r_j(theta_bar) - g_hat)^2 over the prefix. Stage 0 uses
    r_0 = r_1 - theta_bar_0 and expects ``g_hat`` = 0."""
    psi = features_of(batch, features) if psi is None else psi
    tv = np.asarray(theta_bar, float)
    r = residuals(batch.y, psi, tv)
    rj = r[:, 0] - tv[0] if j == 0 else r[:, j - 1]
    return max(float(np.mean((rj - g_hat) ** 2)), 0.0)


def fit_plm_beta(batch: EpisodeBatch, features: FeatureMap,
                 config: NuisanceConfig = NuisanceConfig()) -> PolyRegressor:
    """Regress b = X_2 - phi_1(X_1, T_1) on X_1 (i.i.d. pairs)."""
    phi1 = features.eval_batch(1, batch.X, batch.T[:, 0])
    b = batch.X[:, 1] - phi1
    return PolyRegressor(config.degree, config.ridge, config.clamp).fit(batch.X[:, 0], b)


def kappa_proxy(batch: EpisodeBatch, theta_bar: np.ndarray, features: FeatureMap,
                reference_arms: Optional[Sequence[int]] = None) -> np.ndarray:
    """z_hat = y - theta_bar_l^T phi_l - omega_bar^T X_l.

    Under a constant reference, theta_{l-1} is the continuation coefficient
    a(pi_l) * theta_l + omega, so omega_bar = theta_bar_{l-1} - a(pi_l) * theta_bar_l.
    """
    l, d = batch.horizon, batch.dim
    st = np.asarray(theta_bar, float)[1:].reshape(l, d)
    arm_l = 0 if reference_arms is None else int(reference_arms[l - 1])
    omega_bar = st[l - 2] - features.arm_values[arm_l] * st[l - 1]
    phi_l = features.eval_batch(l, batch.X, batch.T[:, l - 1])
    return batch.y - phi_l @ st[l - 1] - batch.X[:, l - 1] @ omega_bar


def fit_plm_kappa(batch: EpisodeBatch, theta_bar: np.ndarray, features: FeatureMap,
                  reference_arms: Optional[Sequence[int]] = None,
                  config: NuisanceConfig = NuisanceConfig(),
                  theta_true: Optional[np.ndarray] = None) -> PolyRegressor:
    """Regress the contaminated proxy z_hat on X_1.

    The proxy error comes from theta_bar - theta and is unknown in practice;
    when ``theta_true`` is supplied the sup contamination is logged.
    """
    z = kappa_proxy(batch, theta_bar, features, reference_arms)
    reg = PolyRegressor(config.degree, config.ridge, config.clamp).fit(batch.X[:, 0], z)
    if theta_true is not None:
        nu = np.max(np.abs(z - kappa_proxy(batch, theta_true, features, reference_arms)))
        log.info("kappa proxy contamination at boundary %d: %.3e", int(batch.index[-1]), nu)
    else:
        log.debug("kappa proxy in-sample mse %.3e", reg.mse)
    return reg


def features_of(batch: EpisodeBatch, features: FeatureMap) -> np.ndarray:
    """Recorded features phi_{i,j}: shape (n, l, d)."""
    return np.stack([features.eval_batch(j, batch.X, batch.T[:, j - 1])
                     for j in range(1, batch.horizon + 1)], axis=1)


@dataclass
class NuisanceModel:
    """Frozen nuisance fit used for every episode after ``fit_boundary``.

    ``sigma2[j]`` is sigma_bar_j^2 for j = 0..l. An untrained model predicts
    g_hat = 0 and sigma_bar^2 = ``sigma2`` (zero unless a prior is given).
    """

    fit_boundary: int
    horizon: int
    dim: int
    mode: str = "untrained"
    sigma2: np.ndarray = None
    theta_bar: Optional[np.ndarray] = None
    g: list = field(default_factory=list)
    beta: Optional[PolyRegressor] = None
    kappa: Optional[PolyRegressor] = None
    reference_arms: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.sigma2 is None:
            self.sigma2 = np.zeros(self.horizon + 1)
        self.sigma2 = np.maximum(np.asarray(self.sigma2, float), 0.0)

    @classmethod
    def untrained(cls, horizon: int, dim: int, prior_variance: float = 0.0) -> "NuisanceModel":
        return cls(0, horizon, dim, "untrained", np.full(horizon + 1, float(prior_variance)))

    def check_fresh(self, index) -> None:
        idx = np.asarray(index)
        if idx.size and np.min(idx) <= self.fit_boundary:
            raise StaleNuisanceError(
                f"nuisance fitted through episode {self.fit_boundary} cannot weight episode {int(np.min(idx))}")

    def predict_g(self, features: FeatureMap, j: int, X: np.ndarray, T: np.ndarray) -> np.ndarray:
        """g_hat_j on stage-j histories (j >= 1)."""
        m = X.shape[0]
        if self.mode == "untrained":
            return np.zeros(m)
        if self.mode == "generic":
            return self.g[j - 1].predict(history_inputs(features, j, X, T))
        l, d = self.horizon, self.dim
        st = self.theta_bar[1:].reshape(l, d)
        kap = self.kappa.predict(X[:, 0])
        if j == 1:
            arm = 0 if self.reference_arms is None else int(self.reference_arms[0])
            lead = features.eval_batch(1, X, np.full(m, arm)) + self.beta.predict(X[:, 0])
            return lead @ st[0] + kap
        return X[:, j - 1] @ st[j - 2] + kap

    def predict_f(self, features: FeatureMap, X: np.ndarray, T: np.ndarray, index) -> np.ndarray:
        """Unclipped f_hat of shape (m, l+1); column 0 is the stage-0 variance."""
        self.check_fresh(index)
        m = X.shape[0]
        f = np.empty((m, self.horizon + 1))
        f[:, 0] = self.sigma2[0]
        for j in range(1, self.horizon + 1):
            f[:, j] = self.predict_g(features, j, X, T) ** 2 + self.sigma2[j]
        return f

    def to_dict(self) -> dict:
        return {
            "fit_boundary": self.fit_boundary, "mode": self.mode,
            "sigma2": self.sigma2.tolist(),
            "theta_bar": None if self.theta_bar is None else np.asarray(self.theta_bar).tolist(),
            "g": [r.to_dict() for r in self.g],
            "beta": None if self.beta is None else self.beta.to_dict(),
            "kappa": None if self.kappa is None else self.kappa.to_dict(),
            "reference_arms": None if self.reference_arms is None else np.asarray(self.reference_arms).tolist(),
        }


def fit_nuisance(batch: EpisodeBatch, theta_bar: np.ndarray, features: FeatureMap,
                 psi: Optional[np.ndarray] = None, reference_arms: Optional[Sequence[int]] = None,
                 config: NuisanceConfig = NuisanceConfig(), *,
                 beta: Optional[PolyRegressor] = None, kappa: Optional[PolyRegressor] = None,
                 theta_true: Optional[np.ndarray] = None) -> NuisanceModel:
    """Fit every nuisance on ``batch`` (episodes up to its last index).

    ``beta`` / ``kappa`` replace the corresponding fitted sub-model, which
    lets diagnostics swap in oracle components one at a time.
    """
    l, d = batch.horizon, batch.dim
    tv = np.asarray(theta_bar, float)
    psi = features_of(batch, features) if psi is None else psi
    model = NuisanceModel(int(batch.index[-1]), l, d, config.mode, theta_bar=tv.copy(),
                          reference_arms=None if reference_arms is None else np.asarray(reference_arms, int))
    if config.mode == "generic":
        model.g = [fit_generic_g(batch, tv, j, features, psi, config) for j in range(1, l + 1)]
    else:
        if reference_arms is not None and np.any(np.asarray(reference_arms) != 0) and features.kind != "product":
            raise NotImplementedError("plm nuisances with a non-zero reference need the product feature map")
        model.beta = beta if beta is not None else fit_plm_beta(batch, features, config)
        model.kappa = kappa if kappa is not None else fit_plm_kappa(
            batch, tv, features, reference_arms, config, theta_true)
    sig = np.empty(l + 1)
    sig[0] = fit_sigma(batch, tv, 0.0, 0, features, psi)
    for j in range(1, l + 1):
        sig[j] = fit_sigma(batch, tv, model.predict_g(features, j, batch.X, batch.T), j, features, psi)
    model.sigma2 = sig
    return model


def predict_f(model: NuisanceModel, features: FeatureMap, batch: EpisodeBatch) -> np.ndarray:
    return model.predict_f(features, batch.X, batch.T, batch.index)
