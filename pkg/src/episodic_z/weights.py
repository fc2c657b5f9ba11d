"""Block-diagonal weights H_i = diag(h_0, h_1, ..., h_l) for the four schemes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

SCHEMES = ("uniform", "consistent", "oracle", "feasible")


class NearSingularError(np.linalg.LinAlgError):
    """Covariance too close to singular for an inverse square root."""

    def __init__(self, lam_min: float, tol: float):
        super().__init__(f"smallest eigenvalue {lam_min:.3e} <= tolerance {tol:.1e}; "
                         "the exploration floor is violated")
        self.lam_min = lam_min
        self.tol = tol


class StaleNuisanceError(RuntimeError):
    """A nuisance model was fitted on data that includes the episode it weights."""


@dataclass
class WeightConfig:
    scheme: str = "consistent"
    sigma2: float = 0.01
    M2: float = 1e4
    tol: float = 1e-10

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown weight scheme {self.scheme!r}")
        if not 0.0 < self.sigma2 <= self.M2 < np.inf:
            raise ValueError("need 0 < sigma2 <= M2 < inf")
        if self.tol <= 0:
            raise ValueError("tol must be positive")

    @property
    def M(self) -> float:
        return float(np.sqrt(self.M2))


def default_weight_config(scheme: str, eps_variance: float, y_low: float, y_high: float) -> WeightConfig:
    """sigma^2 = eps variance / 4 and M^2 = (y_max - y_min)^2."""
    return WeightConfig(scheme=scheme, sigma2=0.25 * eps_variance, M2=(y_high - y_low) ** 2)


def inv_sqrt(A: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Symmetric inverse square root via eigendecomposition.

    Works on a single matrix or a stack (..., d, d).
    """
    A = np.asarray(A, float)
    if np.max(np.abs(A - np.swapaxes(A, -1, -2)), initial=0.0) > 1e-10:
        raise ValueError("matrix is not symmetric")
    A = 0.5 * (A + np.swapaxes(A, -1, -2))
    lam, U = np.linalg.eigh(A)
    lmin = float(lam.min()) if lam.size else np.inf
    if lmin <= tol:
        raise NearSingularError(lmin, tol)
    return (U / np.sqrt(lam)[..., None, :]) @ np.swapaxes(U, -1, -2)


@dataclass
class WeightMatrices:
    """h0 (n,) and stage blocks (n, l, d, d)."""

    h0: np.ndarray
    blocks: np.ndarray
    scheme: str

    def __len__(self) -> int:
        return self.h0.shape[0]

    def dense(self) -> np.ndarray:
        n, l, d, _ = self.blocks.shape
        p = 1 + l * d
        H = np.zeros((n, p, p))
        H[:, 0, 0] = self.h0
        for j in range(l):
            s = slice(1 + j * d, 1 + (j + 1) * d)
            H[:, s, s] = self.blocks[:, j]
        return H

    def apply(self, v: np.ndarray) -> np.ndarray:
        """H_i v_i for v of shape (n, p) or (n, p, k)."""
        n, l, d, _ = self.blocks.shape
        out = np.empty_like(v)
        out[:, 0] = self.h0.reshape((n,) + (1,) * (v.ndim - 2)) * v[:, 0]
        stage = v[:, 1:].reshape((n, l, d) + v.shape[2:])
        if v.ndim == 2:
            out[:, 1:] = np.einsum("njde,nje->njd", self.blocks, stage).reshape(n, -1)
        else:
            out[:, 1:] = np.einsum("njde,njek->njdk", self.blocks, stage).reshape((n, l * d) + v.shape[2:])
        return out


def uniform_weights(n: int, horizon: int, dim: int) -> WeightMatrices:
    eye = np.broadcast_to(np.eye(dim), (n, horizon, dim, dim)).copy()
    return WeightMatrices(np.ones(n), eye, "uniform")


def consistent_weights(cov: np.ndarray, tol: float = 1e-10) -> WeightMatrices:
    """h_0 = 1, h_j = Cov_{i,j-1}(phi_{i,j})^{-1/2}."""
    return WeightMatrices(np.ones(cov.shape[0]), inv_sqrt(cov, tol), "consistent")


def _scaled(cov: np.ndarray, f: np.ndarray, scheme: str, tol: float) -> WeightMatrices:
    s = 1.0 / np.sqrt(f)
    return WeightMatrices(s[:, 0], s[:, 1:, None, None] * inv_sqrt(cov, tol), scheme)


def oracle_weights(cov: np.ndarray, f: np.ndarray, floor: float = 0.0,
                   tol: float = 1e-10) -> WeightMatrices:
    """h_j = f_{i,j}^{-1/2} Cov^{-1/2}; ``f`` has shape (n, l+1) with column 0
    the stage-0 second moment."""
    f = np.asarray(f, float)
    if np.any(f <= 0.0) or np.any(f < floor):
        raise ValueError("oracle second moments fall below the variance floor")
    return _scaled(cov, f, "oracle", tol)


def clip_f(f_raw: np.ndarray, config: WeightConfig) -> np.ndarray:
    return np.minimum(np.maximum(f_raw, config.sigma2), config.M2)


def feasible_weights(cov: np.ndarray, f_raw: np.ndarray, config: WeightConfig) -> WeightMatrices:
    """h_j = f_hat^{-1/2} Cov^{-1/2} with f_hat clipped to [sigma^2, M^2]."""
    return _scaled(cov, clip_f(np.asarray(f_raw, float), config), "feasible", config.tol)


def build_weights(config: WeightConfig, cov: np.ndarray, f: Optional[np.ndarray] = None) -> WeightMatrices:
    n, l, d, _ = cov.shape
    if config.scheme == "uniform":
        return uniform_weights(n, l, d)
    if config.scheme == "consistent":
        return consistent_weights(cov, config.tol)
    if f is None:
        raise ValueError(f"scheme {config.scheme!r} needs second moments f")
    if config.scheme == "oracle":
        return oracle_weights(cov, f, tol=config.tol)
    return feasible_weights(cov, f, config)
