"""Moment function m(Z; theta), residuals and the block upper-triangular Jacobian.

Parameters are ordered (theta_0, theta_1, ..., theta_l) with theta_j in R^d.
With blip regressors psi (psi = phi in baseline mode, psi = gamma for
off-policy contrasts) the moment is affine in theta:

    m(Z; theta) = a(Z) + J(Z) theta,
    a = (y, y (phi_1 - q_1), ..., y (phi_l - q_l)),
    J = -diag(phi - q) [[1, psi_1^T, ..., psi_l^T], [0, 1 psi_1^T, ...], ...].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


class SingularJacobianError(np.linalg.LinAlgError):
    pass


@dataclass
class ParameterVector:
    theta0: float
    stages: np.ndarray

    def __post_init__(self):
        self.stages = np.atleast_2d(np.asarray(self.stages, float))
        self.theta0 = float(self.theta0)

    @property
    def horizon(self) -> int:
        return self.stages.shape[0]

    @property
    def dim(self) -> int:
        return self.stages.shape[1]

    def flat(self) -> np.ndarray:
        return np.concatenate([[self.theta0], self.stages.reshape(-1)])

    @classmethod
    def from_flat(cls, v, horizon: int, dim: int) -> "ParameterVector":
        v = np.asarray(v, float)
        if v.shape != (1 + horizon * dim,):
            raise ValueError(f"expected {1 + horizon * dim} entries, got {v.shape}")
        return cls(v[0], v[1:].reshape(horizon, dim))

    @classmethod
    def zeros(cls, horizon: int, dim: int) -> "ParameterVector":
        return cls(0.0, np.zeros((horizon, dim)))


def _as_flat(theta) -> np.ndarray:
    return theta.flat() if isinstance(theta, ParameterVector) else np.asarray(theta, float)


def _check(phi, q, psi):
    if phi.shape != q.shape or phi.shape != psi.shape:
        raise ValueError(f"dimension mismatch: phi {phi.shape}, q {q.shape}, psi {psi.shape}")


def centered(phi: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Stacked (phi_0 - q_0, ..., phi_l - q_l) = (1, phi_1 - q_1, ...): shape (n, 1+ld)."""
    n = phi.shape[0]
    return np.concatenate([np.ones((n, 1)), (phi - q).reshape(n, -1)], axis=1)


def offsets(y: np.ndarray, phi: np.ndarray, q: np.ndarray) -> np.ndarray:
    """theta-free part a_i = y_i (phi_i - q_i) of the moment: shape (n, 1+ld)."""
    return y[:, None] * centered(phi, q)


def jacobians(phi: np.ndarray, q: np.ndarray, psi: Optional[np.ndarray] = None) -> np.ndarray:
    """Per-episode Jacobians J_i, shape (n, p, p) with p = 1 + l d."""
    psi = phi if psi is None else psi
    _check(phi, q, psi)
    n, l, d = phi.shape
    p = 1 + l * d
    # rows of the triangular factor: row 0 is (1, psi_1..psi_l); stage-j rows
    # repeat (0.., psi_j..psi_l) d times before the diag(phi - q) scaling
    upper = np.zeros((n, p, p))
    upper[:, 0, 0] = 1.0
    upper[:, 0, 1:] = psi.reshape(n, -1)
    for j in range(l):
        rows = slice(1 + j * d, 1 + (j + 1) * d)
        upper[:, rows, 1 + j * d:] = psi[:, j:].reshape(n, 1, -1)
    return -centered(phi, q)[:, :, None] * upper


def residuals(y: np.ndarray, psi: np.ndarray, theta) -> np.ndarray:
    """r_{i,j} = y_i - sum_{j' >= j} theta_{j'}^T psi_{i,j'} for j = 1..l: shape (n, l)."""
    tv = _as_flat(theta)
    n, l, d = psi.shape
    eff = np.einsum("njd,jd->nj", psi, tv[1:].reshape(l, d))
    tail = np.cumsum(eff[:, ::-1], axis=1)[:, ::-1]
    return y[:, None] - tail


def moments(y: np.ndarray, phi: np.ndarray, q: np.ndarray, theta,
            psi: Optional[np.ndarray] = None) -> np.ndarray:
    """Per-episode moment vectors m(Z_i; theta): shape (n, p)."""
    psi = phi if psi is None else psi
    _check(phi, q, psi)
    tv = _as_flat(theta)
    n, l, d = phi.shape
    r = residuals(y, psi, tv)
    out = np.empty((n, 1 + l * d))
    out[:, 0] = r[:, 0] - tv[0]
    out[:, 1:] = (r[:, :, None] * (phi - q)).reshape(n, -1)
    return out


@dataclass
class MomentEvaluation:
    m: np.ndarray
    residuals: np.ndarray
    phi: np.ndarray
    q: np.ndarray
    jacobian: np.ndarray


def evaluate_moment(y: float, phi: np.ndarray, q: np.ndarray, theta,
                    contrast: Optional[np.ndarray] = None) -> MomentEvaluation:
    """Single-episode moment. ``phi``, ``q`` and ``contrast`` are (l, d);
    ``contrast`` switches to off-policy mode (psi = gamma)."""
    phi = np.atleast_2d(np.asarray(phi, float))[None]
    q = np.atleast_2d(np.asarray(q, float))[None]
    psi = phi if contrast is None else np.atleast_2d(np.asarray(contrast, float))[None]
    yv = np.array([float(y)])
    return MomentEvaluation(
        m=moments(yv, phi, q, theta, psi)[0],
        residuals=residuals(yv, psi, theta)[0],
        phi=np.concatenate([[1.0], phi.reshape(-1)]),
        q=np.concatenate([[0.0], q.reshape(-1)]),
        jacobian=jacobians(phi, q, psi)[0],
    )


def jacobian(phi: np.ndarray, q: np.ndarray, contrast: Optional[np.ndarray] = None) -> np.ndarray:
    phi = np.atleast_2d(np.asarray(phi, float))[None]
    q = np.atleast_2d(np.asarray(q, float))[None]
    psi = None if contrast is None else np.atleast_2d(np.asarray(contrast, float))[None]
    return jacobians(phi, q, psi)[0]


def closed_form_theta(y: np.ndarray, phi: np.ndarray, q: np.ndarray,
                      psi: Optional[np.ndarray] = None, cond_max: float = 1e10) -> ParameterVector:
    """theta = -(sum E[J_i])^{-1} sum E[y_i (phi_i - q_i)] with sample means
    standing in for the conditional expectations (fixed behaviour policy)."""
    J = jacobians(phi, q, psi).mean(axis=0)
    a = offsets(y, phi, q).mean(axis=0)
    if not np.all(np.isfinite(J)) or np.linalg.cond(J) > cond_max:
        raise SingularJacobianError("mean Jacobian is singular")
    n, l, d = phi.shape
    return ParameterVector.from_flat(-np.linalg.solve(J, a), l, d)


def bootstrap_se(y, phi, q, psi=None, draws: int = 200, seed: int = 0) -> np.ndarray:
    """Nonparametric bootstrap standard errors of ``closed_form_theta``."""
    rng = np.random.default_rng(seed)
    n = y.shape[0]
    reps = []
    for _ in range(draws):
        idx = rng.integers(0, n, size=n)
        reps.append(closed_form_theta(y[idx], phi[idx], q[idx], None if psi is None else psi[idx]).flat())
    return np.std(np.array(reps), axis=0, ddof=1)
