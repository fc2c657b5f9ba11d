"""Re-weighted Z-estimation with block-diagonal adaptive weights.

Solves (1/n) sum_i H_i m(Z_i; theta) = 0 in closed form (m is affine),

    theta_hat = (-sum H_i J_i)^{-1} sum H_i a_i,

and reports the normalization B_n = -n^{alpha/2 - 1} sum H_i J_i, whose sign
makes n^{(1-alpha)/2} B_n (theta_hat - theta) = n^{-1/2} sum_i xi_i with
xi_i = H_i m(Z_i; theta). If the eigenvalue event fails the estimate is the
zero vector and the flag is false.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import linalg

from .model_plm import EpisodeBatch, FeatureMap
from .moments import ParameterVector, jacobians, moments, offsets
from .nuisance import NuisanceConfig, NuisanceModel, features_of, fit_nuisance
from .policy import checkpoint_blocks, episode_moments
from .weights import (NearSingularError, WeightConfig, WeightMatrices, build_weights,
                      clip_f, consistent_weights)

SCHEDULES = ("prequential", "split")
WARMUPS = ("cap", "floor")


class UndefinedEventError(RuntimeError):
    """The eigenvalue event failed, so the standardized error is undefined."""


@dataclass
class ZEstimate:
    theta: np.ndarray
    horizon: int
    dim: int
    B: np.ndarray
    flag: bool
    lam_min: float
    threshold: float
    scheme: str
    n: int
    alpha: float
    c: float
    score: Optional[np.ndarray] = None
    solve_residual: float = float("nan")
    diagnostics: dict = field(default_factory=dict)

    @property
    def params(self) -> ParameterVector:
        return ParameterVector.from_flat(self.theta, self.horizon, self.dim)

    @property
    def rate(self) -> float:
        """n^{(alpha-1)/2}, the scale of theta_hat - theta."""
        return float(self.n ** ((self.alpha - 1.0) / 2.0))

    def to_dict(self) -> dict:
        arr = lambda a: None if a is None else np.asarray(a).tolist()
        return {
            "theta": arr(self.theta), "horizon": self.horizon, "dim": self.dim,
            "B": arr(self.B), "flag": self.flag, "lam_min": self.lam_min,
            "threshold": self.threshold, "scheme": self.scheme, "n": self.n,
            "alpha": self.alpha, "c": self.c, "score": arr(self.score),
            "solve_residual": self.solve_residual, "diagnostics": self.diagnostics,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ZEstimate":
        d = dict(d)
        d["theta"] = np.asarray(d["theta"], float)
        d["B"] = np.asarray(d["B"], float)
        if d.get("score") is not None:
            d["score"] = np.asarray(d["score"], float)
        return cls(**d)


def event_threshold(scheme: str, c: float, M: float) -> float:
    if scheme == "consistent":
        return c / 2.0
    if scheme in ("oracle", "feasible"):
        return c / (2.0 * M)
    return c * c / 2.0


def weighted_system(y, phi, q, psi, weights: WeightMatrices):
    """(-sum H_i J_i, sum H_i a_i), both unnormalized."""
    A = -weights.apply(jacobians(phi, q, psi)).sum(axis=0)
    b = weights.apply(offsets(y, phi, q)).sum(axis=0)
    return A, b


def _pivoted_solve(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    Q, R, perm = linalg.qr(A, pivoting=True)
    z = linalg.solve_triangular(R, Q.T @ b)
    out = np.empty_like(z)
    out[perm] = z
    return out


def solve_weighted(y, phi, q, psi, weights: WeightMatrices, alpha: float, c: float,
                   M: float = 1.0, theta_ref=None) -> ZEstimate:
    """Closed-form solve for given per-episode weights."""
    n, l, d = phi.shape
    p = 1 + l * d
    A, b = weighted_system(y, phi, q, psi, weights)
    B = n ** (alpha / 2.0 - 1.0) * A
    # uniform weights do not rescale Cov, so their diagonal blocks shrink like
    # n^{-alpha/2}; the event is checked on n^{alpha/2} B against c^2 / 2
    probe = n ** (alpha / 2.0) * B if weights.scheme == "uniform" else B
    lam = float(np.min(np.abs(np.linalg.eigvals(probe)))) if np.all(np.isfinite(probe)) else 0.0
    thr = event_threshold(weights.scheme, c, M)
    est = ZEstimate(np.zeros(p), l, d, B, False, lam, thr, weights.scheme, n, alpha, c)
    if lam >= thr:
        theta = _pivoted_solve(A / n, b / n)
        est.theta, est.flag = theta, True
        est.solve_residual = float(np.linalg.norm(weights.apply(moments(y, phi, q, theta, psi)).sum(axis=0)))
    if theta_ref is not None:
        tr = theta_ref.flat() if isinstance(theta_ref, ParameterVector) else np.asarray(theta_ref, float)
        est.score = weights.apply(moments(y, phi, q, tr, psi)).sum(axis=0) / np.sqrt(n)
    return est


def _fallback(n, l, d, scheme, alpha, c, M, reason, err) -> ZEstimate:
    p = 1 + l * d
    est = ZEstimate(np.zeros(p), l, d, np.zeros((p, p)), False, float(getattr(err, "lam_min", 0.0)),
                    event_threshold(scheme, c, M), scheme, n, alpha, c)
    est.diagnostics["fallback"] = reason
    return est


def _as_weight_config(weights) -> WeightConfig:
    return WeightConfig(scheme=weights) if isinstance(weights, str) else weights


def nuisance_schedule(batch: EpisodeBatch, phi, q, cov, psi, features: FeatureMap, alpha: float,
                      c: float, config: NuisanceConfig, reference_arms=None,
                      prior_variance: float = 0.0, theta_true=None) -> list:
    """Prequential nuisance models: one per checkpoint block [2^k, 2^{k+1}),
    each fitted on the episodes before the block starts.

    Returns (row slice, model) pairs covering the batch.
    """
    l, d = batch.horizon, batch.dim
    out = []
    for start, stop in checkpoint_blocks(int(batch.index[-1])):
        lo = int(np.searchsorted(batch.index, start))
        hi = int(np.searchsorted(batch.index, stop, side="right"))
        if hi <= lo:
            continue
        if lo < max(config.min_fit, 1 + l * d):
            model = NuisanceModel.untrained(l, d, prior_variance)
        else:
            try:
                H = consistent_weights(cov[:lo])
            except NearSingularError:
                out.append((slice(lo, hi), NuisanceModel.untrained(l, d, prior_variance)))
                continue
            theta_bar = solve_weighted(batch.y[:lo], phi[:lo], q[:lo], psi[:lo], H, alpha, c)
            model = fit_nuisance(batch[:lo], theta_bar.theta, features, psi[:lo], reference_arms,
                                 config, theta_true=theta_true)
        out.append((slice(lo, hi), model))
    return out


def solve(batch: EpisodeBatch, snapshots: dict, features: FeatureMap,
          weights: Union[str, WeightConfig] = "consistent", alpha: float = 0.0,
          c: Optional[float] = None, *, psi: Optional[np.ndarray] = None,
          reference_arms=None, oracle_f: Optional[np.ndarray] = None,
          nuisance: NuisanceConfig = NuisanceConfig(), schedule: str = "prequential",
          warmup: str = "cap", moments_cache=None, theta_ref=None,
          theta_true_for_logs=None) -> ZEstimate:
    """Re-weighted Z-estimate from logged episodes and their policy snapshots.

    ``psi`` are blip regressors (defaults to the recorded features; pass
    contrasts for off-policy evaluation). ``oracle_f`` (n, l+1) is required
    by the oracle scheme. Feasible weights use prequential nuisance fits on
    the checkpoint grid or, with ``schedule="split"``, a nuisance fitted on
    the first half and an estimate on the second half. Episodes that precede
    the first nuisance fit use f_hat = M^2 (``warmup="cap"``) or the floor
    sigma^2 (``warmup="floor"``).
    """
    wc = _as_weight_config(weights)
    if schedule not in SCHEDULES:
        raise ValueError(f"unknown schedule {schedule!r}")
    if warmup not in WARMUPS:
        raise ValueError(f"unknown warmup {warmup!r}")
    if c is None:
        first = snapshots[min(snapshots)]
        c = float(np.sqrt(first.explore) / 2.0)
    n, l, d = len(batch), batch.horizon, batch.dim
    if n < 1 + l * d:
        raise ValueError(f"need at least {1 + l * d} episodes, got {n}")
    phi = features_of(batch, features)
    psi = phi if psi is None else psi
    q, cov = episode_moments(batch, snapshots, features) if moments_cache is None else moments_cache
    try:
        if wc.scheme == "feasible":
            if schedule == "split":
                half = n // 2
                theta_bar = solve_weighted(batch.y[:half], phi[:half], q[:half], psi[:half],
                                           consistent_weights(cov[:half]), alpha, c)
                model = fit_nuisance(batch[:half], theta_bar.theta, features, psi[:half],
                                     reference_arms, nuisance, theta_true=theta_true_for_logs)
                rest = slice(half, n)
                f = model.predict_f(features, batch.X[rest], batch.T[rest], batch.index[rest])
                H = build_weights(wc, cov[rest], f)
                est = solve_weighted(batch.y[rest], phi[rest], q[rest], psi[rest], H, alpha, c, wc.M, theta_ref)
                est.diagnostics["nuisance_boundaries"] = [model.fit_boundary]
                return est
            prior = wc.M2 if warmup == "cap" else 0.0
            plan = nuisance_schedule(batch, phi, q, cov, psi, features, alpha, c, nuisance,
                                     reference_arms, prior, theta_true_for_logs)
            f = np.empty((n, l + 1))
            for rows, model in plan:
                f[rows] = model.predict_f(features, batch.X[rows], batch.T[rows], batch.index[rows])
            H = build_weights(wc, cov, f)
            est = solve_weighted(batch.y, phi, q, psi, H, alpha, c, wc.M, theta_ref)
            est.diagnostics["nuisance_boundaries"] = [m.fit_boundary for _, m in plan]
            est.diagnostics["f_hat_clipped_share"] = float(np.mean((clip_f(f, wc) != f)))
            return est
        H = build_weights(wc, cov, oracle_f)
    except NearSingularError as err:
        return _fallback(n, l, d, wc.scheme, alpha, c, wc.M, "near-singular covariance", err)
    return solve_weighted(batch.y, phi, q, psi, H, alpha, c, wc.M, theta_ref)


def standardized_error(estimate: ZEstimate, theta_true) -> np.ndarray:
    """n^{(1-alpha)/2} B_n (theta_hat - theta_true)."""
    if not estimate.flag:
        raise UndefinedEventError("eigenvalue event failed; the estimate is the zero fallback")
    tv = theta_true.flat() if hasattr(theta_true, "flat") and callable(theta_true.flat) else np.asarray(theta_true, float)
    return estimate.n ** ((1.0 - estimate.alpha) / 2.0) * estimate.B @ (estimate.theta - tv)
