"""Confidence intervals, simultaneous bands and Monte Carlo coverage studies.

With S = n^{-1/2} sum xi_i approximately N(0, I) and
n^{(1-alpha)/2} B_n (theta_hat - theta) = S, the estimation error is
approximately N(0, n^{alpha-1} B_n^{-1} B_n^{-T}).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from .collection import collect_episodes
from .estimator import ZEstimate, solve, standardized_error
from .model_plm import PlmConfig, baseline_residual_variance, derive_true_parameters, oracle_f
from .nuisance import NuisanceConfig
from .policy import PolicyFamily, episode_moments
from .weights import WeightConfig, default_weight_config

MIN_BAND_DRAWS = 100_000


class CovarianceError(np.linalg.LinAlgError):
    """B_n^{-1} B_n^{-T} is not numerically positive semidefinite."""


@dataclass
class ConfidenceRegion:
    kind: str
    level: float
    center: np.ndarray
    half_width: np.ndarray
    quantile: float
    degenerate: bool
    direction: Optional[np.ndarray] = None
    mc_draws: int = 0
    seed: Optional[int] = None

    @property
    def lower(self) -> np.ndarray:
        return self.center - self.half_width

    @property
    def upper(self) -> np.ndarray:
        return self.center + self.half_width

    def contains(self, theta) -> bool:
        """Coverage decision for the full vector (band) or its projection
        (interval). A degenerate region covers only its own center."""
        theta = np.asarray(theta, float)
        value = float(self.direction @ theta) if self.kind == "interval" else theta
        if self.degenerate:
            return bool(np.all(value == self.center))
        return bool(np.all(np.abs(value - self.center) <= self.half_width))

    def to_dict(self) -> dict:
        arr = lambda a: None if a is None else np.asarray(a).tolist()
        return {"kind": self.kind, "level": self.level, "center": arr(self.center),
                "half_width": arr(self.half_width), "quantile": self.quantile,
                "degenerate": self.degenerate, "direction": arr(self.direction),
                "mc_draws": self.mc_draws, "seed": self.seed}


def _check_level(a: float):
    if not 0.0 < a < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {a}")


def error_covariance(estimate: ZEstimate) -> np.ndarray:
    """B_n^{-1} B_n^{-T}."""
    Binv = np.linalg.inv(estimate.B)
    return Binv @ Binv.T


def confidence_interval(estimate: ZEstimate, ell, a: float = 0.05) -> ConfidenceRegion:
    """l^T theta_hat +- n^{(alpha-1)/2} q, q the a/2 upper quantile of
    N(0, l^T B^{-1} B^{-T} l); zero width when the event failed.

    The width treats n^{-1/2} sum xi_i as standard normal, which holds for
    the variance-stabilizing oracle and feasible schemes only.
    """
    _check_level(a)
    ell = np.asarray(ell, float)
    if not np.all(np.isfinite(ell)):
        raise ValueError("direction must be finite")
    center = float(ell @ estimate.theta)
    if not estimate.flag:
        return ConfidenceRegion("interval", a, np.float64(center), np.float64(0.0), 0.0, True, ell)
    sd = float(np.sqrt(ell @ error_covariance(estimate) @ ell))
    q = float(stats.norm.ppf(1.0 - a / 2.0)) * sd
    return ConfidenceRegion("interval", a, np.float64(center), np.float64(estimate.rate * q), q, False, ell)


def band_quantile(corr: np.ndarray, a: float, mc_draws: int, seed: int) -> float:
    """(1-a) quantile of ||N(0, corr)||_inf by seeded Monte Carlo."""
    lam, U = np.linalg.eigh(corr)
    root = U * np.sqrt(np.clip(lam, 0.0, None))
    z = np.random.default_rng(seed).standard_normal((mc_draws, corr.shape[0])) @ root.T
    return float(np.quantile(np.max(np.abs(z), axis=1), 1.0 - a))


def confidence_band(estimate: ZEstimate, a: float = 0.05, mc_draws: int = MIN_BAND_DRAWS,
                    seed: int = 0) -> ConfidenceRegion:
    """theta_hat +- n^{(alpha-1)/2} q_inf sqrt(d_hat) with d_hat the diagonal of
    B^{-1} B^{-T} and q_inf the max-norm quantile of the implied correlation."""
    _check_level(a)
    if mc_draws < MIN_BAND_DRAWS:
        raise ValueError(f"mc_draws must be at least {MIN_BAND_DRAWS}")
    p = estimate.theta.shape[0]
    if not estimate.flag:
        return ConfidenceRegion("band", a, estimate.theta.copy(), np.zeros(p), 0.0, True,
                                mc_draws=mc_draws, seed=seed)
    cov = error_covariance(estimate)
    dhat = np.diag(cov).copy()
    lam = np.linalg.eigvalsh(0.5 * (cov + cov.T))
    if lam[0] < -1e-10 * max(lam[-1], 1.0) or np.any(dhat <= 0):
        raise CovarianceError(f"error covariance not PSD: eigenvalues [{lam[0]:.3e}, {lam[-1]:.3e}], "
                              f"condition of B {np.linalg.cond(estimate.B):.3e}")
    s = 1.0 / np.sqrt(dhat)
    corr = s[:, None] * cov * s[None, :]
    q = band_quantile(0.5 * (corr + corr.T), a, mc_draws, seed)
    return ConfidenceRegion("band", a, estimate.theta.copy(), estimate.rate * q * np.sqrt(dhat), q, False,
                            mc_draws=mc_draws, seed=seed)


def replication_seed(master: int, rep: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master), int(rep)])


def evaluate_replication(estimate: ZEstimate, theta_true: np.ndarray, a: float,
                         band_draws: int, band_seed: int) -> dict:
    """Standardized error and coverage indicators for one estimate."""
    p = theta_true.shape[0]
    if estimate.flag:
        z = standardized_error(estimate, theta_true)
    else:
        z = np.full(p, np.nan)
    ci = [confidence_interval(estimate, np.eye(p)[k], a).contains(theta_true) for k in range(p)]
    band = confidence_band(estimate, a, band_draws, band_seed).contains(theta_true)
    return {"z": z, "ci": np.array(ci), "band": bool(band)}


@dataclass
class CoverageReport:
    replications: pd.DataFrame
    summary: pd.DataFrame
    band: pd.DataFrame
    truth: np.ndarray = field(default=None)

    def coverage(self, scheme: str) -> np.ndarray:
        s = self.summary[self.summary.scheme == scheme].sort_values("coordinate")
        return s.coverage.to_numpy()

    def ks(self, scheme: str) -> np.ndarray:
        s = self.summary[self.summary.scheme == scheme].sort_values("coordinate")
        return s.ks.to_numpy()

    def band_coverage(self, scheme: str) -> float:
        return float(self.band[self.band.scheme == scheme].coverage.iloc[0])


def summarize(rows: pd.DataFrame, p: int) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Per-coordinate coverage with binomial standard errors and KS statistics
    of the standardized errors against N(0, 1)."""
    out, bands = [], []
    for (scheme, alpha, n), grp in rows.groupby(["scheme", "alpha", "n"], sort=True):
        reps = len(grp)
        for k in range(p):
            cov = grp[f"ci_{k}"].mean()
            z = grp[f"z_{k}"].dropna().to_numpy()
            ks = float(stats.kstest(z, "norm").statistic) if z.size else float("nan")
            out.append({"scheme": scheme, "alpha": alpha, "n": n, "coordinate": k,
                        "coverage": cov, "se": np.sqrt(cov * (1 - cov) / reps), "ks": ks,
                        "z_var": float(np.var(z, ddof=1)) if z.size > 1 else float("nan")})
        bc = grp["band"].mean()
        bands.append({"scheme": scheme, "alpha": alpha, "n": n, "coverage": bc,
                      "se": np.sqrt(bc * (1 - bc) / reps), "flag_rate": grp["flag"].mean()})
    return pd.DataFrame(out), pd.DataFrame(bands)


def coverage_experiment(config: PlmConfig, family: PolicyFamily, schemes, n: int, replications: int,
                        a: float = 0.05, seed: int = 0, *, truth: Optional[np.ndarray] = None,
                        weight_config: Optional[WeightConfig] = None,
                        nuisance: NuisanceConfig = NuisanceConfig(),
                        band_draws: int = MIN_BAND_DRAWS, schedule: str = "prequential",
                        truth_samples: int = 1_000_000) -> CoverageReport:
    """Empirical CI and band coverage over seeded replications.

    Every scheme in ``schemes`` is applied to the same simulated data within
    a replication, so scheme comparisons are paired.
    """
    schemes = [schemes] if isinstance(schemes, str) else list(schemes)
    if truth is None:
        truth = derive_true_parameters(config, truth_samples, seed=seed).flat()
    wbase = weight_config or default_weight_config("consistent", config.eps.variance,
                                                   config.y_low, config.y_high)
    var_r0 = baseline_residual_variance(config) if "oracle" in schemes else None
    p = truth.shape[0]
    records = []
    for rep in range(replications):
        rng = np.random.default_rng(replication_seed(seed, rep))
        batch, snaps = collect_episodes(config, family, n, rng)
        mom = episode_moments(batch, snaps, config.features)
        for scheme in schemes:
            t0 = time.perf_counter()
            wc = WeightConfig(scheme, wbase.sigma2, wbase.M2, wbase.tol)
            f = oracle_f(config, batch, var_r0=var_r0) if scheme == "oracle" else None
            est = solve(batch, snaps, config.features, wc, family.alpha, family.c, oracle_f=f,
                        nuisance=nuisance, schedule=schedule, moments_cache=mom)
            ev = evaluate_replication(est, truth, a, band_draws, rep)
            row = {"scheme": scheme, "alpha": family.alpha, "n": n, "replication": rep,
                   "flag": est.flag, "band": ev["band"], "runtime": time.perf_counter() - t0}
            for k in range(p):
                row[f"theta_{k}"] = est.theta[k]
                row[f"z_{k}"] = ev["z"][k]
                row[f"ci_{k}"] = bool(ev["ci"][k])
            records.append(row)
    rows = pd.DataFrame(records)
    summary, band = summarize(rows, p)
    return CoverageReport(rows, summary, band, truth)
