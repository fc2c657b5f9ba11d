"""Partial linear Markovian simulator.

Episodes follow

    X_1 ~ P_X,  X_2 = phi_1 + beta(X_1) + eta_2,
    X_{j+1} = phi_j + Gamma_{j+1} X_j + eta_{j+1}   (j = 2..l-1),
    y = theta^T phi_l + omega^T X_l + kappa(X_1) + eps,

with a finite treatment set {0, ..., K-1} whose arm 0 is "no treatment".
Stages are 1-based in every public signature; arrays are 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


class DomainError(ValueError):
    """A simulated state left the declared bounded box."""


class ConfigError(ValueError):
    """Invalid model configuration."""


FEATURE_KINDS = ("product", "interaction", "onehot")


@dataclass(frozen=True)
class FeatureMap:
    """Known blip feature map phi_j(x_{1:j}, tau_{1:j}).

    ``product``      phi_j = a(tau_j) * x_j (elementwise)
    ``interaction``  phi_j = a(tau_j) * x_j * x_{j-1}, with x_0 = 1
    ``onehot``       phi_j = e_{tau_j} for tau_j >= 1 (dim = K - 1)

    ``arm_values`` is a (K, d) table of treatment values; row 0 must be
    zero so that every map annihilates the untreated arm.
    """

    kind: str
    horizon: int
    dim: int
    arm_values: np.ndarray

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise ConfigError(f"unknown feature map {self.kind!r}")
        av = np.atleast_2d(np.asarray(self.arm_values, dtype=float))
        object.__setattr__(self, "arm_values", av)
        if av.shape[1] != self.dim:
            raise ConfigError("arm_values must have one column per feature dim")
        if np.any(av[0] != 0.0):
            raise ConfigError("arm 0 must carry the zero treatment value")
        if self.kind == "onehot" and av.shape[0] - 1 != self.dim:
            raise ConfigError("onehot features need dim == n_arms - 1")

    @property
    def n_arms(self) -> int:
        return self.arm_values.shape[0]

    def eval_batch(self, j: int, X: np.ndarray, arms: np.ndarray) -> np.ndarray:
        """Features for stage ``j`` given contexts X[:, :j] and arms[:, j-1].

        X has shape (m, >=j, d); ``arms`` (m,) holds the stage-j arm only,
        earlier arms never enter the provided maps.
        """
        arms = np.asarray(arms, dtype=int)
        if self.kind == "onehot":
            out = np.zeros((arms.shape[0], self.dim))
            treated = arms > 0
            out[treated, arms[treated] - 1] = 1.0
            return out
        vals = self.arm_values[arms]
        feat = vals * X[:, j - 1]
        if self.kind == "interaction" and j > 1:
            feat = feat * X[:, j - 2]
        return feat

    def eval(self, j: int, x_hist, t_hist) -> np.ndarray:
        """Single-history evaluation; ``t_hist`` holds arms tau_1..tau_j."""
        x = np.asarray(x_hist, dtype=float).reshape(1, -1, self.dim)
        t = np.asarray(t_hist, dtype=int).reshape(-1)
        return self.eval_batch(j, x, t[j - 1:j])[0]

    def candidates(self, j: int, X: np.ndarray) -> np.ndarray:
        """Features for every arm at stage j: shape (m, K, d)."""
        m = X.shape[0]
        out = np.empty((m, self.n_arms, self.dim))
        for k in range(self.n_arms):
            out[:, k] = self.eval_batch(j, X, np.full(m, k))
        return out

    def phi_max(self, box_low: np.ndarray, box_high: np.ndarray) -> float:
        """Bound on ||phi_j|| over the context box."""
        if self.kind == "onehot":
            return 1.0
        xmax = np.maximum(np.abs(box_low), np.abs(box_high))
        bound = np.max(np.abs(self.arm_values), axis=0) * xmax
        if self.kind == "interaction":
            bound = bound * np.maximum(xmax, 1.0)
        return float(np.linalg.norm(bound))


BASELINE_FAMILIES = ("zero", "affine", "quadratic", "cosine")


@dataclass
class BaselineEffect:
    """Baseline effect of the first context, R^d -> R^out.

    affine     a + B x
    quadratic  clip(a + B x + C x**2, lo, hi)
    cosine     amp * cos(F x + phase)
    """

    family: str = "zero"
    out_dim: int = 1
    intercept: Optional[np.ndarray] = None
    linear: Optional[np.ndarray] = None
    quad: Optional[np.ndarray] = None
    amplitude: Optional[np.ndarray] = None
    freq: Optional[np.ndarray] = None
    phase: Optional[np.ndarray] = None
    clip: Optional[tuple] = None

    def __post_init__(self):
        if self.family not in BASELINE_FAMILIES:
            raise ConfigError(f"unknown baseline family {self.family!r}")
        k = self.out_dim

        def vec(v, default=0.0):
            return np.broadcast_to(np.asarray(default if v is None else v, float), (k,)).copy()

        self.intercept = vec(self.intercept)
        self.amplitude = vec(self.amplitude, 1.0)
        self.phase = vec(self.phase)
        for name in ("linear", "quad", "freq"):
            v = getattr(self, name)
            if v is not None:
                setattr(self, name, np.atleast_2d(np.asarray(v, float)).reshape(k, -1))
        if self.family == "cosine" and self.freq is None:
            raise ConfigError("cosine baseline needs a frequency matrix")

    def __call__(self, x1: np.ndarray) -> np.ndarray:
        """Evaluate on a batch (m, d); returns (m, out_dim)."""
        x1 = np.atleast_2d(x1)
        m = x1.shape[0]
        if self.family == "zero":
            return np.zeros((m, self.out_dim))
        if self.family == "cosine":
            return self.amplitude * np.cos(x1 @ self.freq.T + self.phase)
        out = np.broadcast_to(self.intercept, (m, self.out_dim)).copy()
        if self.linear is not None:
            out += x1 @ self.linear.T
        if self.family == "quadratic":
            if self.quad is not None:
                out += (x1 ** 2) @ self.quad.T
            if self.clip is not None:
                out = np.clip(out, self.clip[0], self.clip[1])
        return out

    def analytic_mean(self, low: np.ndarray, high: np.ndarray) -> Optional[np.ndarray]:
        """Mean under independent uniforms on [low, high]; None if unavailable."""
        low = np.asarray(low, float)
        high = np.asarray(high, float)
        mid = 0.5 * (low + high)
        if self.family == "zero":
            return np.zeros(self.out_dim)
        if self.family == "affine":
            out = self.intercept.copy()
            if self.linear is not None:
                out += self.linear @ mid
            return out
        if self.family == "quadratic":
            if self.clip is not None:
                return None
            out = self.intercept.copy()
            if self.linear is not None:
                out += self.linear @ mid
            if self.quad is not None:
                out += self.quad @ ((low ** 2 + low * high + high ** 2) / 3.0)
            return out
        # E exp(i f u), u ~ U[a, b], coordinate-wise independent
        out = np.empty(self.out_dim)
        for k in range(self.out_dim):
            z = np.exp(1j * self.phase[k])
            for f, a, b in zip(self.freq[k], low, high):
                if f != 0.0:
                    z *= (np.exp(1j * f * b) - np.exp(1j * f * a)) / (1j * f * (b - a))
            out[k] = self.amplitude[k] * z.real
        return out


NOISE_FAMILIES = ("zero", "uniform", "rademacher")


@dataclass(frozen=True)
class Noise:
    """Symmetric bounded noise: uniform on [-scale, scale] or scale * Rademacher."""

    family: str = "zero"
    scale: float = 0.0

    def __post_init__(self):
        if self.family not in NOISE_FAMILIES:
            raise ConfigError(f"unknown noise family {self.family!r}")
        if self.scale < 0:
            raise ConfigError("noise scale must be non-negative")

    @property
    def variance(self) -> float:
        if self.family == "uniform":
            return self.scale ** 2 / 3.0
        if self.family == "rademacher":
            return self.scale ** 2
        return 0.0

    @property
    def bound(self) -> float:
        return 0.0 if self.family == "zero" else self.scale

    def draw(self, rng: np.random.Generator, shape) -> np.ndarray:
        if self.family == "uniform":
            return rng.uniform(-self.scale, self.scale, size=shape)
        if self.family == "rademacher":
            return self.scale * (2.0 * rng.integers(0, 2, size=shape) - 1.0)
        return np.zeros(shape)


@dataclass
class PlmConfig:
    """Ground-truth configuration of the partial linear Markovian model.

    ``gammas`` holds Gamma_3..Gamma_l (l - 2 matrices). P_X is uniform on
    [x1_low, x1_high]; contexts must stay inside [box_low, box_high] and
    outcomes inside [y_low, y_high].
    """

    horizon: int
    dim: int
    theta: np.ndarray
    omega: np.ndarray
    features: FeatureMap
    gammas: list = field(default_factory=list)
    beta: BaselineEffect = None
    kappa: BaselineEffect = None
    x1_low: np.ndarray = None
    x1_high: np.ndarray = None
    eta: Noise = Noise()
    eps: Noise = Noise()
    box_low: np.ndarray = None
    box_high: np.ndarray = None
    y_low: float = -np.inf
    y_high: float = np.inf

    def __post_init__(self):
        l, d = self.horizon, self.dim
        if l < 2:
            raise ConfigError("the partial linear model needs horizon >= 2")
        self.theta = np.asarray(self.theta, float).reshape(-1)
        self.omega = np.asarray(self.omega, float).reshape(-1)
        if self.theta.shape != (d,) or self.omega.shape != (d,):
            raise ConfigError("theta and omega must have length dim")
        self.gammas = [np.asarray(g, float).reshape(d, d) for g in self.gammas]
        if len(self.gammas) != l - 2:
            raise ConfigError(f"expected {l - 2} transition matrices, got {len(self.gammas)}")
        if self.features.horizon != l or self.features.dim != d:
            raise ConfigError("feature map horizon/dim disagree with the model")
        if self.beta is None:
            self.beta = BaselineEffect("zero", out_dim=d)
        if self.kappa is None:
            self.kappa = BaselineEffect("zero", out_dim=1)
        if self.beta.out_dim != d or self.kappa.out_dim != 1:
            raise ConfigError("beta maps to R^d and kappa to R")
        full = lambda v, dflt: np.broadcast_to(np.asarray(dflt if v is None else v, float), (d,)).copy()
        self.x1_low = full(self.x1_low, 0.0)
        self.x1_high = full(self.x1_high, 1.0)
        self.box_low = full(self.box_low, -np.inf)
        self.box_high = full(self.box_high, np.inf)
        if np.any(self.x1_low > self.x1_high):
            raise ConfigError("initial-context support is empty")
        if np.any(self.x1_low < self.box_low) or np.any(self.x1_high > self.box_high):
            raise ConfigError("initial-context support leaves the domain box")
        if self.y_low >= self.y_high:
            raise ConfigError("outcome bounds are empty")

    @property
    def n_params(self) -> int:
        return 1 + self.dim * self.horizon

    def stage_coefficients(self) -> np.ndarray:
        """theta_{1:l} as an (l, d) array: theta_l = theta, theta_{l-1} = omega,
        theta_j = Gamma_{j+2}^T theta_{j+1}."""
        l = self.horizon
        out = np.empty((l, self.dim))
        out[l - 1] = self.theta
        out[l - 2] = self.omega
        for j in range(l - 2, 0, -1):
            out[j - 1] = self.gammas[j - 1].T @ out[j]
        return out

    def residual_variances(self, continuation: Optional[np.ndarray] = None) -> np.ndarray:
        """sigma_j^2 for j = 1..l under a continuation-coefficient chain.

        ``continuation[j-1]`` is the coefficient V_j on X_j of the outcome when
        stages j..l follow the reference; the baseline chain is theta_{j-1}.
        """
        V = self.stage_coefficients() if continuation is None else continuation
        l = self.horizon
        ev = self.eta.variance
        out = np.empty(l)
        for j in range(1, l + 1):
            # future eta_{j'} for j' = j+1..l enter through V_{j'}
            s = sum(float(V[jp - 1] @ V[jp - 1]) * ev for jp in range(max(j + 1, 2), l + 1))
            out[j - 1] = s + self.eps.variance
        return out


@dataclass
class EpisodeRecord:
    index: int
    X: np.ndarray
    T: np.ndarray
    y: float
    snapshot_id: int


@dataclass
class EpisodeBatch:
    """Column store for many episodes. ``eta[:, j]`` is the noise added to
    X_{j+1} (eta[:, 0] is unused and zero); noises are kept only when
    requested by the caller."""

    index: np.ndarray
    X: np.ndarray
    T: np.ndarray
    y: np.ndarray
    snapshot_id: np.ndarray
    eta: Optional[np.ndarray] = None
    eps: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return self.y.shape[0]

    @property
    def horizon(self) -> int:
        return self.X.shape[1]

    @property
    def dim(self) -> int:
        return self.X.shape[2]

    def __getitem__(self, sl) -> "EpisodeBatch":
        pick = lambda a: None if a is None else a[sl]
        return EpisodeBatch(self.index[sl], self.X[sl], self.T[sl], self.y[sl],
                            self.snapshot_id[sl], pick(self.eta), pick(self.eps))

    def record(self, k: int) -> EpisodeRecord:
        return EpisodeRecord(int(self.index[k]), self.X[k].copy(), self.T[k].copy(),
                             float(self.y[k]), int(self.snapshot_id[k]))

    def prefix(self, n: int) -> "EpisodeBatch":
        return self[:n]

    @staticmethod
    def concat(batches: Sequence["EpisodeBatch"]) -> "EpisodeBatch":
        cat = lambda name: (None if any(getattr(b, name) is None for b in batches)
                            else np.concatenate([getattr(b, name) for b in batches]))
        return EpisodeBatch(cat("index"), cat("X"), cat("T"), cat("y"),
                            cat("snapshot_id"), cat("eta"), cat("eps"))

    @staticmethod
    def from_records(records: Sequence[EpisodeRecord]) -> "EpisodeBatch":
        return EpisodeBatch(
            np.array([r.index for r in records], dtype=int),
            np.stack([np.asarray(r.X, float) for r in records]),
            np.stack([np.asarray(r.T, int) for r in records]),
            np.array([r.y for r in records], dtype=float),
            np.array([r.snapshot_id for r in records], dtype=int),
        )


# An arm chooser maps (stage j, X (m, >=j, d), T (m, l), episode index (m,), rng)
# to arms (m,). Behaviour policies and deterministic references both fit.
ArmChooser = Callable[[int, np.ndarray, np.ndarray, np.ndarray, np.random.Generator], np.ndarray]


def _check_box(config: PlmConfig, X: np.ndarray, j: int):
    bad = (X < config.box_low) | (X > config.box_high)
    if np.any(bad):
        row = int(np.argwhere(bad.any(axis=1))[0, 0])
        raise DomainError(f"context X_{j} = {X[row]} left the box "
                          f"[{config.box_low}, {config.box_high}]")


def rollout(config: PlmConfig, choose: ArmChooser, index: np.ndarray,
            rng: np.random.Generator, snapshot_id=0, keep_noise: bool = False,
            check: bool = True) -> EpisodeBatch:
    """Simulate one episode per entry of ``index`` under an arm chooser."""
    l, d = config.horizon, config.dim
    index = np.asarray(index, dtype=int)
    m = index.shape[0]
    feats = config.features
    X = np.zeros((m, l, d))
    T = np.zeros((m, l), dtype=int)
    eta = np.zeros((m, l, d))
    X[:, 0] = rng.uniform(config.x1_low, config.x1_high, size=(m, d))
    base = config.beta(X[:, 0])
    for j in range(1, l + 1):
        T[:, j - 1] = choose(j, X, T, index, rng)
        phi = feats.eval_batch(j, X, T[:, j - 1])
        if j == l:
            break
        eta[:, j] = config.eta.draw(rng, (m, d))
        trend = base if j == 1 else X[:, j - 1] @ config.gammas[j - 2].T
        X[:, j] = phi + trend + eta[:, j]
        if check:
            _check_box(config, X[:, j], j + 1)
    eps = config.eps.draw(rng, (m,))
    y = phi @ config.theta + X[:, l - 1] @ config.omega + config.kappa(X[:, 0])[:, 0] + eps
    if check and (np.any(y < config.y_low) or np.any(y > config.y_high)):
        raise DomainError(f"outcome left [{config.y_low}, {config.y_high}]")
    sid = np.broadcast_to(np.asarray(snapshot_id, dtype=int), (m,)).copy()
    return EpisodeBatch(index, X, T, y, sid,
                        eta if keep_noise else None, eps if keep_noise else None)


def simulate_batch(config: PlmConfig, policy, index, rng: np.random.Generator,
                   keep_noise: bool = False) -> EpisodeBatch:
    """Simulate episodes ``index`` under one behaviour snapshot."""
    if policy.horizon != config.horizon:
        raise ConfigError("policy horizon does not match the model horizon")

    def choose(j, X, T, idx, g):
        p = policy.probabilities(config.features, j, X, T, idx)
        return sample_arms(p, g)

    return rollout(config, choose, index, rng, policy.snapshot_id, keep_noise)


def simulate_episode(config: PlmConfig, policy, rng: np.random.Generator,
                     index: int = 1) -> EpisodeRecord:
    return simulate_batch(config, policy, np.array([index]), rng).record(0)


def sample_arms(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draw of one arm per row of ``probs``."""
    u = rng.random(probs.shape[0])
    cdf = np.cumsum(probs, axis=1)
    arms = (u[:, None] >= cdf).sum(axis=1)
    return np.minimum(arms, probs.shape[1] - 1)


@dataclass
class TrueParameters:
    theta0: float
    stages: np.ndarray
    theta0_se: float = 0.0

    def flat(self) -> np.ndarray:
        return np.concatenate([[self.theta0], self.stages.reshape(-1)])


def derive_true_parameters(config: PlmConfig, oracle_samples: int = 200_000,
                           seed: int = 0) -> TrueParameters:
    """theta_{1:l} from the exact chain; theta_0 = E[theta_1^T beta(X_1) + kappa(X_1)]
    by Monte Carlo over X_1."""
    if oracle_samples < 10_000:
        raise ValueError("oracle_samples must be at least 1e4")
    stages = config.stage_coefficients()
    rng = np.random.default_rng(seed)
    x1 = rng.uniform(config.x1_low, config.x1_high, size=(oracle_samples, config.dim))
    vals = config.beta(x1) @ stages[0] + config.kappa(x1)[:, 0]
    se = float(vals.std(ddof=1) / np.sqrt(oracle_samples))
    return TrueParameters(float(vals.mean()), stages, se)


def constant_chooser(arm: int) -> ArmChooser:
    return lambda j, X, T, idx, rng: np.full(X.shape[0], arm, dtype=int)


def counterfactual_value(config: PlmConfig, policy, oracle_samples: int = 200_000,
                         rng: Optional[np.random.Generator] = None):
    """Monte Carlo E[y(pi)] and its standard error.

    ``policy`` is either a behaviour snapshot (anything with
    ``probabilities``) or a deterministic reference (anything with
    ``choose``)."""
    rng = np.random.default_rng(0) if rng is None else rng
    index = np.arange(1, oracle_samples + 1)
    if hasattr(policy, "probabilities"):
        batch = simulate_batch(config, policy, index, rng)
    else:
        chooser = lambda j, X, T, idx, g: policy.choose(config.features, j, X, T)
        batch = rollout(config, chooser, index, rng)
    y = batch.y
    if np.ptp(y) == 0.0:
        return float(y[0]), 0.0
    return float(y.mean()), float(y.std(ddof=1) / np.sqrt(len(y)))


def continuation_coefficients(config: PlmConfig, reference_arms: Optional[Sequence[int]] = None) -> np.ndarray:
    """Coefficient V_j on X_j of the outcome when stages j..l follow constant
    reference arms; returns an (l, d) array whose row 0 is unused (NaN).

    Only the baseline (all-zero arms) chain holds for every feature map;
    non-zero arms require the ``product`` map, where a(tau) * x is linear in x.
    """
    l, d = config.horizon, config.dim
    arms = np.zeros(l, dtype=int) if reference_arms is None else np.asarray(reference_arms, int)
    if np.any(arms != 0) and config.features.kind != "product":
        raise NotImplementedError("non-zero references need the product feature map")
    A = config.features.arm_values
    V = np.full((l, d), np.nan)
    V[l - 1] = A[arms[l - 1]] * config.theta + config.omega
    for j in range(l - 1, 1, -1):
        # X_{j+1} = (diag(a_j) + Gamma_{j+1}) X_j + eta
        M = np.diag(A[arms[j - 1]]) + config.gammas[j - 2]
        V[j - 1] = M.T @ V[j]
    return V


def reference_stage_parameters(config: PlmConfig, reference_arms: Optional[Sequence[int]] = None) -> np.ndarray:
    """Blip coefficients theta^(pi)_{1:l} for a constant reference: theta_l and V_{j+1}."""
    V = continuation_coefficients(config, reference_arms)
    out = np.empty((config.horizon, config.dim))
    out[-1] = config.theta
    out[:-1] = V[1:]
    return out


def oracle_f(config: PlmConfig, batch: EpisodeBatch, reference_arms=None,
             var_r0: Optional[float] = None) -> np.ndarray:
    """True second moments f_{i,j} = g_j(history)^2 + sigma_j^2, shape (n, l+1).

    Column 0 is Var(r_0); supply ``var_r0`` (see ``baseline_residual_variance``)
    or it is computed here by Monte Carlo.
    """
    l, d = config.horizon, config.dim
    V = continuation_coefficients(config, reference_arms)
    sig = config.residual_variances(V)
    arms = np.zeros(l, dtype=int) if reference_arms is None else np.asarray(reference_arms, int)
    X = batch.X
    kap = config.kappa(X[:, 0])[:, 0]
    f = np.empty((len(batch), l + 1))
    f[:, 1] = g1(config, X[:, :1], V, arms[0]) ** 2 + sig[0]
    for j in range(2, l + 1):
        f[:, j] = (X[:, j - 1] @ V[j - 1] + kap) ** 2 + sig[j - 1]
    if var_r0 is None:
        var_r0 = baseline_residual_variance(config, reference_arms)
    f[:, 0] = var_r0
    return f


def g1(config: PlmConfig, X1: np.ndarray, V: np.ndarray, arm: int = 0) -> np.ndarray:
    """E[r_1 | X_1] under a continuation chain; X1 has shape (m, 1, d) or (m, d)."""
    X1 = X1.reshape(X1.shape[0], 1, config.dim)
    x = X1[:, 0]
    phi = config.features.eval_batch(1, X1, np.full(x.shape[0], arm))
    return (phi + config.beta(x)) @ V[1] + config.kappa(x)[:, 0]


def baseline_residual_variance(config: PlmConfig, reference_arms=None,
                               samples: int = 400_000, seed: int = 12345) -> float:
    """Var(y(pi)) = Var_X1(g_1) + sigma_1^2 (X_1 is i.i.d. across episodes)."""
    V = continuation_coefficients(config, reference_arms)
    arms = np.zeros(config.horizon, dtype=int) if reference_arms is None else np.asarray(reference_arms, int)
    rng = np.random.default_rng(seed)
    x1 = rng.uniform(config.x1_low, config.x1_high, size=(samples, config.dim))
    g = g1(config, x1, V, arms[0])
    return float(g.var() + config.residual_variances(V)[0])

