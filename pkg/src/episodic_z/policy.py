"""Behaviour policies with an exploration floor and exact conditional feature moments."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .model_plm import EpisodeBatch, FeatureMap

POLICY_KINDS = ("fixed", "eps-greedy", "softmax")
DEFAULT_EXPLORE = 0.05


@dataclass
class PolicyFamily:
    """How behaviour snapshots are generated across episodes.

    ``explore`` is the floor constant c': the uniform-mixing weight of
    episode i is min(1, c' * i**-alpha). ``event_c`` is the constant c of
    the covariance floor c^2 i^-alpha I <= Cov used by the estimator's
    eigenvalue event; by default sqrt(c') / 2, which is valid for binary
    arms with unit-scale features.
    """

    kind: str = "fixed"
    alpha: float = 0.0
    explore: float = DEFAULT_EXPLORE
    base_probs: Optional[Sequence[float]] = None
    temperature: float = 1.0
    event_c: Optional[float] = None

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must lie in [0, 1)")
        if not 0.0 < self.explore <= 1.0:
            raise ValueError("explore must lie in (0, 1]")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")

    @property
    def c(self) -> float:
        return float(np.sqrt(self.explore) / 2.0) if self.event_c is None else float(self.event_c)

    @property
    def adaptive(self) -> bool:
        return self.kind != "fixed"


@dataclass
class PolicySnapshot:
    """Behaviour law for a block of episodes that share frozen parameters.

    The greedy/softmax component uses ``stage_params`` (theta_hat_{1:l}),
    fitted only on episodes 1..fit_boundary with fit_boundary < first_episode.
    """

    snapshot_id: int
    kind: str
    horizon: int
    n_arms: int
    first_episode: int
    fit_boundary: int = 0
    alpha: float = 0.0
    explore: float = DEFAULT_EXPLORE
    base_probs: Optional[np.ndarray] = None
    stage_params: Optional[np.ndarray] = None
    temperature: float = 1.0

    def __post_init__(self):
        if self.fit_boundary >= self.first_episode:
            raise ValueError("snapshot parameters must be fitted on earlier episodes only")
        if self.base_probs is not None:
            p = np.asarray(self.base_probs, float)
            if p.shape != (self.n_arms,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
                raise ValueError("base_probs must be a probability vector over the arms")
            self.base_probs = p
        if self.stage_params is not None:
            self.stage_params = np.asarray(self.stage_params, float)

    def mixing_weight(self, episode) -> np.ndarray:
        i = np.asarray(episode, dtype=float)
        return np.minimum(1.0, self.explore * i ** (-self.alpha))

    def probabilities(self, features: FeatureMap, j: int, X: np.ndarray,
                      T: np.ndarray, episode) -> np.ndarray:
        """P(T_j = tau | X_{1:j}, T_{1:j-1}) for each row; shape (m, K).

        ``T`` may hold later stages too; only columns < j are read.
        """
        m, K = X.shape[0], self.n_arms
        if self.kind == "fixed":
            p = self.base_probs if self.base_probs is not None else np.full(K, 1.0 / K)
            return np.broadcast_to(p, (m, K)).copy()
        uniform = np.full((m, K), 1.0 / K)
        if self.stage_params is None:
            core = uniform
        else:
            scores = features.candidates(j, X) @ self.stage_params[j - 1]
            if self.kind == "eps-greedy":
                core = np.zeros((m, K))
                core[np.arange(m), np.argmax(scores, axis=1)] = 1.0
            else:
                z = scores / self.temperature
                z -= z.max(axis=1, keepdims=True)
                core = np.exp(z)
                core /= core.sum(axis=1, keepdims=True)
        w = np.broadcast_to(self.mixing_weight(episode), (m,))[:, None]
        return (1.0 - w) * core + w * uniform

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("base_probs", "stage_params"):
            if d[k] is not None:
                d[k] = np.asarray(d[k]).tolist()
        return d

    @staticmethod
    def from_dict(d: dict) -> "PolicySnapshot":
        return PolicySnapshot(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def checkpoint_blocks(n: int) -> list[tuple[int, int]]:
    """Episode blocks [2^k, 2^{k+1}) clipped to n (1-based, inclusive)."""
    blocks, start = [], 1
    while start <= n:
        stop = min(2 * start - 1, n)
        blocks.append((start, stop))
        start *= 2
    return blocks


def make_snapshot(family: PolicyFamily, features: FeatureMap, snapshot_id: int,
                  first_episode: int, stage_params: Optional[np.ndarray] = None) -> PolicySnapshot:
    K = features.n_arms
    base = None
    if family.kind == "fixed":
        base = np.full(K, 1.0 / K) if family.base_probs is None else np.asarray(family.base_probs, float)
    return PolicySnapshot(
        snapshot_id=snapshot_id, kind=family.kind, horizon=features.horizon, n_arms=K,
        first_episode=first_episode, fit_boundary=first_episode - 1 if stage_params is not None else 0,
        alpha=family.alpha, explore=family.explore, base_probs=base,
        stage_params=stage_params, temperature=family.temperature,
    )


def adaptive_policy_family(kind: str, alpha: float, seed: int = 0, **kwargs) -> PolicyFamily:
    """Build a policy family; snapshots are produced during collection because
    each one depends on the episodes before it. ``seed`` is accepted for a
    uniform call signature: the families are deterministic given the data."""
    del seed
    return PolicyFamily(kind=kind, alpha=alpha, **kwargs)


@dataclass
class ConditionalMoments:
    """q_{i,j} = E_{i,j-1}[phi_{i,j}] and Cov_{i,j-1}(phi_{i,j}) with leading batch dims."""

    q: np.ndarray
    cov: np.ndarray
    min_eig: np.ndarray = field(init=False)

    def __post_init__(self):
        self.cov = 0.5 * (self.cov + np.swapaxes(self.cov, -1, -2))
        self.min_eig = np.linalg.eigvalsh(self.cov)[..., 0]


def conditional_moments(snapshot: PolicySnapshot, features: FeatureMap, j: int,
                        X: np.ndarray, T: np.ndarray, episode) -> ConditionalMoments:
    """Exact q and Cov at stage j by enumerating the finite treatment set."""
    X = np.asarray(X, float)
    if X.ndim == 2:
        X = X[None]
        T = np.atleast_2d(T)
    p = snapshot.probabilities(features, j, X, T, episode)
    cand = features.candidates(j, X)
    q = np.einsum("mk,mkd->md", p, cand)
    dev = cand - q[:, None, :]
    cov = np.einsum("mk,mkd,mke->mde", p, dev, dev)
    return ConditionalMoments(q, cov)


def episode_moments(batch: EpisodeBatch, snapshots: dict, features: FeatureMap):
    """q (n, l, d) and Cov (n, l, d, d) for every recorded episode and stage,
    using the snapshot each episode was collected under."""
    n, l, d = len(batch), batch.horizon, batch.dim
    q = np.empty((n, l, d))
    cov = np.empty((n, l, d, d))
    for sid in np.unique(batch.snapshot_id):
        rows = np.flatnonzero(batch.snapshot_id == sid)
        snap = snapshots[int(sid)]
        for j in range(1, l + 1):
            cm = conditional_moments(snap, features, j, batch.X[rows], batch.T[rows], batch.index[rows])
            q[rows, j - 1] = cm.q
            cov[rows, j - 1] = cm.cov
    return q, cov


def verify_exploration_floor(snapshots: Sequence[PolicySnapshot], features: FeatureMap,
                             probes: EpisodeBatch, alpha: float, c: float) -> dict:
    """Min over probe histories of lambda_min(Cov_{i,j-1}) * i^alpha, per stage.

    Each snapshot is probed at its first episode index, where the floor is
    tightest within its block.
    """
    l = features.horizon
    per_stage = np.full(l, np.inf)
    trace = []
    for snap in snapshots:
        i = snap.first_episode
        row = []
        for j in range(1, l + 1):
            cm = conditional_moments(snap, features, j, probes.X, probes.T, np.full(len(probes), i))
            v = float(cm.min_eig.min() * i ** alpha)
            per_stage[j - 1] = min(per_stage[j - 1], v)
            row.append(v)
        trace.append({"episode": i, "scaled_min_eig": row})
    return {
        "alpha": alpha,
        "floor": c ** 2,
        "min_scaled_eig": per_stage.tolist(),
        "violation": bool(np.any(per_stage < c ** 2)),
        "trace": trace,
    }
