"""Adaptive data collection: behaviour snapshots refitted on the checkpoint grid.

Block [2^k, 2^{k+1}) runs under a snapshot whose greedy/softmax parameters
come from the consistent estimator on episodes 1..2^k - 1, so every
snapshot is built before any of its episodes is simulated.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .estimator import solve
from .model_plm import EpisodeBatch, PlmConfig, simulate_batch
from .policy import PolicyFamily, checkpoint_blocks, make_snapshot


def collect_episodes(config: PlmConfig, family: PolicyFamily, n: int,
                     rng: np.random.Generator, keep_noise: bool = False,
                     audit: Optional[list] = None):
    """Simulate n episodes; returns (batch, {snapshot_id: snapshot}).

    ``audit``, when given, receives (snapshot_id, first_episode,
    episodes_seen_at_construction) tuples for measurability checks.
    """
    features = config.features
    snapshots, parts = {}, []
    if not family.adaptive:
        snap = make_snapshot(family, features, 0, 1)
        snapshots[0] = snap
        if audit is not None:
            audit.append((0, 1, 0))
        return simulate_batch(config, snap, np.arange(1, n + 1), rng, keep_noise), snapshots
    seen = None
    for sid, (start, stop) in enumerate(checkpoint_blocks(n)):
        params = None
        if seen is not None and len(seen) >= 1 + config.horizon * config.dim:
            est = solve(seen, snapshots, features, "consistent", family.alpha, family.c)
            if est.flag:
                params = est.params.stages.copy()
        snap = make_snapshot(family, features, sid, start, params)
        snapshots[sid] = snap
        if audit is not None:
            audit.append((sid, start, 0 if seen is None else int(seen.index[-1])))
        part = simulate_batch(config, snap, np.arange(start, stop + 1), rng, keep_noise)
        parts.append(part)
        seen = EpisodeBatch.concat(parts)
    return seen, snapshots
