import json

import numpy as np
import pytest
from scipy import linalg

from episodic_z.collection import collect_episodes
from episodic_z.estimator import (UndefinedEventError, ZEstimate, event_threshold, solve, solve_weighted,
                                  standardized_error)
from episodic_z.model_plm import derive_true_parameters, simulate_batch
from episodic_z.moments import jacobians, moments, offsets
from episodic_z.nuisance import features_of
from episodic_z.policy import PolicyFamily, PolicySnapshot, episode_moments
from episodic_z.weights import WeightConfig, WeightMatrices, consistent_weights, uniform_weights


def _fixed(cfg, n, seed, probs=(0.5, 0.5)):
    snap = PolicySnapshot(0, "fixed", cfg.horizon, 2, 1, base_probs=np.array(probs))
    batch = simulate_batch(cfg, snap, np.arange(1, n + 1), np.random.default_rng(seed))
    return batch, {0: snap}


def test_uniform_matches_generic_solver(simple_model):
    batch, snaps = _fixed(simple_model, 3000, 0)
    est = solve(batch, snaps, simple_model.features, "uniform", 0.0, 0.5)
    phi = features_of(batch, simple_model.features)
    q, _ = episode_moments(batch, snaps, simple_model.features)
    A = jacobians(phi, q).mean(axis=0)
    b = offsets(batch.y, phi, q).mean(axis=0)
    ref = linalg.lstsq(A, -b)[0]
    assert est.flag
    np.testing.assert_allclose(est.theta, ref, rtol=1e-10, atol=1e-12)
    assert np.abs(moments(batch.y, phi, q, est.theta).mean(axis=0)).max() < 1e-10


def test_deterministic_policy_falls_back(simple_model):
    batch, snaps = _fixed(simple_model, 500, 1, probs=(0.0, 1.0))
    for scheme in ("uniform", "consistent"):
        est = solve(batch, snaps, simple_model.features, scheme, 0.0, 0.5)
        assert not est.flag
        assert np.all(est.theta == 0.0)
        with pytest.raises(UndefinedEventError):
            standardized_error(est, np.ones(3))


def test_fallback_determinism(simple_model):
    batch, snaps = _fixed(simple_model, 400, 2)
    a = solve(batch, snaps, simple_model.features, "feasible", 0.0, 0.5)
    b = solve(batch, snaps, simple_model.features, "feasible", 0.0, 0.5)
    assert a.flag == b.flag
    np.testing.assert_array_equal(a.theta, b.theta)
    # a threshold above every eigenvalue modulus forces the fallback both times
    c = solve(batch, snaps, simple_model.features, "consistent", 0.0, 1e6)
    d = solve(batch, snaps, simple_model.features, "consistent", 0.0, 1e6)
    assert not c.flag and not d.flag
    assert c.lam_min == d.lam_min


@pytest.mark.parametrize("scheme", ["uniform", "consistent", "feasible"])
def test_score_identity_and_solve_residual(simple_model, scheme):
    fam = PolicyFamily("eps-greedy", 0.3, 1.0)
    batch, snaps = collect_episodes(simple_model, fam, 2000, np.random.default_rng(3))
    truth = derive_true_parameters(simple_model, 200_000).flat()
    wc = WeightConfig(scheme, 0.25, 1600.0)
    est = solve(batch, snaps, simple_model.features, wc, fam.alpha, fam.c, theta_ref=truth)
    assert est.flag
    np.testing.assert_allclose(standardized_error(est, truth), est.score, atol=1e-8)
    assert est.solve_residual < 1e-8 * est.n


def test_standardized_error_zero_at_truth(simple_model):
    batch, snaps = _fixed(simple_model, 300, 4)
    est = solve(batch, snaps, simple_model.features, "consistent", 0.0, 0.5)
    assert np.all(standardized_error(est, est.theta) == 0.0)


def test_sign_flip_of_weights_negates(simple_model):
    batch, snaps = _fixed(simple_model, 500, 5)
    phi = features_of(batch, simple_model.features)
    q, cov = episode_moments(batch, snaps, simple_model.features)
    H = consistent_weights(cov)
    neg = WeightMatrices(-H.h0, -H.blocks, H.scheme)
    truth = np.array([1.0, 0.4, 0.9])
    a = solve_weighted(batch.y, phi, q, phi, H, 0.0, 0.5)
    # the event looks at eigenvalue moduli, so it holds for both signs
    b = solve_weighted(batch.y, phi, q, phi, neg, 0.0, 0.5)
    np.testing.assert_allclose(b.theta, a.theta, rtol=1e-12)
    np.testing.assert_allclose(standardized_error(b, truth), -standardized_error(a, truth), rtol=1e-12)


def test_event_thresholds():
    assert event_threshold("consistent", 0.4, 10.0) == 0.2
    assert event_threshold("oracle", 0.4, 10.0) == pytest.approx(0.02)
    assert event_threshold("feasible", 0.4, 10.0) == pytest.approx(0.02)
    assert event_threshold("uniform", 0.4, 10.0) == pytest.approx(0.08)


def test_rate_and_params(simple_model):
    batch, snaps = _fixed(simple_model, 256, 6)
    est = solve(batch, snaps, simple_model.features, "consistent", 0.5, 0.5)
    assert est.rate == pytest.approx(256 ** -0.25)
    assert est.params.stages.shape == (2, 1)


def test_json_round_trip(simple_model):
    batch, snaps = _fixed(simple_model, 300, 7)
    est = solve(batch, snaps, simple_model.features, "feasible", 0.0, 0.5, theta_ref=np.ones(3))
    back = ZEstimate.from_dict(json.loads(est.to_json()))
    np.testing.assert_array_equal(back.theta, est.theta)
    np.testing.assert_array_equal(back.B, est.B)
    np.testing.assert_array_equal(back.score, est.score)
    assert back.flag == est.flag and back.scheme == est.scheme
    assert back.diagnostics == est.diagnostics


def test_too_few_episodes(simple_model):
    batch, snaps = _fixed(simple_model, 2, 8)
    with pytest.raises(ValueError):
        solve(batch, snaps, simple_model.features, "consistent", 0.0, 0.5)


def test_unknown_schedule_rejected(simple_model):
    batch, snaps = _fixed(simple_model, 50, 9)
    with pytest.raises(ValueError):
        solve(batch, snaps, simple_model.features, "feasible", schedule="bogus")


def test_split_schedule_uses_second_half(simple_model):
    batch, snaps = _fixed(simple_model, 1000, 10)
    est = solve(batch, snaps, simple_model.features, WeightConfig("feasible", 0.25, 1600.0), 0.0, 0.5,
                schedule="split")
    assert est.n == 500
    assert est.diagnostics["nuisance_boundaries"] == [500]
    assert est.flag


def test_uniform_weights_reproduce_plain_average(simple_model):
    batch, snaps = _fixed(simple_model, 200, 11)
    phi = features_of(batch, simple_model.features)
    q, _ = episode_moments(batch, snaps, simple_model.features)
    H = uniform_weights(len(batch), 2, 1)
    est = solve_weighted(batch.y, phi, q, phi, H, 0.0, 0.5)
    assert np.linalg.norm(moments(batch.y, phi, q, est.theta).sum(axis=0)) < 1e-8 * len(batch)
