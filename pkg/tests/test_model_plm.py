import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from episodic_z.model_plm import (BaselineEffect, ConfigError, DomainError, EpisodeBatch, FeatureMap,
                                  Noise, PlmConfig, constant_chooser, counterfactual_value,
                                  derive_true_parameters, rollout, simulate_batch, simulate_episode)
from episodic_z.moments import residuals
from episodic_z.nuisance import features_of
from episodic_z.ope import ReferencePolicy
from episodic_z.policy import PolicySnapshot

from conftest import binary_product_model, two_dim_model


def fixed_snapshot(probs, horizon=2):
    probs = np.asarray(probs, float)
    return PolicySnapshot(0, "fixed", horizon, probs.shape[0], 1, base_probs=probs)


def test_zero_model_zero_policy_gives_zero_outcome():
    cfg = binary_product_model()
    rec = simulate_episode(cfg, fixed_snapshot([1.0, 0.0]), np.random.default_rng(0))
    assert rec.y == 0.0
    assert np.all(rec.T == 0)


def test_hand_unrolled_two_stage_example():
    cfg = binary_product_model(theta=1.7, omega=0.4, x1=(1.0, 1.0))
    rec = simulate_episode(cfg, fixed_snapshot([0.0, 1.0]), np.random.default_rng(3))
    assert rec.X[1, 0] == pytest.approx(1.0)
    assert rec.y == pytest.approx(1.7 + 0.4)


def test_same_seed_same_record(simple_model):
    snap = fixed_snapshot([0.5, 0.5])
    a = simulate_episode(simple_model, snap, np.random.default_rng(11), index=4)
    b = simulate_episode(simple_model, snap, np.random.default_rng(11), index=4)
    assert a.y == b.y and np.array_equal(a.X, b.X) and np.array_equal(a.T, b.T)


def test_horizon_mismatch_rejected(simple_model):
    from episodic_z.model_plm import ConfigError as CE
    with pytest.raises(CE):
        simulate_batch(simple_model, fixed_snapshot([0.5, 0.5], horizon=3), np.arange(1, 3),
                       np.random.default_rng(0))


def test_derived_chain_three_stages():
    cfg = binary_product_model(horizon=3, theta=2.0, omega=3.0, gammas=[np.array([[0.5]])])
    tp = derive_true_parameters(cfg, 10_000)
    np.testing.assert_allclose(tp.stages[:, 0], [1.5, 3.0, 2.0])


def test_theta0_zero_without_baseline_effects():
    tp = derive_true_parameters(binary_product_model(), 10_000)
    assert tp.theta0 == 0.0 and tp.theta0_se == 0.0


def test_theta0_constant_kappa():
    cfg = binary_product_model(kappa=BaselineEffect("affine", 1, intercept=[0.7]))
    tp = derive_true_parameters(cfg, 10_000)
    assert tp.theta0 == pytest.approx(0.7, abs=1e-12)


def test_oracle_samples_floor():
    with pytest.raises(ValueError):
        derive_true_parameters(binary_product_model(), 100)


def test_counterfactual_zero_policy_matches_theta0(simple_model):
    tp = derive_true_parameters(simple_model, 200_000, seed=1)
    v, se = counterfactual_value(simple_model, ReferencePolicy.zero_policy(2), 200_000,
                                 np.random.default_rng(2))
    assert abs(v - tp.theta0) < 3 * np.hypot(se, tp.theta0_se)


def test_counterfactual_deterministic_zero_se():
    cfg = binary_product_model(x1=(1.0, 1.0), kappa=BaselineEffect("affine", 1, intercept=[0.3]))
    v, se = counterfactual_value(cfg, ReferencePolicy.always_treat(2), 10_000)
    assert se == 0.0
    assert v == pytest.approx(1.0 + 0.5 + 0.3)


def test_counterfactual_of_behaviour_snapshot(simple_model):
    snap = fixed_snapshot([0.3, 0.7])
    v, se = counterfactual_value(simple_model, snap, 100_000, np.random.default_rng(5))
    sample = simulate_batch(simple_model, snap, np.arange(1, 100_001), np.random.default_rng(6)).y
    assert abs(v - sample.mean()) < 3 * np.hypot(se, sample.std(ddof=1) / np.sqrt(sample.size))


@pytest.mark.parametrize("kind", ["product", "interaction", "onehot"])
def test_zero_treatment_annihilation(kind):
    rng = np.random.default_rng(0)
    if kind == "onehot":
        fm = FeatureMap("onehot", 3, 2, np.array([[0, 0], [1, 0], [0, 1]], float))
    else:
        fm = FeatureMap(kind, 3, 2, rng.uniform(-2, 2, size=(4, 2)) * np.array([[0], [1], [1], [1]]))
    X = rng.uniform(-5, 5, size=(1000, 3, 2))
    for j in range(1, 4):
        assert np.all(fm.eval_batch(j, X, np.zeros(1000, int)) == 0.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=6, max_size=6), st.integers(1, 3))
def test_annihilation_property(xs, j):
    fm = FeatureMap("interaction", 3, 2, np.array([[0, 0], [2, -1]], float))
    X = np.asarray(xs).reshape(1, 3, 2)
    assert np.all(fm.eval(j, X, [1, 1, 0][:j - 1] + [0]) == 0.0)


def test_feature_map_validation():
    with pytest.raises(ConfigError):
        FeatureMap("product", 2, 1, np.array([[1.0], [2.0]]))
    with pytest.raises(ConfigError):
        FeatureMap("onehot", 2, 3, np.array([[0, 0], [1, 0]], float))
    with pytest.raises(ConfigError):
        FeatureMap("spline", 2, 1, np.array([[0.0], [1.0]]))


def test_phi_max_bounds_features():
    fm = FeatureMap("interaction", 2, 2, np.array([[0, 0], [1.5, -2]], float))
    lo, hi = np.array([-3.0, -1.0]), np.array([2.0, 4.0])
    X = np.random.default_rng(1).uniform(lo, hi, size=(2000, 2, 2))
    bound = fm.phi_max(lo, hi)
    for j in (1, 2):
        assert np.all(np.linalg.norm(fm.eval_batch(j, X, np.ones(2000, int)), axis=1) <= bound + 1e-12)


def _check_unrolled(cfg, n=200, seed=0):
    snap = fixed_snapshot(np.full(cfg.features.n_arms, 1.0 / cfg.features.n_arms), cfg.horizon)
    b = simulate_batch(cfg, snap, np.arange(1, n + 1), np.random.default_rng(seed), keep_noise=True)
    tp = derive_true_parameters(cfg, 10_000)
    th = np.concatenate([[tp.theta0], tp.stages.reshape(-1)])
    r = residuals(b.y, features_of(b, cfg.features), th)
    kap = cfg.kappa(b.X[:, 0])[:, 0]
    l = cfg.horizon
    for j in range(2, l + 1):
        rhs = b.X[:, j - 1] @ tp.stages[j - 2] + kap + b.eps
        for jp in range(j + 1, l + 1):
            rhs = rhs + b.eta[:, jp - 1] @ tp.stages[jp - 2]
        np.testing.assert_allclose(r[:, j - 1], rhs, atol=1e-10)


def test_unrolled_outcome_identity_three_stages():
    cfg = binary_product_model(horizon=3, gammas=[np.array([[0.6]])], eta=0.4, eps=0.8,
                               beta=BaselineEffect("cosine", 1, freq=[[2.0]]),
                               kappa=BaselineEffect("affine", 1, intercept=[1.0], linear=[[-0.5]]))
    _check_unrolled(cfg)


def test_unrolled_outcome_identity_two_dim():
    _check_unrolled(two_dim_model(horizon=3))


def test_domain_escape_raises():
    cfg = binary_product_model(beta=BaselineEffect("affine", 1, intercept=[100.0]))
    with pytest.raises(DomainError):
        simulate_episode(cfg, fixed_snapshot([0.5, 0.5]), np.random.default_rng(0))


def test_config_validation():
    fm = FeatureMap("product", 2, 1, np.array([[0.0], [1.0]]))
    with pytest.raises(ConfigError):
        PlmConfig(horizon=1, dim=1, theta=[1], omega=[1], features=fm)
    with pytest.raises(ConfigError):
        PlmConfig(horizon=3, dim=1, theta=[1], omega=[1], features=fm)
    with pytest.raises(ConfigError):
        PlmConfig(horizon=2, dim=1, theta=[1, 2], omega=[1], features=fm)
    with pytest.raises(ConfigError):
        Noise("gaussian", 1.0)


def test_noise_moments():
    rng = np.random.default_rng(0)
    for fam in ("uniform", "rademacher"):
        nz = Noise(fam, 0.7)
        x = nz.draw(rng, 200_000)
        assert np.max(np.abs(x)) <= nz.bound
        assert abs(x.mean()) < 4 * np.sqrt(nz.variance / x.size)
        assert x.var() == pytest.approx(nz.variance, rel=0.02)


@pytest.mark.parametrize("fam,kw", [
    ("affine", dict(intercept=[0.2], linear=[[0.5, -1.0]])),
    ("quadratic", dict(intercept=[0.2], linear=[[0.5, -1.0]], quad=[[1.0, 0.3]])),
    ("cosine", dict(amplitude=[0.8], freq=[[1.3, -0.4]], phase=[0.2])),
])
def test_baseline_analytic_mean(fam, kw):
    eff = BaselineEffect(fam, 1, **kw)
    lo, hi = np.array([0.5, -1.0]), np.array([2.0, 1.5])
    x = np.random.default_rng(4).uniform(lo, hi, size=(400_000, 2))
    vals = eff(x)[:, 0]
    assert abs(vals.mean() - eff.analytic_mean(lo, hi)[0]) < 4 * vals.std() / np.sqrt(vals.size)


def test_batch_containers_round_trip(simple_model):
    b = simulate_batch(simple_model, fixed_snapshot([0.5, 0.5]), np.arange(1, 21), np.random.default_rng(0))
    again = EpisodeBatch.from_records([b.record(k) for k in range(len(b))])
    assert np.array_equal(again.X, b.X) and np.array_equal(again.y, b.y)
    joined = EpisodeBatch.concat([b.prefix(7), b[7:]])
    assert np.array_equal(joined.T, b.T) and np.array_equal(joined.index, b.index)


def test_rollout_constant_chooser_matches_reference(simple_model):
    b1 = rollout(simple_model, constant_chooser(1), np.arange(1, 50), np.random.default_rng(2))
    assert np.all(b1.T == 1)
