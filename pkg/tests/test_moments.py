import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from episodic_z.moments import (ParameterVector, SingularJacobianError, bootstrap_se, closed_form_theta,
                                evaluate_moment, jacobian, jacobians, moments, residuals)
from episodic_z.model_plm import derive_true_parameters, simulate_batch
from episodic_z.nuisance import features_of
from episodic_z.policy import PolicySnapshot, episode_moments

from conftest import binary_product_model


def _fixed_data(cfg, n, seed, probs=(0.5, 0.5)):
    snap = PolicySnapshot(0, "fixed", cfg.horizon, 2, 1, base_probs=np.array(probs))
    batch = simulate_batch(cfg, snap, np.arange(1, n + 1), np.random.default_rng(seed))
    q, _ = episode_moments(batch, {0: snap}, cfg.features)
    return batch, features_of(batch, cfg.features), q


def test_scalar_example():
    ev = evaluate_moment(2.0, [[1.0]], [[0.5]], [1.0, 1.0])
    np.testing.assert_allclose(ev.m, [0.0, 0.5], atol=0)
    np.testing.assert_allclose(ev.residuals, [1.0])
    np.testing.assert_allclose(ev.phi, [1.0, 1.0])
    np.testing.assert_allclose(ev.q, [0.0, 0.5])


def test_scalar_jacobian_by_hand():
    phi, q = 1.3, 0.4
    J = jacobian([[phi]], [[q]])
    np.testing.assert_allclose(J, -np.array([[1.0, phi], [0.0, (phi - q) * phi]]), atol=1e-15)


def test_zero_treatment_episode():
    y, q = 3.0, np.array([[0.4], [0.7]])
    theta = [0.5, 1.0, -2.0]
    ev = evaluate_moment(y, np.zeros((2, 1)), q, theta)
    assert ev.m[0] == y - theta[0]
    np.testing.assert_allclose(ev.m[1:], -ev.residuals * q[:, 0])
    np.testing.assert_allclose(ev.jacobian[0], [-1.0, 0.0, 0.0])
    assert np.all(ev.jacobian[1:, 0] == 0)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        moments(np.ones(2), np.ones((2, 2, 1)), np.ones((2, 1, 1)), np.zeros(3))


def test_parameter_vector_views():
    pv = ParameterVector.from_flat([1.0, 2, 3, 4, 5], 2, 2)
    np.testing.assert_array_equal(pv.stages, [[2, 3], [4, 5]])
    np.testing.assert_array_equal(pv.flat(), [1, 2, 3, 4, 5])
    with pytest.raises(ValueError):
        ParameterVector.from_flat([1.0, 2], 2, 2)


def test_block_upper_triangular_sparsity():
    rng = np.random.default_rng(0)
    l, d = 3, 2
    J = jacobians(rng.normal(size=(4, l, d)), rng.normal(size=(4, l, d)))
    for j in range(1, l + 1):
        rows = slice(1 + (j - 1) * d, 1 + j * d)
        assert np.all(J[:, rows, : 1 + (j - 1) * d] == 0)


def test_finite_difference_jacobian():
    rng = np.random.default_rng(1)
    l, d = 3, 2
    phi, q = rng.normal(size=(1, l, d)), rng.normal(size=(1, l, d))
    y = rng.normal(size=1)
    theta = rng.normal(size=1 + l * d)
    J = jacobians(phi, q)[0]
    eps = 1e-3
    base = moments(y, phi, q, theta)[0]
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = eps
        fd = (moments(y, phi, q, theta + e)[0] - base) / eps
        np.testing.assert_allclose(fd, J[:, k], atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.integers(1, 3), st.integers(1, 2))
def test_exact_linearity(seed, l, d):
    rng = np.random.default_rng(seed)
    phi, q, psi = (rng.normal(size=(5, l, d)) for _ in range(3))
    y = rng.normal(size=5)
    ta, tb = rng.normal(size=(2, 1 + l * d))
    J = jacobians(phi, q, psi)
    lhs = moments(y, phi, q, ta, psi) - moments(y, phi, q, tb, psi)
    np.testing.assert_allclose(lhs, J @ (ta - tb), atol=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_three_point_collinearity(seed):
    rng = np.random.default_rng(seed)
    phi, q = rng.normal(size=(3, 2, 2)), rng.normal(size=(3, 2, 2))
    y = rng.normal(size=3)
    ta, tb = rng.normal(size=(2, 5))
    t = rng.uniform(-2, 3)
    mix = moments(y, phi, q, ta + t * (tb - ta))
    line = moments(y, phi, q, ta) + t * (moments(y, phi, q, tb) - moments(y, phi, q, ta))
    np.testing.assert_allclose(mix, line, atol=1e-9)


def test_residual_tail_sums():
    psi = np.array([[[1.0], [2.0], [3.0]]])
    r = residuals(np.array([10.0]), psi, [0.0, 1.0, 1.0, 1.0])
    np.testing.assert_allclose(r[0], [10 - 6, 10 - 5, 10 - 3])


def test_moment_mean_zero_at_truth(simple_model):
    n = 50_000
    batch, phi, q = _fixed_data(simple_model, n, seed=3)
    truth = derive_true_parameters(simple_model, 1_000_000, seed=1).flat()
    m = moments(batch.y, phi, q, truth)
    z = m.mean(axis=0) / (m.std(axis=0, ddof=1) / np.sqrt(n))
    assert np.all(np.abs(z) < 3.0)


def test_closed_form_recovers_truth(simple_model):
    batch, phi, q = _fixed_data(simple_model, 100_000, seed=4)
    truth = derive_true_parameters(simple_model, 1_000_000, seed=2).flat()
    est = closed_form_theta(batch.y, phi, q).flat()
    se = bootstrap_se(batch.y, phi, q, draws=100, seed=0)
    assert np.all(np.abs(est - truth) < 3 * se)


def test_closed_form_deterministic_policy_singular(simple_model):
    batch, phi, q = _fixed_data(simple_model, 500, seed=5, probs=(0.0, 1.0))
    with pytest.raises(SingularJacobianError):
        closed_form_theta(batch.y, phi, q)


def test_closed_form_scalar_iv_algebra():
    # l = 1, d = 1: the stage row gives slope mean(y z) / mean(phi z) with z = phi - q,
    # then the top row gives intercept mean(y) - slope * mean(phi)
    rng = np.random.default_rng(6)
    n = 400
    phi = rng.integers(0, 2, size=(n, 1, 1)).astype(float) * rng.uniform(1, 2, size=(n, 1, 1))
    q = np.full((n, 1, 1), 0.3)
    y = 0.7 + 1.9 * phi[:, 0, 0] + rng.normal(size=n)
    z = phi[:, 0, 0] - q[:, 0, 0]
    x = phi[:, 0, 0]
    slope = (y * z).mean() / (x * z).mean()
    intercept = y.mean() - slope * x.mean()
    est = closed_form_theta(y, phi, q)
    assert est.stages[0, 0] == pytest.approx(slope, rel=1e-10)
    assert est.theta0 == pytest.approx(intercept, rel=1e-10)
