import numpy as np
import pytest
import yaml

from episodic_z.harness import EXAMPLE_CONFIG, model_from_dict
from episodic_z.model_plm import BaselineEffect, FeatureMap, Noise, PlmConfig

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def example_data():
    return yaml.safe_load(EXAMPLE_CONFIG)


@pytest.fixture(scope="session")
def example_model(example_data):
    return model_from_dict(example_data["model"])


def binary_product_model(horizon=2, theta=1.0, omega=0.5, gammas=None, beta=None, kappa=None,
                         eta=0.0, eps=0.0, x1=(1.0, 2.0)):
    feats = FeatureMap("product", horizon, 1, np.array([[0.0], [1.0]]))
    return PlmConfig(
        horizon=horizon, dim=1, theta=[theta], omega=[omega], features=feats,
        gammas=gammas if gammas is not None else [np.eye(1) * 0.5] * (horizon - 2),
        beta=beta, kappa=kappa, x1_low=[x1[0]], x1_high=[x1[1]],
        eta=Noise("uniform", eta) if eta else Noise(), eps=Noise("uniform", eps) if eps else Noise(),
        box_low=[-50.0], box_high=[50.0], y_low=-200.0, y_high=200.0)


@pytest.fixture
def simple_model():
    return binary_product_model(
        beta=BaselineEffect("affine", 1, intercept=[0.5], linear=[[0.5]]),
        kappa=BaselineEffect("quadratic", 1, intercept=[0.2], linear=[[0.3]], quad=[[-0.1]]),
        eta=0.5, eps=1.0)


def two_dim_model(horizon=2):
    """d = 2 with four arms (0,0), (1,0), (0,1), (1,1) and product features."""
    av = np.array([[0, 0], [1, 0], [0, 1], [1, 1]], float)
    feats = FeatureMap("product", horizon, 2, av)
    return PlmConfig(
        horizon=horizon, dim=2, theta=[1.0, -0.5], omega=[0.5, 0.25], features=feats,
        gammas=[np.array([[0.5, 0.1], [0.0, 0.4]])] * (horizon - 2),
        beta=BaselineEffect("affine", 2, intercept=[0.5, 0.2], linear=[[0.5, 0.0], [0.1, 0.3]]),
        kappa=BaselineEffect("cosine", 1, amplitude=[0.5], freq=[[1.0, 0.5]]),
        x1_low=[1.0, 1.0], x1_high=[2.0, 2.0], eta=Noise("uniform", 0.3), eps=Noise("uniform", 1.0),
        box_low=[-20, -20], box_high=[20, 20], y_low=-100, y_high=100)
