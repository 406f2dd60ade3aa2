import numpy as np
import pytest

from hmmglasso.core import GaussianState, HmmModel


def random_model(rng, K, p, separation=1.0):
    """Random valid HMM with dense SPD precisions."""
    states = []
    for _ in range(K):
        A = rng.standard_normal((p + 2, p))
        cov = A.T @ A / (p + 2) + 0.3 * np.eye(p)
        states.append(GaussianState.from_covariance(separation * rng.standard_normal(p), cov))
    trans = rng.random((K, K)) + 0.1
    trans /= trans.sum(axis=1, keepdims=True)
    init = rng.random(K) + 0.1
    return HmmModel(states=tuple(states), transition=trans, initial=init / init.sum())


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
