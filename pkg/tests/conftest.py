import numpy as np
import pytest

from liftrisk.core import N_FEATURES, N_JOINTS, N_WRENCH, StateFrame
from liftrisk.gmoe import GmoeModel


def random_frame(rng, t=0.0, label=None):
    return StateFrame(t, rng.normal(size=N_JOINTS), rng.normal(size=N_JOINTS),
                      rng.normal(size=N_WRENCH), label)


def random_model(seed, hidden=6, horizon=50, scale=1.0):
    rng = np.random.default_rng(seed)
    model = GmoeModel.initialize(rng, hidden=hidden, horizon=horizon)
    for v in model.params.values():
        v *= scale
        v += 0.05 * rng.normal(size=v.shape)
    model.in_mean = rng.normal(size=N_FEATURES)
    model.in_scale = rng.uniform(0.5, 2.0, size=N_FEATURES)
    return model


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def task2_lift():
    from liftrisk.synth import generate_lift, task_script
    return generate_lift(task_script(2, seed=3))
