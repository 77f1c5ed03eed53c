import numpy as np
import pytest

from ades.attack import AttackConfig
from ades.data import make_blobs
from ades.scheduler import ScheduleConfig
from ades.training import TrainConfig, train


@pytest.fixture(scope="session")
def blobs():
    return (make_blobs(200, 2, 2, 0.08, seed=0, split="train"),
            make_blobs(100, 2, 2, 0.08, seed=0, split="test"))


@pytest.fixture(scope="session")
def toy_model(blobs):
    """A small PGD-trained classifier on the blobs data."""
    train_ds, _ = blobs
    cfg = TrainConfig(epochs=8, batch_size=64, mode="pgd_at", seed=0, lr_milestones=())
    state = train(cfg, ScheduleConfig(0.02, 0.12), AttackConfig(5, 0.03), train_ds.features, train_ds.labels,
                  [2, 32, 32, 2], dropout=0.1)
    return state.classifier


@pytest.fixture
def rng():
    return np.random.default_rng(0)
