import numpy as np
import pytest

from causalmix.datagen import SimConfig, generate_dataset, substream
from causalmix.nets import ModelConfig, init_params


def small_model_config(n_channels=3, length=20, context_dim=0):
    """Narrow widths keep gradient checks and training loops fast."""
    return ModelConfig(n_channels=n_channels, length=length,
                       context_dim=context_dim, enc_hidden=8,
                       dec_edge_hidden=6, dec_msg=4, dec_hidden=6,
                       pre_hidden=6, ctx_hidden=4)


@pytest.fixture(scope="session")
def tiny_sim1():
    cfg = SimConfig(n_shops=8, n_channels=3, length=40, n_structures=2,
                    seed=11)
    return generate_dataset(cfg)


@pytest.fixture(scope="session")
def tiny_sim2():
    cfg = SimConfig(n_shops=8, n_channels=3, length=40, n_structures=2,
                    mode="sim2", context_dim=2, seed=12)
    return generate_dataset(cfg)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)


def random_store(mcfg, seed=0):
    return init_params(mcfg, substream(seed, 101))
