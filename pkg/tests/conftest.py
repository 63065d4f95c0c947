import pytest

from kvlab.model import ModelConfig, init_model


@pytest.fixture(scope="session")
def default_cfg():
    return ModelConfig(seed=11)


@pytest.fixture(scope="session")
def default_weights(default_cfg):
    return init_model(default_cfg)


@pytest.fixture(scope="session")
def tiny_cfg():
    """1-layer, 1-head model small enough for hand-checked attention."""
    return ModelConfig(layers=1, query_heads=1, kv_heads=1, head_dim=4,
                       vocab_size=32, seed=3)


@pytest.fixture(scope="session")
def tiny_weights(tiny_cfg):
    return init_model(tiny_cfg)
