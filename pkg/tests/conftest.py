import pytest

from superconst.training import preset_config, train


@pytest.fixture(scope="session")
def small_trained_checkpoint():
    """A cheap but usable system: fixed-gain preset at a reduced budget."""
    config = preset_config("case1", iterations=4000, seed=5, batch_size=512)
    return train(config)
