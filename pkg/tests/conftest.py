import numpy as np
import pytest

from msnas import HeadSpec, SearchSpaceConfig


@pytest.fixture
def default_config():
    return SearchSpaceConfig()


@pytest.fixture
def w48_config():
    return SearchSpaceConfig(base_width=48)


@pytest.fixture
def toy4_config():
    """Four stages at toy width; the standard cross-module consistency config."""
    return SearchSpaceConfig(base_width=8, depth_choices=(2, 3), stage_modules=(1, 1, 2, 1))


@pytest.fixture
def toy3_config():
    """Three stages; small enough to train the supernet in seconds."""
    return SearchSpaceConfig(base_width=8, depth_choices=(2, 3), stage_modules=(1, 1, 2))


@pytest.fixture
def pair_config():
    """One searched two-branch module; the space is exhaustively enumerable."""
    return SearchSpaceConfig(base_width=8, depth_choices=(2, 3), stage_modules=(1, 1))


@pytest.fixture
def seg_head():
    return HeadSpec("segmentation", 4)


@pytest.fixture(autouse=True)
def _float32_default():
    from msnas.nn import set_default_dtype

    set_default_dtype(np.float32)
    yield
    set_default_dtype(np.float32)
