import numpy as np
import pytest

from motionforge.synthetic import chain_model, chain_motion, chain_track, write_demo_corpus


@pytest.fixture(scope="session")
def chain3():
    return chain_model(3)


@pytest.fixture(scope="session")
def chain5():
    return chain_model(5, n_betas=2)


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """Full fixture corpus on disk: model, 138-frame motion, 49-frame
    track, reference vertices, denoiser family, config."""
    return write_demo_corpus(tmp_path_factory.mktemp("corpus"))


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def make_rng(seed):
    return np.random.default_rng(seed)
