import numpy as np
import pytest

from ssaembed.data import SyntheticCorpusConfig, generate_synthetic_corpus


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_corpus():
    cfg = SyntheticCorpusConfig(classes=2, folds=2, superfamilies=2, families=1, sequences=2,
                                length_range=(20, 30), seed=3)
    return generate_synthetic_corpus(cfg)
