import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hcd.synthetic import generate_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_image(rng, h, w):
    return rng.random((h, w, 3)).astype(np.float32)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """Small synthetic dataset (6 train / 3 test) for pipeline-level tests."""
    out = tmp_path_factory.mktemp("tinydata")
    train, test = generate_dataset(out, n_train=6, n_test=3, seed=11)
    return {"root": out, "train": train, "test": test}
