import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import helpers  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def speech_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("speech")
    return helpers.write_speech_corpus(root)


@pytest.fixture(scope="session")
def mixture_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("unsup_mixtures")
    return helpers.write_mixture_dir(root)
