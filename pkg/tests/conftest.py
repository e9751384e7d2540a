import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from retroselect.chem import parse_smiles
from retroselect.encoder import ModelDims, init_params

from helpers import CORPUS_SMILES


@pytest.fixture(scope="session")
def corpus_molecules():
    return [parse_smiles(s) for s in CORPUS_SMILES]


@pytest.fixture(scope="session")
def tiny_params():
    """Small float32 model shared by read-only tests."""
    return init_params(11, ModelDims(d=16, n_layers=2, n_types=3))


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
