import itertools
import sys
from pathlib import Path

import numpy as np
import pytest

# Add src directory to path for imports
src_path = Path(__file__).parent.parent / "src"
sys.path.insert(0, str(src_path))

from fairbound.core import ColumnSpec, VariableDomain, validate_dataset  # noqa: E402
from fairbound.oracle import random_tables  # noqa: E402
from fairbound.synthesis import ScmSpec, generate  # noqa: E402


@pytest.fixture
def binary_schema():
    binary = VariableDomain.binary()
    return [
        ColumnSpec("a", "a", binary),
        ColumnSpec("z", "z", binary),
        ColumnSpec("m", "m", binary),
        ColumnSpec("y", "y", binary),
    ]


@pytest.fixture
def uniform_dataset(binary_schema):
    """Every (a, z, m, y) combination exactly once."""
    return validate_dataset(list(itertools.product((0, 1), repeat=4)), binary_schema)


@pytest.fixture
def random_obs_tables():
    return random_tables(np.random.default_rng(11))


@pytest.fixture
def small_generated():
    return generate(ScmSpec(setting="u_de", phi=2.0, n=3000, seed=3))


@pytest.fixture
def write_csv(tmp_path):
    def _write(text: str, name: str = "data.csv") -> Path:
        path = tmp_path / name
        path.write_text(text)
        return path

    return _write
