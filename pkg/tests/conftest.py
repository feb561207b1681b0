import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from platelab.eigensolve import eigensolve  # noqa: E402
from platelab.grid_ops import Grid, assemble_bilaplacian  # noqa: E402


@pytest.fixture(scope="session")
def clamped_400():
    op = assemble_bilaplacian(Grid.uniform(400), "clamped")
    return op, eigensolve(op, 40)


@pytest.fixture(scope="session")
def clamped_100():
    op = assemble_bilaplacian(Grid.uniform(100), "clamped")
    return op, eigensolve(op, 10)
