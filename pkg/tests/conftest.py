import pytest

from ddrplates.ddr_core import LocalOperatorSet
from ddrplates.mesh import builtin_cell


@pytest.fixture(scope='session')
def cell_operators():
    """Factory for LocalOperatorSet on a builtin cell, shared by the whole session."""
    cache = {}

    def build(name, k):
        if (name, k) not in cache:
            mesh = builtin_cell(name)
            cache[name, k] = LocalOperatorSet(mesh, mesh.cells[0], k)
        return cache[name, k]

    return build


@pytest.fixture
def unit_square():
    return builtin_cell('square')
