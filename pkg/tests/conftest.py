import numpy as np
import pytest

from bellext.behavior import enumerate_vertices
from bellext.polytope import cycle_symmetry_group, load_table
from bellext.scenario import CYCLE4_SCENARIO


@pytest.fixture(scope="session")
def scenario():
    return CYCLE4_SCENARIO


@pytest.fixture(scope="session")
def vertices():
    return enumerate_vertices(CYCLE4_SCENARIO)


@pytest.fixture(scope="session")
def table():
    return load_table()


@pytest.fixture(scope="session")
def table_by_id(table):
    return {q.id: q for q in table}


@pytest.fixture(scope="session")
def group():
    return cycle_symmetry_group(CYCLE4_SCENARIO)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
