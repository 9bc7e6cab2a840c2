import pytest

from epiflows.demo import five_node_initial_state, five_node_system


@pytest.fixture(scope="session")
def five_node():
    return five_node_system()


@pytest.fixture(scope="session")
def five_node_start():
    return five_node_initial_state()
