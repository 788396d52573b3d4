import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from repomech.decomposition import decompose
from repomech.flow_network import build_flow_network, split_nodes
from repomech.reports import data_path, load_assignment
from repomech.trade_model import bilateral_net, load_book

ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def book():
    return load_book(data_path("table1.csv"))


@pytest.fixture(scope="session")
def edges(book):
    return bilateral_net(book)


@pytest.fixture(scope="session")
def network(edges):
    return build_flow_network(edges)


@pytest.fixture(scope="session")
def assignment():
    return load_assignment(data_path("example_assignment.json"))


@pytest.fixture(scope="session")
def tfn(network, assignment):
    return split_nodes(network, assignment)


@pytest.fixture(scope="session")
def dec(tfn):
    return decompose(tfn)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k[2:])):
        ok, title = ACCEPTANCE[key]
        terminalreporter.write_line(f"{key:<5} {'PASS' if ok else 'FAIL'}  {title}")
