import pytest

from hetfs.engine import unit_weight_model
from hetfs.ingest import g1_bundle
from hetfs.weights import compute_edge_contribution


@pytest.fixture
def g1():
    return g1_bundle().freeze()


@pytest.fixture
def g1_real_mu(g1):
    """Unit content and centrality, edge contributions computed from the graph."""
    return unit_weight_model(g1, c=0.8, contribution=compute_edge_contribution(g1))


# One line per acceptance criterion, printed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def acceptance(criterion: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  criterion {criterion}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
