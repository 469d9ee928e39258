import pytest

from critbranch import LawSet


@pytest.fixture
def binary():
    """Binary splitting with single immigrants and integrable intensity."""
    return LawSet.constant(gamma=1.0, alpha=1.0, theta=2.0, L_c=0.5)


@pytest.fixture
def half():
    return LawSet.constant(gamma=0.5, alpha=0.9, theta=1.5)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("ACCEPTANCE")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
