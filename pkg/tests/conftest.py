import pytest

from oed_sra.benchmarks import get_case
from oed_sra.validation import session_config


@pytest.fixture
def ex1():
    problem = get_case("example1").problem(0)
    return problem, session_config(problem, 0, quick=True, k_max=10)


def pytest_terminal_summary(terminalreporter):
    from oed_sra import validation

    if validation.ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in validation.ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
