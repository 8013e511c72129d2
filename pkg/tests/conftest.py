import pytest

from fpqkd.estimator import source_stats
from fpqkd.fock import td_table
from fpqkd.source import EXPERIMENT_THRESHOLDS, PostSelectionConfig

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def cfg() -> PostSelectionConfig:
    return EXPERIMENT_THRESHOLDS


@pytest.fixture(scope="session")
def stats(cfg):
    return source_stats(cfg)


@pytest.fixture(scope="session")
def td(cfg):
    return td_table(cfg)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
