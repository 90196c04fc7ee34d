import pytest

from clfvar import datasets
from clfvar.rng import SeededRng

ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_report():
    def report(criterion, passed, detail=""):
        ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def blob_splits():
    full = datasets.make_blobs(SeededRng(0), 60, 3, 2, 0.5)
    return datasets.split_classification(full, 0.3)


@pytest.fixture(scope="session")
def series_splits():
    series = datasets.make_series(SeededRng(0), 400, 0.1)
    return datasets.split_forecast(datasets.window(series, 8, 3))
