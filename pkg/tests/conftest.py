import pytest

from nise.dataset import crime_spec, load_crime, prepare_design

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def crime_panel():
    return load_crime()


@pytest.fixture(scope="session")
def crime_design(crime_panel):
    return prepare_design(crime_panel, crime_spec("absorb"))


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
