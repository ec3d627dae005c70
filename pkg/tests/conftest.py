import pytest

from confined_qdyn.geometry import TubeParams, make_curve
from confined_qdyn.operators import ConfinementProfile

ACCEPTANCE_LINES: dict[str, str] = {}


@pytest.fixture(scope="session")
def circle():
    return make_curve("circle", [1.0])


@pytest.fixture(scope="session")
def ellipse():
    return make_curve("ellipse", [1.5, 1.0])


@pytest.fixture(scope="session")
def profile():
    return ConfinementProfile(omega=1.0, v0=0.5)


@pytest.fixture(scope="session")
def wide_tube():
    return TubeParams(0.9, 0.8)


@pytest.fixture
def acceptance_line():
    def record(criterion: str, passed: bool, detail: str) -> None:
        ACCEPTANCE_LINES[criterion] = f"{criterion} {'PASS' if passed else 'FAIL'}  {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
