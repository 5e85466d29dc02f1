import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import make_deps  # noqa: E402
from repair.synthetic import generate  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture(scope="session")
def synthetic():
    return generate()


@pytest.fixture(scope="session")
def synthetic_deps(synthetic):
    return make_deps(synthetic.docs, synthetic.script)


def pytest_terminal_summary(terminalreporter):
    results = sys.modules.get("test_acceptance")
    if results is None or not results.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, (status, text) in sorted(results.RESULTS.items()):
        terminalreporter.write_line(f"ACCEPTANCE {number} {status} {text}")
