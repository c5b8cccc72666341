import sys
from pathlib import Path

import pytest

TESTS_DIR = Path(__file__).resolve().parent
FIXTURES_DIR = TESTS_DIR / "fixtures"

# make the reference oracles importable from any test module
sys.path.insert(0, str(TESTS_DIR / "oracles"))


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES_DIR
