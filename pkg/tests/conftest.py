import sys
from pathlib import Path

import pytest

# Make the sibling helpers module importable from every test file.
sys.path.insert(0, str(Path(__file__).parent))

from agentcontracts.generator import generate_suite


@pytest.fixture(scope="session")
def suite_dir(tmp_path_factory):
    """One generated benchmark suite shared across the test session."""
    path = tmp_path_factory.mktemp("suite")
    generate_suite(str(path), seed=7)
    return str(path)
