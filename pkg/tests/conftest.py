"""Shared fixtures: subprocess mock backends and acceptance reporting."""

import sys
from pathlib import Path

import pytest

from segue.backend import WireBackend

TESTS_DIR = Path(__file__).parent
FAKES_DIR = TESTS_DIR / "fakes"
DATA_DIR = TESTS_DIR / "data"


def mock_server_argv(*extra: str) -> list[str]:
    return [sys.executable, "-m", "segue.mockbackend", *extra]


def fake_server_argv(name: str) -> list[str]:
    return [sys.executable, str(FAKES_DIR / name)]


@pytest.fixture
def wire_mock():
    """WireBackend talking to a default mock subprocess."""
    backend = WireBackend.from_command(mock_server_argv())
    yield backend
    backend.close()


def pytest_runtest_logreport(report):
    # One visible pass/fail line per acceptance criterion.
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    outcome = "PASS" if report.passed else "FAIL"
    print(f"\n[ACCEPTANCE] {name}: {outcome}", file=sys.stderr)
