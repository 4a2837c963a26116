"""Shared fixtures, hypothesis profile, and the acceptance report hook."""

from __future__ import annotations

import os
from typing import List, Tuple

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "suite",
    max_examples=150,
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

ARTIFACTS_DIR = os.path.join(os.path.dirname(__file__), "artifacts")

# One line per acceptance criterion, printed in the terminal summary so the
# verdicts are visible regardless of capture settings.
_CRITERION_LINES: List[Tuple[int, str]] = []


def record_criterion(number: int, title: str, passed: bool, detail: str = "") -> None:
    verdict = "PASS" if passed else "FAIL"
    line = f"criterion {number} ({title}): {verdict}" + (f" — {detail}" if detail else "")
    os.makedirs(ARTIFACTS_DIR, exist_ok=True)
    # First record of a session starts a fresh report.
    mode = "a" if _CRITERION_LINES else "w"
    _CRITERION_LINES.append((number, line))
    with open(os.path.join(ARTIFACTS_DIR, "acceptance_report.txt"), mode) as fh:
        fh.write(line + "\n")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERION_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_CRITERION_LINES):
        terminalreporter.write_line(line)


@pytest.fixture()
def artifacts_dir() -> str:
    os.makedirs(ARTIFACTS_DIR, exist_ok=True)
    return ARTIFACTS_DIR
