from __future__ import annotations

import numpy as np
import pytest

from fivefield.harness import build_blocks, run_case
from fivefield.cases import get_case
from fivefield.optimizer import FiveFieldProblem

ACCEPTANCE_LINES: list = []


def record(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"criterion {criterion}: {'PASS' if ok else 'FAIL'} {detail}")
    print(ACCEPTANCE_LINES[-1])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def test0_run():
    return run_case("test0", 0)


@pytest.fixture(scope="session")
def test1_problem():
    blocks = build_blocks(get_case("test1"), 0)
    return FiveFieldProblem(blocks)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
