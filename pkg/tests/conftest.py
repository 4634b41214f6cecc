from __future__ import annotations

import numpy as np
import pytest

from artifact.gep import clear_cache

_ACCEPTANCE: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def _fresh_coeff_cache():
    yield
    clear_cache()


@pytest.fixture
def report():
    """report(n, title, status, detail) records one acceptance line."""
    def _rec(n: int, title: str, status: str, detail: str) -> None:
        line = f"criterion {n:2d} [{status}] {title}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
    return _rec


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
