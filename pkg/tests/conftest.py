from pathlib import Path

import numpy as np
import pytest

from aqclab import bell, linalg, theorems

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def fixtures():
    return FIXTURES


def shared_space_model(s: bell.Scenario, dim: int, rng) -> theorems.GeneralizedModel:
    """All parties measure on one common space; operators generically do not commute."""
    ops = tuple(
        np.array([linalg.random_projective_measurement(dim, s.outputs[p], rng) for _ in range(s.inputs[p])])
        for p in range(s.n)
    )
    return theorems.GeneralizedModel(s, linalg.random_state(dim, rng), ops)


ACCEPTANCE: list[tuple[str, str, str]] = []


def record(label: str, ok: bool | None, detail: str) -> None:
    status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
    ACCEPTANCE.append((label, status, detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, status, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"{status}  {label}: {detail}")
