from __future__ import annotations

import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def record():
    def _record(number: int, ok: bool, detail: str) -> None:
        ACCEPTANCE_LINES.append(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


MC_SEED = 20240611
MC_KS = (4, 6, 8)
MC_SAMPLES = 200


@pytest.fixture(scope="session")
def mc_run():
    """The seed-pinned 200-sample Anderson experiment at k = 4, 6, 8, computed once per session."""
    from kashin.lab import mc_success_experiment
    return mc_success_experiment(MC_KS, MC_SAMPLES, 2.0, MC_SEED, "anderson")
