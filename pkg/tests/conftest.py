from __future__ import annotations

import os

import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.register_profile("thorough", max_examples=500, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE: dict[int, tuple[bool, str]] = {}
# (test id, problems) for every search run finished during the session
RUNS: list[tuple[str, list[str]]] = []


@pytest.fixture(scope="session", autouse=True)
def watch_search_runs():
    """Check history and stop-reason invariants after every search run in the suite."""
    import advlayout.search as search
    from oracles import run_problems

    real = search._run

    def watched(*args, **kwargs):
        result = real(*args, **kwargs)
        problems = run_problems(result)
        RUNS.append((os.environ.get("PYTEST_CURRENT_TEST", "?"), problems))
        assert not problems, problems
        return result

    with pytest.MonkeyPatch.context() as mp:
        mp.setattr(search, "_run", watched)
        yield


@pytest.fixture
def acceptance():
    def record(number: int, passed: bool, detail: str) -> None:
        ACCEPTANCE[number] = (passed, detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}")
