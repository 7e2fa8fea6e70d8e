from __future__ import annotations

import functools
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from abrsim.engine import Simulation  # noqa: E402
from abrsim.scenario import load_scenario  # noqa: E402


@functools.lru_cache(maxsize=None)
def simulate(name: str) -> Simulation:
    """Run a bundled scenario once per test session; callers must not mutate it."""
    sim = Simulation(load_scenario(name))
    sim.result = sim.run()
    return sim


def records_at(sim: Simulation, point: str):
    return [r for r in sim.result.traces if r.point == point]


def in_rate_tx(records):
    return [r for r in records if r.event == "tx" and r.clp == 0]


@pytest.fixture
def sim_of():
    return simulate


ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def report(criterion: str, ok: bool, detail: str) -> None:
    """Record one acceptance line, print it, then fail the test if ``ok`` is false."""
    line = f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}"
    ACCEPTANCE[criterion] = (ok, detail)
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, (ok, detail) in ACCEPTANCE.items():
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}")
