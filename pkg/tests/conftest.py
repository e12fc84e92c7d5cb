from __future__ import annotations

import functools
import warnings

import pytest

from stegtrace.scenario import load_preset, with_overrides
from stegtrace.simulator import ConfigurationWarning, run_scenario

ACCEPTANCE_LINES: list[str] = []


@functools.lru_cache(maxsize=None)
def preset_run(name: str, seed: int | None = None, zero_noise: bool = False):
    """Simulate a preset once per (name, seed, zero_noise) for the whole session."""
    config = with_overrides(load_preset(name), seed=seed, zero_noise=zero_noise)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConfigurationWarning)
        return run_scenario(config)


@pytest.fixture
def run_preset():
    return preset_run


@pytest.fixture
def acceptance_report():
    def report(criterion: int, passed: bool, detail: str):
        line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'} | {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
