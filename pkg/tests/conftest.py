import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from secure_dfrc import BeampatternSpec, Scenario, SystemConfig, Target, generate_channel  # noqa: E402

# acceptance verdicts collected by test_acceptance.py, printed at the end of the run
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def cfg():
    return SystemConfig()


@pytest.fixture(scope="session")
def coarse_cfg():
    return SystemConfig(grid_resolution=1.0)


def make_scenario(cfg, K, seed, angles=(0.0,), **target_kw):
    H = generate_channel(K, cfg.M, seed)
    return Scenario(cfg, H, tuple(Target(a, **target_kw) for a in angles))


def spec_for(angles, **kw):
    return BeampatternSpec(tuple(angles), **kw)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
