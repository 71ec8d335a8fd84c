import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import schedleak as sl


@pytest.fixture(scope="session")
def est_cell():
    """Solved estimation cell at the standard operating point."""
    cfg = sl.EpisodeConfig(scenario=sl.Scenario.ESTIMATION, theta=32.0, beta=1.0,
                           d_gap=5, n_steps=200, seed=42,
                           policy_kind=sl.PolicyKind.MPI)
    return sl.CellSolution(cfg)


@pytest.fixture(scope="session")
def ctl_cell():
    """Solved control cell at the standard operating point."""
    cfg = sl.EpisodeConfig(scenario=sl.Scenario.CONTROL, theta=32.0, beta=1.0,
                           d_gap=5, n_steps=200, seed=42,
                           policy_kind=sl.PolicyKind.MPI)
    return sl.CellSolution(cfg)


def standard_config(**overrides):
    base = dict(scenario=sl.Scenario.ESTIMATION, theta=32.0, beta=1.0,
                d_gap=5, n_steps=200, seed=42, policy_kind=sl.PolicyKind.MPI)
    base.update(overrides)
    return sl.EpisodeConfig(**base)
