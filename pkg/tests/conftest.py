"""Shared fixtures for the benchmark test suite."""

from __future__ import annotations

import pytest

from iclbench.baselines import sweep_scenario
from iclbench.environment import SeedPolicy, scenario_grid_default


@pytest.fixture(scope="session")
def default_sweeps():
    """Full grid sweeps at the package defaults (512 reps, T=100, seed 0).

    Session-scoped: ~13 s once, shared by every acceptance criterion.
    """
    seeds = SeedPolicy(master_seed=0)
    return {s.id: sweep_scenario(s, seeds) for s in scenario_grid_default()}


@pytest.fixture(scope="session")
def default_grid():
    return {s.id: s for s in scenario_grid_default()}
