"""Benchmarking suite for in-context learners on hierarchical Fourier-regression tasks.

The package samples regression tasks with a hidden Fourier order, runs
closed-form Bayesian baselines (per-order ridge posteriors, evidence-weighted
averaging, information-criterion selectors, an equal-weight ensemble), and
scores any external learner's predictions against them: sample complexity,
performance ratios and profiles, and an information-theoretic decomposition
of prediction risk with the matching suboptimality lower bound.
"""

from iclbench.environment import (
    FeatureMap,
    Scenario,
    SeedPolicy,
    TaskInstance,
    feature_matrix,
    feature_vector,
    load_scenarios,
    sample_task,
    scenario_grid_default,
)

__version__ = "0.1.0"

__all__ = [
    "FeatureMap",
    "Scenario",
    "SeedPolicy",
    "TaskInstance",
    "feature_matrix",
    "feature_vector",
    "load_scenarios",
    "sample_task",
    "scenario_grid_default",
    "__version__",
]
