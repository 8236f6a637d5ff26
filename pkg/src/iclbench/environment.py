"""Hierarchical Fourier-regression task sampling.

A Scenario fixes the environment: a maximum Fourier order M, a weight-prior
variance, an observation-noise variance, the input interval, the base period,
and the demonstration horizon T.  Each task draws a hidden order m uniformly
from {1..M}, a Gaussian weight vector, T+1 uniform inputs, and noisy
observations of the variance-normalized Fourier expansion

    f(x) = w . phi_m(x) / sqrt(m + 1),
    phi_m(x) = [1, cos(pi x / P), sin(pi x / P), ..., cos(m pi x / P), sin(m pi x / P)].

The 1/sqrt(m+1) factor keeps Var(f(x)) equal to the weight-prior variance
for every m, so scenarios are comparable across orders.

Sampling is deterministic given (master seed, scenario id, replication):
the seed material is ``SeedSequence(entropy=[master_seed, h, replication])``
with ``h`` the first 8 bytes (little-endian) of SHA-256 of the scenario id,
feeding a counter-based Philox generator.  Replications are therefore
independent streams that can be generated in any order or in parallel.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

__all__ = [
    "Scenario",
    "FeatureMap",
    "TaskInstance",
    "SeedPolicy",
    "feature_vector",
    "feature_matrix",
    "sample_task",
    "scenario_grid_default",
    "load_scenarios",
    "stable_hash_int",
]

DEFAULT_NOISE_GRID = (0.003, 0.03, 0.3)
DEFAULT_WEIGHT_GRID = (0.1, 1.0, 10.0)


@dataclass(frozen=True)
class Scenario:
    """Environment parameters for one benchmark scenario."""

    id: str
    M: int = 10
    sigma_w_sq: float = 1.0
    sigma_eps_sq: float = 0.03
    period: float = 5.0
    x_min: float = -5.0
    x_max: float = 5.0
    T: int = 100
    replications: int = 512

    def __post_init__(self) -> None:
        if not self.id or any(c.isspace() for c in self.id):
            raise ValueError(f"scenario id must be non-empty without whitespace: {self.id!r}")
        if self.M < 1:
            raise ValueError(f"M must be >= 1, got {self.M}")
        if self.sigma_w_sq <= 0:
            raise ValueError(f"sigma_w_sq must be positive, got {self.sigma_w_sq}")
        if self.sigma_eps_sq <= 0:
            raise ValueError(f"sigma_eps_sq must be positive, got {self.sigma_eps_sq}")
        if self.period <= 0:
            raise ValueError(f"period must be positive, got {self.period}")
        if not self.x_min < self.x_max:
            raise ValueError(f"need x_min < x_max, got [{self.x_min}, {self.x_max}]")
        if self.T < 1:
            raise ValueError(f"T must be >= 1, got {self.T}")
        if self.replications < 1:
            raise ValueError(f"replications must be >= 1, got {self.replications}")


@dataclass(frozen=True)
class FeatureMap:
    """Truncated Fourier basis of order m on a fixed period."""

    m: int
    period: float

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        if self.period <= 0:
            raise ValueError(f"period must be positive, got {self.period}")

    @property
    def dim(self) -> int:
        return 2 * self.m + 1


def feature_matrix(fm: FeatureMap, xs: np.ndarray) -> np.ndarray:
    """Evaluate the Fourier basis at each x; output shape xs.shape + (2m+1,).

    Column 0 is the constant 1; columns (2j-1, 2j) are cos/sin at frequency j.
    """
    xs = np.asarray(xs, dtype=np.float64)
    out = np.empty(xs.shape + (2 * fm.m + 1,), dtype=np.float64)
    out[..., 0] = 1.0
    ang = (np.pi / fm.period) * xs[..., None] * np.arange(1, fm.m + 1, dtype=np.float64)
    out[..., 1::2] = np.cos(ang)
    out[..., 2::2] = np.sin(ang)
    return out


def feature_vector(fm: FeatureMap, x: float) -> np.ndarray:
    """Fourier feature vector [1, cos(pi x/P), sin(pi x/P), ...] of length 2m+1."""
    if not np.isfinite(x):
        raise ValueError(f"x must be finite, got {x}")
    return feature_matrix(fm, np.float64(x))


@dataclass(frozen=True)
class TaskInstance:
    """One sampled task: hidden order, weights, and the demonstration stream.

    ``xs``, ``ys_clean`` and ``ys`` have length T+1: entry t is the query point
    seen after t demonstrations, and entries 0..t-1 are those demonstrations.
    """

    scenario_id: str
    replication: int
    m: int
    weights: np.ndarray
    xs: np.ndarray
    ys_clean: np.ndarray
    ys: np.ndarray


def stable_hash_int(text: str) -> int:
    """Stable 64-bit integer digest of a string (first 8 bytes of SHA-256)."""
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class SeedPolicy:
    """Derives independent, replayable random streams per (scenario, replication).

    The stream for (scenario_id, replication) is the Philox generator seeded by
    ``SeedSequence(entropy=[master_seed, stable_hash_int(scenario_id), replication])``.
    Draw order within a task is fixed: order m, weights, inputs, noise.
    """

    master_seed: int = 0

    def seed_sequence(self, scenario_id: str, replication: int) -> np.random.SeedSequence:
        return np.random.SeedSequence(
            entropy=[self.master_seed, stable_hash_int(scenario_id), replication]
        )

    def generator(self, scenario_id: str, replication: int) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(self.seed_sequence(scenario_id, replication)))


def sample_task(s: Scenario, replication: int, seeds: SeedPolicy) -> TaskInstance:
    """Sample the task for one replication of a scenario, deterministically.

    Draws, in order: m ~ U{1..M}; w ~ Normal(0, sigma_w_sq I_{2m+1});
    xs ~ U[x_min, x_max]^(T+1); noise ~ Normal(0, sigma_eps_sq)^(T+1).
    """
    if not 0 <= replication < s.replications:
        raise ValueError(
            f"replication {replication} outside [0, {s.replications}) for scenario {s.id!r}"
        )
    rng = seeds.generator(s.id, replication)
    m = int(rng.integers(1, s.M + 1))
    weights = rng.normal(0.0, np.sqrt(s.sigma_w_sq), size=2 * m + 1)
    xs = rng.uniform(s.x_min, s.x_max, size=s.T + 1)
    noise = rng.normal(0.0, np.sqrt(s.sigma_eps_sq), size=s.T + 1)
    fm = FeatureMap(m=m, period=s.period)
    ys_clean = feature_matrix(fm, xs) @ weights / np.sqrt(m + 1.0)
    ys = ys_clean + noise
    for arr in (weights, xs, ys_clean, ys):
        arr.setflags(write=False)
    return TaskInstance(
        scenario_id=s.id,
        replication=replication,
        m=m,
        weights=weights,
        xs=xs,
        ys_clean=ys_clean,
        ys=ys,
    )


def scenario_grid_default() -> list[Scenario]:
    """The default 9-scenario grid: noise variance x weight variance, M=10, T=100."""
    grid = []
    for eps in DEFAULT_NOISE_GRID:
        for w in DEFAULT_WEIGHT_GRID:
            grid.append(
                Scenario(id=f"eps{eps:g}-w{w:g}", sigma_w_sq=w, sigma_eps_sq=eps)
            )
    return grid


def load_scenarios(path: str) -> list[Scenario]:
    """Load a scenario grid from a TOML file with [[scenario]] tables.

    Every table must provide ``id``; all other Scenario fields are optional and
    fall back to the defaults above.  Unknown keys and duplicate ids are errors.
    """
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    tables = doc.get("scenario")
    if not tables:
        raise ValueError(f"{path}: no [[scenario]] tables found")
    allowed = set(Scenario.__dataclass_fields__)
    scenarios = []
    for i, tab in enumerate(tables):
        unknown = set(tab) - allowed
        if unknown:
            raise ValueError(f"{path}: scenario #{i}: unknown keys {sorted(unknown)}")
        if "id" not in tab:
            raise ValueError(f"{path}: scenario #{i}: missing required key 'id'")
        scenarios.append(Scenario(**tab))
    ids = [s.id for s in scenarios]
    if len(set(ids)) != len(ids):
        raise ValueError(f"{path}: duplicate scenario ids")
    return scenarios
