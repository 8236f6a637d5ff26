"""Learning-curve metrics: sample complexity, performance ratios, profiles.

The unit of comparison is the Monte-Carlo error curve: the mean squared error
of a learner's prediction against the noisy next observation, per number of
demonstrations t = 1..T.  On top of it sit the solver-benchmarking notions:

  * sample complexity N_b(r): fewest demonstrations after which the curve is
    at or below requirement r (INFINITE if never within the horizon);
  * reference quantile psi^Q(s): the requirement picked from the pooled
    errors of a set of reference learners — higher Q means a smaller error,
    i.e. a harder requirement;
  * performance ratio: N_b(r) divided by the best sample complexity in a
    comparison set, per scenario;
  * mean performance ratio (MPR): the average of finite ratios across
    scenarios, with a coverage count for the excluded ones;
  * performance profile rho_b(tau): fraction of scenarios whose ratio is at
    most tau — never-achieved requirements stay in the denominator forever.

Curve reductions use compensated summation (math.fsum), so results do not
depend on record order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from iclbench.ingest import DataError, RecordSet

__all__ = [
    "INFINITE",
    "ErrorCurve",
    "QuantileSpec",
    "ProfileResult",
    "UnattainableRequirement",
    "DEFAULT_TAU_GRID",
    "DEFAULT_Q_GRID",
    "error_curve",
    "sample_complexity",
    "reference_quantile",
    "performance_ratio",
    "mean_performance_ratio",
    "performance_profile",
    "squared_prediction_difference",
]

INFINITE = math.inf

DEFAULT_TAU_GRID = tuple(np.geomspace(1.0, 3.0, 60))
DEFAULT_Q_GRID = (0.01, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99)


class UnattainableRequirement(ValueError):
    """No member of the comparison set reaches the requirement within T."""


@dataclass
class ErrorCurve:
    """Monte-Carlo mean loss per t for one (learner, scenario).

    ``mse[i]`` is the mean squared error after t = i+1 demonstrations;
    ``stderr`` is the matching standard error of the mean.
    """

    learner_id: str
    scenario_id: str
    mse: np.ndarray
    stderr: np.ndarray
    n_reps: int

    def __post_init__(self) -> None:
        self.mse = np.asarray(self.mse, dtype=np.float64)
        self.stderr = np.asarray(self.stderr, dtype=np.float64)
        if self.mse.shape != self.stderr.shape or self.mse.ndim != 1:
            raise ValueError("mse and stderr must be equal-length vectors")
        if np.any(self.mse < 0) or np.any(self.stderr < 0):
            raise ValueError("mse and stderr must be nonnegative")

    @property
    def T(self) -> int:
        return len(self.mse)

    def value_at(self, t: int) -> float:
        """Curve value after t demonstrations (t is 1-based)."""
        return float(self.mse[t - 1])


@dataclass(frozen=True)
class QuantileSpec:
    """A requirement level: quantile order Q over a reference learner pool."""

    Q: float
    reference_learners: tuple[str, ...]

    def __post_init__(self) -> None:
        if not 0.0 < self.Q < 1.0:
            raise ValueError(f"Q must lie in (0, 1), got {self.Q}")
        if not self.reference_learners:
            raise ValueError("reference learner set must be nonempty")


@dataclass
class ProfileResult:
    """Ratios, their mean, and the profile curve for one learner at one Q."""

    learner_id: str
    Q: float
    ratios: dict[str, float]
    mpr: float
    mpr_coverage: int
    tau_grid: np.ndarray
    profile: np.ndarray
    excluded: dict[str, str] = field(default_factory=dict)


def _fsum_mean_stderr(values: np.ndarray) -> tuple[float, float]:
    """Order-independent mean and standard error via compensated sums."""
    n = len(values)
    mean = math.fsum(values) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var / n)


def _check_rectangular(rs: RecordSet, what: str) -> tuple[np.ndarray, int, int]:
    """Require a complete (replication x t) grid; return (order, R, T)."""
    if len(rs) == 0:
        raise DataError(f"{what}: empty record set")
    reps = np.unique(rs.replication)
    T = int(rs.t.max())
    R = len(reps)
    if len(rs) != R * T or rs.t.min() < 1:
        # locate the gaps for the error message
        want = {(int(r), t) for r in reps for t in range(1, T + 1)}
        have = set(zip((int(r) for r in rs.replication), (int(t) for t in rs.t)))
        missing = sorted(want - have)[:10]
        raise DataError(
            f"{what}: incomplete grid — {R} replications x T={T} needs {R * T} records, "
            f"got {len(rs)}; first missing (replication, t): {missing}"
        )
    rep_index = {int(r): i for i, r in enumerate(reps)}
    order = np.array([rep_index[int(r)] for r in rs.replication], dtype=np.int64) * T + (
        rs.t - 1
    )
    if len(np.unique(order)) != len(rs):
        raise DataError(f"{what}: duplicate (replication, t) cells")
    return order, R, T


def error_curve(rs: RecordSet) -> ErrorCurve:
    """Squared-error curve of one learner on one scenario.

    The loss at each t is against the noisy observation of the query point.
    Missing (replication, t) cells are a hard error listing the gaps.
    """
    order, R, T = _check_rectangular(rs, f"{rs.learner_id}/{rs.scenario_id}")
    sq = np.empty(R * T)
    sq[order] = (rs.y_pred - rs.y_true) ** 2
    sq = sq.reshape(R, T)
    mse = np.empty(T)
    stderr = np.empty(T)
    for i in range(T):
        mse[i], stderr[i] = _fsum_mean_stderr(sq[:, i])
    return ErrorCurve(
        learner_id=rs.learner_id, scenario_id=rs.scenario_id, mse=mse, stderr=stderr, n_reps=R
    )


def squared_prediction_difference(rs: RecordSet, reference: RecordSet) -> ErrorCurve:
    """Per-t mean squared difference between two learners' predictions.

    Both record sets must cover the same (replication, t) grid on the same
    scenario; misalignment is a hard error.
    """
    if rs.scenario_id != reference.scenario_id:
        raise DataError(
            f"prediction-difference inputs are from different scenarios: "
            f"{rs.scenario_id!r} vs {reference.scenario_id!r}"
        )
    order_a, R_a, T_a = _check_rectangular(rs, rs.learner_id)
    order_b, R_b, T_b = _check_rectangular(reference, reference.learner_id)
    if (R_a, T_a) != (R_b, T_b) or not np.array_equal(
        np.unique(rs.replication), np.unique(reference.replication)
    ):
        raise DataError(
            f"prediction-difference grids misaligned: "
            f"{rs.learner_id} has {R_a}x{T_a}, {reference.learner_id} has {R_b}x{T_b}"
        )
    a = np.empty(R_a * T_a)
    a[order_a] = rs.y_pred
    b = np.empty(R_a * T_a)
    b[order_b] = reference.y_pred
    sq = ((a - b) ** 2).reshape(R_a, T_a)
    spd = np.empty(T_a)
    stderr = np.empty(T_a)
    for i in range(T_a):
        spd[i], stderr[i] = _fsum_mean_stderr(sq[:, i])
    return ErrorCurve(
        learner_id=f"{rs.learner_id}-minus-{reference.learner_id}",
        scenario_id=rs.scenario_id,
        mse=spd,
        stderr=stderr,
        n_reps=R_a,
    )


def sample_complexity(curve: ErrorCurve, r: float) -> float:
    """Fewest demonstrations t with curve value <= r, else INFINITE."""
    if r <= 0:
        raise ValueError(f"requirement must be positive, got {r}")
    hit = np.nonzero(curve.mse <= r)[0]
    return INFINITE if len(hit) == 0 else float(hit[0] + 1)


def reference_quantile(curves, Q: float) -> float:
    """Requirement at quantile order Q from pooled reference errors.

    Pools every curve value of every reference learner and returns the
    linear-interpolated quantile at level (1 - Q): higher Q gives a smaller
    error, i.e. a stricter requirement.
    """
    if not 0.0 < Q < 1.0:
        raise ValueError(f"Q must lie in (0, 1), got {Q}")
    pool = np.concatenate([np.asarray(c.mse, dtype=np.float64) for c in curves]) if curves else np.array([])
    if pool.size == 0:
        raise ValueError("empty reference pool")
    return float(np.quantile(pool, 1.0 - Q, method="linear"))


def performance_ratio(
    b: str,
    scenario_curves: dict[str, ErrorCurve],
    r: float,
    comparison,
) -> float:
    """N_b(r) over the best sample complexity in the comparison set.

    Raises UnattainableRequirement when no comparison member reaches r within
    the horizon (callers drop the scenario and report it); returns INFINITE
    when only the learner itself fails to reach r.
    """
    comparison = tuple(comparison)
    missing = [c for c in (b, *comparison) if c not in scenario_curves]
    if missing:
        raise KeyError(f"no curves for {missing}")
    best = min(sample_complexity(scenario_curves[c], r) for c in comparison)
    if not math.isfinite(best):
        raise UnattainableRequirement(
            f"no member of {comparison} attains r={r:.6g} within the horizon"
        )
    n_b = sample_complexity(scenario_curves[b], r)
    return n_b / best


def _profile_from_ratios(ratios: dict[str, float], tau_grid) -> np.ndarray:
    tau_grid = np.asarray(tau_grid, dtype=np.float64)
    vals = np.array(list(ratios.values()))
    if len(vals) == 0:
        return np.zeros_like(tau_grid)
    finite = vals[np.isfinite(vals)]
    return np.array([(finite <= tau).sum() / len(vals) for tau in tau_grid])


def _assemble(
    b: str,
    Q: float,
    curves_by_scenario: dict[str, dict[str, ErrorCurve]],
    reference,
    comparison,
    tau_grid,
) -> ProfileResult:
    reference = tuple(reference)
    comparison = tuple(comparison)
    ratios: dict[str, float] = {}
    excluded: dict[str, str] = {}
    for sid in sorted(curves_by_scenario):
        curves = curves_by_scenario[sid]
        try:
            r = reference_quantile([curves[ref] for ref in reference], Q)
            ratios[sid] = performance_ratio(b, curves, r, comparison)
        except (UnattainableRequirement, KeyError) as exc:
            excluded[sid] = str(exc)
    if not ratios:
        raise UnattainableRequirement(
            f"every scenario was excluded for learner {b!r} at Q={Q}: {excluded}"
        )
    finite = [v for v in ratios.values() if math.isfinite(v)]
    if finite:
        mpr = math.fsum(finite) / len(finite)
    else:
        mpr = INFINITE
    return ProfileResult(
        learner_id=b,
        Q=Q,
        ratios=ratios,
        mpr=mpr,
        mpr_coverage=len(finite),
        tau_grid=np.asarray(tau_grid, dtype=np.float64),
        profile=_profile_from_ratios(ratios, tau_grid),
        excluded=excluded,
    )


def mean_performance_ratio(
    b: str,
    Q: float,
    curves_by_scenario: dict[str, dict[str, ErrorCurve]],
    reference,
    comparison,
    tau_grid=DEFAULT_TAU_GRID,
) -> ProfileResult:
    """Average finite performance ratio of learner b across scenarios.

    The requirement in each scenario is the reference quantile at order Q;
    scenarios whose requirement no comparison member attains are excluded and
    reported via ``excluded``/``mpr_coverage``.
    """
    return _assemble(b, Q, curves_by_scenario, reference, comparison, tau_grid)


def performance_profile(
    b: str,
    Q: float,
    curves_by_scenario: dict[str, dict[str, ErrorCurve]],
    reference,
    comparison,
    tau_grid=DEFAULT_TAU_GRID,
) -> ProfileResult:
    """Fraction of scenarios with ratio <= tau, on a fixed tau grid.

    Infinite ratios are never counted as achieved but stay in the denominator;
    scenarios with an undefined denominator are dropped with a diagnostic.
    """
    return _assemble(b, Q, curves_by_scenario, reference, comparison, tau_grid)
