"""Risk decomposition, information gains, and the suboptimality bound.

For each step t the next noisy observation has three predictive densities:
the oracle's (Gaussian at the clean target), the hierarchical posterior
mixture's, and — for an external learner supplying point predictions — the
Gaussian centered at the learner's prediction with the noise variance.
Monte-Carlo averages of their log-density gaps give

    bayes_risk[t]  = E[ log p_oracle(y) - log p_mixture(y) ]
    excess_risk[t] = E[ log p_mixture(y) - log p_learner(y) ]

estimated with common random numbers across t, so differences of curve
values are low-variance.  The difference

    mi(N, t) = bayes_risk[N-1] - bayes_risk[N+t]

estimates the information the next t+1 demonstrations carry about the
observation at step N, which is what the suboptimality lower bound needs:
with an excess-risk floor delta_xs holding beyond some step t_bar, a learner
must spend demonstrations until the information gain exceeds the floor.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from iclbench.baselines import (
    SweepResult,
    mixture_log_density,
    oracle_log_density,
    sweep_scenario,
)
from iclbench.environment import Scenario, SeedPolicy
from iclbench.ingest import DataError, RecordSet
from iclbench.metrics import INFINITE, _check_rectangular, _fsum_mean_stderr

__all__ = [
    "RiskCurve",
    "ExcessFloor",
    "SubOptReport",
    "CrudeBoundRow",
    "bayes_risk_curve",
    "excess_risk_curve",
    "mutual_information",
    "fit_excess_floor",
    "suboptimality",
    "lower_bound",
    "necessary_conditions",
    "crude_bound_check",
]

log = logging.getLogger(__name__)


@dataclass
class RiskCurve:
    """Risk estimates over t = 0..T for one scenario (and optional learner).

    ``excess_risk`` entries are NaN where the learner supplied no prediction
    (record-based learners start at t = 1).  ``learner_nll`` and ``oracle_ce``
    are the negated mean log densities of the learner and the oracle on the
    same samples; they make the decomposition identity

        learner_nll - oracle_ce == bayes_risk + excess_risk

    directly checkable.
    """

    scenario_id: str
    bayes_risk: np.ndarray
    bayes_stderr: np.ndarray
    n_reps: int
    learner_id: str | None = None
    excess_risk: np.ndarray | None = None
    excess_stderr: np.ndarray | None = None
    learner_nll: np.ndarray | None = None
    oracle_ce: np.ndarray | None = None
    n_excluded: int = 0

    @property
    def T(self) -> int:
        return len(self.bayes_risk) - 1


@dataclass(frozen=True)
class ExcessFloor:
    """An excess-risk floor: excess_risk >= delta_xs for t >= t_bar."""

    t_bar: int
    delta_xs: float

    def __post_init__(self) -> None:
        if self.t_bar < 0:
            raise ValueError(f"t_bar must be nonnegative, got {self.t_bar}")
        if not self.delta_xs >= 0.0:
            raise ValueError(f"delta_xs must be nonnegative, got {self.delta_xs}")


@dataclass
class SubOptReport:
    """How many extra demonstrations a learner needs to meet requirement q."""

    q: float
    n_bma: float
    subopt: float
    lower_bound: float | None = None
    condition1_holds: bool | None = None
    condition2_holds: bool | None = None


def _curve_stats(values: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    """Columnwise mean/stderr of an (R, T+1) sample matrix, excluding
    non-finite samples (their count is returned)."""
    R, T1 = values.shape
    mean = np.empty(T1)
    stderr = np.empty(T1)
    excluded = 0
    for t in range(T1):
        col = values[:, t]
        finite = col[np.isfinite(col)]
        excluded += R - len(finite)
        if len(finite) == 0:
            mean[t], stderr[t] = math.nan, math.nan
        else:
            mean[t], stderr[t] = _fsum_mean_stderr(finite)
    return mean, stderr, excluded


def bayes_risk_curve(
    s: Scenario,
    n_reps: int | None = None,
    seeds: SeedPolicy | None = None,
    sweep: SweepResult | None = None,
) -> RiskCurve:
    """Monte-Carlo gap between the oracle density and the posterior mixture.

    Passing a precomputed ``sweep`` reuses its arrays (and ignores
    ``n_reps``/``seeds``); otherwise the scenario is swept afresh.
    """
    if sweep is None:
        sweep = sweep_scenario(s, seeds or SeedPolicy(0), n_reps=n_reps)
    gap = oracle_log_density(sweep) - mixture_log_density(sweep)
    bayes, b_se, excluded = _curve_stats(gap)
    return RiskCurve(
        scenario_id=s.id,
        bayes_risk=bayes,
        bayes_stderr=b_se,
        n_reps=sweep.n_reps,
        n_excluded=excluded,
    )


def excess_risk_curve(
    records: RecordSet,
    s: Scenario,
    seeds: SeedPolicy | None = None,
    sweep: SweepResult | None = None,
    replay_tol: float = 1e-9,
) -> RiskCurve:
    """Risk curve for a point-prediction learner given as records.

    Point predictions are read as Gaussian densities with the scenario's noise
    variance.  The records must form a complete grid over replications 0..R-1
    and some prefix of t = 1..T; the matching replications are replayed so the
    mixture and learner densities share every random number.
    """
    if records.scenario_id != s.id:
        raise DataError(
            f"records are for scenario {records.scenario_id!r}, expected {s.id!r}"
        )
    order, R, T_rec = _check_rectangular(records, f"{records.learner_id}/{s.id}")
    if T_rec > s.T:
        raise DataError(f"records extend to t={T_rec} beyond the horizon T={s.T}")
    reps = np.unique(records.replication)
    if reps[0] != 0 or reps[-1] != R - 1:
        raise DataError(
            f"replications must be contiguous from 0, got range [{reps[0]}, {reps[-1]}]"
        )
    if sweep is None:
        sweep = sweep_scenario(s, seeds or SeedPolicy(0), n_reps=R)
    elif sweep.n_reps < R:
        raise ValueError(f"sweep covers {sweep.n_reps} replications, records need {R}")

    y_pred = np.empty(R * T_rec)
    y_pred[order] = records.y_pred
    y_pred = y_pred.reshape(R, T_rec)
    y_true = np.empty(R * T_rec)
    y_true[order] = records.y_true
    y_true = y_true.reshape(R, T_rec)
    if np.max(np.abs(y_true - sweep.ys[:R, 1 : T_rec + 1])) > replay_tol:
        raise DataError(
            f"{records.learner_id}/{s.id}: y_true disagrees with the environment replay"
        )

    eps = s.sigma_eps_sq
    mix_lp = mixture_log_density(sweep)[:R]
    ora_lp = oracle_log_density(sweep)[:R]
    learner_lp = np.full_like(mix_lp, math.nan)
    learner_lp[:, 1 : T_rec + 1] = (
        -0.5 * (math.log(2.0 * math.pi * eps)) - 0.5 * (y_true - y_pred) ** 2 / eps
    )

    bayes, b_se, excl_b = _curve_stats(ora_lp - mix_lp)
    excess, x_se, _ = _curve_stats(mix_lp - learner_lp)
    nll, _, _ = _curve_stats(-learner_lp)
    oce, _, _ = _curve_stats(-ora_lp)
    return RiskCurve(
        scenario_id=s.id,
        bayes_risk=bayes,
        bayes_stderr=b_se,
        n_reps=R,
        learner_id=records.learner_id,
        excess_risk=excess,
        excess_stderr=x_se,
        learner_nll=nll,
        oracle_ce=oce,
        n_excluded=excl_b,
    )


def mutual_information(curve: RiskCurve, N: int, t: int) -> float:
    """Estimated information the next t+1 demonstrations carry about the
    observation at step N: the drop in Bayes risk between steps N-1 and N+t."""
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if t < 0 or N + t > curve.T:
        raise ValueError(f"need 0 <= t and N + t <= T={curve.T}, got N={N}, t={t}")
    return float(curve.bayes_risk[N - 1] - curve.bayes_risk[N + t])


def _smooth_median(values: np.ndarray, window: int = 5) -> np.ndarray:
    """Centered running median; edge windows shrink, NaNs pass through."""
    half = window // 2
    out = np.full_like(values, math.nan)
    for i in range(len(values)):
        lo, hi = max(0, i - half), min(len(values), i + half + 1)
        win = values[lo:hi]
        win = win[np.isfinite(win)]
        if len(win):
            out[i] = np.median(win)
    return out


def fit_excess_floor(curve: RiskCurve, t_bar: int | None = None, window: int = 5) -> ExcessFloor:
    """Empirical excess-risk floor: minimum of the median-smoothed excess
    curve over t >= t_bar (default t_bar = min(100, T)), clamped at zero.

    Median smoothing keeps single-step dips from dragging the floor down;
    the result is a conservative plateau estimate, not a verified bound.
    """
    if curve.excess_risk is None:
        raise ValueError("curve has no excess-risk component to fit a floor to")
    if t_bar is None:
        t_bar = min(100, curve.T)
    if not 0 <= t_bar <= curve.T:
        raise ValueError(f"t_bar must lie in [0, T={curve.T}], got {t_bar}")
    smoothed = _smooth_median(curve.excess_risk, window=window)
    tail = smoothed[t_bar:]
    tail = tail[np.isfinite(tail)]
    if len(tail) == 0:
        raise ValueError(f"no finite excess-risk values at t >= {t_bar}")
    return ExcessFloor(t_bar=t_bar, delta_xs=max(float(tail.min()), 0.0))


def _first_at_or_below(values: np.ndarray, q: float) -> float:
    # The comparison tolerates 1e-12 relative slack so that analytic boundary
    # cases (e.g. 1/sqrt(25) + 0.1 vs 0.3, which differ by one ulp in float64)
    # resolve as real arithmetic dictates; Monte-Carlo curves sit far from
    # this scale.
    ok = np.isfinite(values) & (values <= q + 1e-12 * abs(q))
    hit = np.nonzero(ok)[0]
    return INFINITE if len(hit) == 0 else float(hit[0])


def suboptimality(q: float, curve: RiskCurve, floor: ExcessFloor | None = None) -> SubOptReport:
    """Extra demonstrations the learner needs beyond the Bayes-risk curve
    to push its total risk under q; optionally with the information-theoretic
    lower bound and the two necessary-condition checks."""
    if q <= 0:
        raise ValueError(f"q must be positive, got {q}")
    n_bma = _first_at_or_below(curve.bayes_risk, q)
    if curve.excess_risk is None:
        raise ValueError("curve has no excess-risk component")
    total = curve.bayes_risk + curve.excess_risk
    n_total = _first_at_or_below(total, q)
    if math.isinf(n_bma) or math.isinf(n_total):
        subopt = INFINITE
    else:
        subopt = n_total - n_bma
    report = SubOptReport(q=q, n_bma=n_bma, subopt=subopt)
    if floor is not None:
        report.lower_bound = lower_bound(q, floor, curve)
        report.condition1_holds, report.condition2_holds = necessary_conditions(q, floor, curve)
    return report


def lower_bound(q: float, floor: ExcessFloor, curve: RiskCurve) -> float:
    """Fewest extra demonstrations t with mi(N(q), t) above the excess floor.

    N(q) is the Bayes-risk sample complexity of q.  Returns 0 when N(q) = 0
    (nothing to bound) and INFINITE when the information gain never clears
    delta_xs within the horizon, or when q itself is never reached.
    """
    n_bma = _first_at_or_below(curve.bayes_risk, q)
    if math.isinf(n_bma):
        log.info("lower_bound: requirement q=%g unattained within T=%d", q, curve.T)
        return INFINITE
    N = int(n_bma)
    if N == 0:
        return 0.0
    if N < floor.t_bar:
        raise ValueError(
            f"precondition violated: N(q)={N} < t_bar={floor.t_bar}; the floor does "
            f"not apply at the requirement's sample complexity"
        )
    for t in range(0, curve.T - N + 1):
        if mutual_information(curve, N, t) > floor.delta_xs:
            return float(t)
    log.info(
        "lower_bound: information gain never exceeds delta_xs=%g within T=%d for q=%g",
        floor.delta_xs, curve.T, q,
    )
    return INFINITE


def necessary_conditions(q: float, floor: ExcessFloor, curve: RiskCurve) -> tuple[bool, bool]:
    """Two checks that must hold for the lower bound to be vacuous or tight.

    condition1 ("negligible excess risk"): the floor is below every one-step
    information gain beyond N(q), and the lower bound is 0.
    condition2 ("negligible diminishing returns"): with L = lower bound > 0
    and t~ = N(q) + L, the one-step gain at t~ is within a (1 + 1/L) factor
    of every later one-step gain.
    """
    n_bma = _first_at_or_below(curve.bayes_risk, q)
    if math.isinf(n_bma):
        return False, False
    N = int(n_bma)
    lb = lower_bound(q, floor, curve)
    if math.isinf(lb):
        log.info("necessary_conditions: lower bound infinite at q=%g", q)
        return False, False
    one_step = lambda t: float(curve.bayes_risk[t - 1] - curve.bayes_risk[t])
    ts = range(max(N, 1), curve.T + 1)
    if lb == 0:
        condition1 = all(floor.delta_xs <= one_step(t) for t in ts)
        return condition1, False
    t_tilde = N + int(lb)
    if t_tilde > curve.T:
        return False, False
    gain_tilde = one_step(t_tilde)
    condition2 = all(gain_tilde < (1.0 + 1.0 / lb) * one_step(t) for t in ts)
    return False, condition2


@dataclass(frozen=True)
class CrudeBoundRow:
    q: float
    subopt: float
    bound: float
    holds: bool


def crude_bound_check(
    C1: float,
    eps_xs: float,
    q_grid,
    strict: bool = True,
) -> list[CrudeBoundRow]:
    """Evaluate the closed-form suboptimality bound on synthetic curves.

    Under bayes_risk[t] = C1/sqrt(t) and a constant excess risk eps_xs, the
    suboptimality at q must be at least C1^2 eps_xs / (q^2 (q - eps_xs)) - 1
    (the -1 absorbs integer rounding).  Raises on violation when strict.
    """
    q_grid = [float(q) for q in q_grid]
    if any(q <= eps_xs for q in q_grid):
        raise ValueError(f"every q must exceed eps_xs={eps_xs}")
    if eps_xs < 0 or C1 <= 0:
        raise ValueError("need C1 > 0 and eps_xs >= 0")
    horizon = 2 + max(
        int(math.ceil((C1 / (q - eps_xs)) ** 2)) for q in q_grid
    )
    ts = np.arange(horizon + 1, dtype=np.float64)
    with np.errstate(divide="ignore"):
        bayes = C1 / np.sqrt(ts)  # index 0 is +inf: no demonstrations, no bound
    curve = RiskCurve(
        scenario_id=f"synthetic-C1={C1:g}",
        bayes_risk=bayes,
        bayes_stderr=np.zeros_like(bayes),
        n_reps=1,
        learner_id="synthetic-floor",
        excess_risk=np.full_like(bayes, eps_xs),
        excess_stderr=np.zeros_like(bayes),
    )
    rows = []
    for q in q_grid:
        rep = suboptimality(q, curve)
        bound = C1**2 * eps_xs / (q**2 * (q - eps_xs)) - 1.0
        rows.append(CrudeBoundRow(q=q, subopt=rep.subopt, bound=bound, holds=rep.subopt >= bound))
    if strict and not all(r.holds for r in rows):
        bad = [r for r in rows if not r.holds]
        raise ValueError(f"crude bound violated at {bad}")
    return rows
