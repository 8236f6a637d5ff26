"""Risk curves, information gains, and the suboptimality machinery.

The analytic anchors here are exact: Gaussian KL divergences for the
single-class scenario, and closed-form 1/sqrt(t) curves for the bound
arithmetic (whose integer answers were computed by hand).
"""

import logging
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from iclbench.baselines import (
    mixture_log_density,
    oracle_log_density,
    sweep_scenario,
    to_records,
)
from iclbench.environment import Scenario, SeedPolicy
from iclbench.ingest import DataError
from iclbench.metrics import INFINITE
from iclbench.riskinfo import (
    CrudeBoundRow,
    ExcessFloor,
    RiskCurve,
    bayes_risk_curve,
    crude_bound_check,
    excess_risk_curve,
    fit_excess_floor,
    lower_bound,
    mutual_information,
    necessary_conditions,
    suboptimality,
)

SEEDS = SeedPolicy(master_seed=0)


def _curve(bayes, excess=None, scenario_id="syn"):
    bayes = np.asarray(bayes, dtype=np.float64)
    kw = {}
    if excess is not None:
        excess = np.asarray(excess, dtype=np.float64)
        kw = dict(
            learner_id="syn-learner",
            excess_risk=excess,
            excess_stderr=np.zeros_like(excess),
        )
    return RiskCurve(
        scenario_id=scenario_id,
        bayes_risk=bayes,
        bayes_stderr=np.zeros_like(bayes),
        n_reps=1,
        **kw,
    )


def _inv_sqrt_curve(T, excess_const=0.1):
    """bayes[t] = 1/sqrt(t) with a constant excess risk."""
    bayes = np.empty(T + 1)
    bayes[0] = 10.0
    ts = np.arange(1, T + 1, dtype=np.float64)
    bayes[1:] = 1.0 / np.sqrt(ts)
    return _curve(bayes, np.full(T + 1, excess_const))


class TestMutualInformation:
    def test_telescoping_identity(self):
        rng = np.random.default_rng(3)
        bayes = np.sort(rng.uniform(0, 1, size=21))[::-1].copy()
        c = _curve(bayes)
        for N in (1, 3, 7):
            for t in (0, 2, 5):
                lhs = mutual_information(c, N, t)
                rhs = sum(
                    mutual_information(c, N + i, 0) for i in range(t + 1)
                )
                assert_allclose(lhs, rhs, atol=1e-12)

    def test_one_step_is_adjacent_difference(self):
        c = _curve([5.0, 3.0, 2.0, 1.5])
        assert mutual_information(c, 1, 0) == 2.0
        assert mutual_information(c, 2, 1) == 1.5

    def test_bounds_enforced(self):
        c = _curve([1.0, 0.5, 0.25])
        with pytest.raises(ValueError, match="N must be"):
            mutual_information(c, 0, 0)
        with pytest.raises(ValueError, match="N \\+ t"):
            mutual_information(c, 2, 1)
        with pytest.raises(ValueError):
            mutual_information(c, 1, -1)


class TestSuboptimalityArithmetic:
    """Closed-form 1/sqrt(t) curves: the integer answers are hand-derived."""

    def test_inv_sqrt_at_q_point3(self):
        c = _inv_sqrt_curve(T=200, excess_const=0.1)
        rep = suboptimality(0.3, c)
        # 1/sqrt(t) <= 0.3 first at t = 12; 1/sqrt(t) + 0.1 <= 0.3 first at
        # t = 25 (the t = 25 value exceeds 0.3 by one ulp, which the
        # threshold's relative slack absorbs, as real arithmetic requires)
        assert rep.n_bma == 12.0
        assert rep.subopt == 13.0

    def test_lower_bound_matches_hand_value(self):
        c = _inv_sqrt_curve(T=200, excess_const=0.1)
        floor = ExcessFloor(t_bar=1, delta_xs=0.1)
        # smallest t with 1/sqrt(11) - 1/sqrt(12 + t) > 0.1 is t = 13
        assert lower_bound(0.3, floor, c) == 13.0

    def test_lower_bound_never_exceeds_suboptimality(self):
        c = _inv_sqrt_curve(T=400, excess_const=0.1)
        floor = ExcessFloor(t_bar=1, delta_xs=0.1)
        for q in np.linspace(0.12, 0.9, 10):
            rep = suboptimality(q, c, floor=floor)
            assert rep.lower_bound <= rep.subopt

    def test_lower_bound_nonincreasing_in_q(self):
        c = _inv_sqrt_curve(T=400, excess_const=0.1)
        floor = ExcessFloor(t_bar=1, delta_xs=0.1)
        lbs = [lower_bound(q, floor, c) for q in np.linspace(0.12, 0.9, 10)]
        assert all(a >= b for a, b in zip(lbs, lbs[1:]))

    def test_easy_requirement_gives_zero_bound(self):
        c = _inv_sqrt_curve(T=50)
        floor = ExcessFloor(t_bar=0, delta_xs=0.1)
        # q = 20 is met before any demonstration arrives (bayes[0] = 10)
        assert lower_bound(20.0, floor, c) == 0.0

    def test_unattained_requirement(self, caplog):
        c = _inv_sqrt_curve(T=50)
        floor = ExcessFloor(t_bar=1, delta_xs=0.1)
        with caplog.at_level(logging.INFO, logger="iclbench.riskinfo"):
            assert lower_bound(0.01, floor, c) == INFINITE
        assert "unattained" in caplog.text
        rep = suboptimality(0.01, c)
        assert rep.n_bma == INFINITE and rep.subopt == INFINITE

    def test_floor_not_applicable_raises(self):
        c = _inv_sqrt_curve(T=50)
        floor = ExcessFloor(t_bar=30, delta_xs=0.1)
        with pytest.raises(ValueError, match="precondition"):
            lower_bound(0.3, floor, c)  # N(0.3) = 12 < t_bar

    def test_gain_never_clears_floor(self, caplog):
        c = _curve([1.0, 0.5, 0.45, 0.44], [0.0, 0.0, 0.0, 0.0])
        floor = ExcessFloor(t_bar=1, delta_xs=0.5)
        with caplog.at_level(logging.INFO, logger="iclbench.riskinfo"):
            assert lower_bound(0.45, floor, c) == INFINITE
        assert "never exceeds" in caplog.text

    def test_attained_bayes_unattained_total(self):
        c = _curve([1.0, 0.2, 0.15], [0.5, 0.5, 0.5])
        rep = suboptimality(0.3, c)
        assert rep.n_bma == 1.0
        assert rep.subopt == INFINITE

    def test_nonpositive_q_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            suboptimality(0.0, _inv_sqrt_curve(T=5))

    def test_report_carries_bound_and_conditions(self):
        c = _inv_sqrt_curve(T=200, excess_const=0.1)
        floor = ExcessFloor(t_bar=1, delta_xs=0.1)
        rep = suboptimality(0.3, c, floor=floor)
        assert rep.lower_bound == 13.0
        assert rep.condition1_holds is False
        assert isinstance(rep.condition2_holds, bool)


class TestNecessaryConditions:
    def test_condition1_on_steep_curve(self):
        # every one-step gain beats the floor, and the bound is zero
        c = _curve([1.0, 0.5, 0.25, 0.2, 0.15, 0.1], [0.01] * 6)
        floor = ExcessFloor(t_bar=0, delta_xs=0.01)
        cond1, cond2 = necessary_conditions(0.5, floor, c)
        assert cond1 is True and cond2 is False

    def test_condition1_fails_on_flat_tail(self):
        c = _curve([1.0, 0.5, 0.499, 0.498], [0.01] * 4)
        floor = ExcessFloor(t_bar=0, delta_xs=0.01)
        cond1, cond2 = necessary_conditions(0.5, floor, c)
        assert cond1 is False and cond2 is False

    def test_condition2_horizon_sensitivity(self):
        # at T = 26 the one-step gain at t~ = 25 is within (1 + 1/13) of every
        # later gain; at T = 40 the late gains are too small and it fails
        floor = ExcessFloor(t_bar=1, delta_xs=0.1)
        tight = _inv_sqrt_curve(T=26, excess_const=0.1)
        assert necessary_conditions(0.3, floor, tight) == (False, True)
        wide = _inv_sqrt_curve(T=40, excess_const=0.1)
        assert necessary_conditions(0.3, floor, wide) == (False, False)

    def test_unattained_gives_false_false(self):
        c = _inv_sqrt_curve(T=20)
        floor = ExcessFloor(t_bar=1, delta_xs=0.1)
        assert necessary_conditions(0.001, floor, c) == (False, False)


class TestExcessFloorFit:
    def test_median_smoothing_absorbs_single_dip(self):
        excess = np.full(11, 0.5)
        excess[0] = math.nan
        excess[5] = 0.0
        c = _curve(np.ones(11), excess)
        floor = fit_excess_floor(c, t_bar=1)
        assert floor.delta_xs == 0.5
        assert floor.t_bar == 1

    def test_negative_floor_clamped(self):
        c = _curve(np.ones(6), np.full(6, -0.2))
        assert fit_excess_floor(c, t_bar=0).delta_xs == 0.0

    def test_default_t_bar(self):
        c = _curve(np.ones(31), np.full(31, 0.3))
        assert fit_excess_floor(c).t_bar == 30
        c_long = _curve(np.ones(301), np.full(301, 0.3))
        assert fit_excess_floor(c_long).t_bar == 100

    def test_requires_excess_component(self):
        with pytest.raises(ValueError, match="excess"):
            fit_excess_floor(_curve(np.ones(5)))

    def test_t_bar_out_of_range(self):
        c = _curve(np.ones(5), np.full(5, 0.1))
        with pytest.raises(ValueError, match="t_bar"):
            fit_excess_floor(c, t_bar=9)

    def test_floor_validation(self):
        with pytest.raises(ValueError):
            ExcessFloor(t_bar=-1, delta_xs=0.1)
        with pytest.raises(ValueError):
            ExcessFloor(t_bar=0, delta_xs=-0.1)
        with pytest.raises(ValueError):
            ExcessFloor(t_bar=0, delta_xs=math.nan)


class TestCrudeBound:
    def test_holds_on_grid(self):
        rows = crude_bound_check(1.0, 0.1, np.linspace(0.12, 0.9, 10))
        assert len(rows) == 10
        assert all(isinstance(r, CrudeBoundRow) and r.holds for r in rows)
        assert all(r.subopt >= r.bound for r in rows)

    def test_other_constants(self):
        rows = crude_bound_check(2.5, 0.05, [0.2, 0.5, 1.0])
        assert all(r.holds for r in rows)

    def test_q_below_floor_rejected(self):
        with pytest.raises(ValueError, match="exceed"):
            crude_bound_check(1.0, 0.1, [0.05])

    def test_bad_constants_rejected(self):
        with pytest.raises(ValueError):
            crude_bound_check(-1.0, 0.1, [0.5])


M1_SCENARIO = Scenario(
    id="risk-m1", M=1, sigma_w_sq=1.0, sigma_eps_sq=0.2, T=30, replications=256
)

INT_SCENARIO = Scenario(
    id="risk-int", M=3, sigma_w_sq=1.0, sigma_eps_sq=0.1, T=25, replications=128
)


@pytest.fixture(scope="module")
def m1_sweep():
    return sweep_scenario(M1_SCENARIO, SEEDS)


@pytest.fixture(scope="module")
def int_sweep():
    return sweep_scenario(INT_SCENARIO, SEEDS)


class TestBayesRiskOnSingleClass:
    """With M = 1 the mixture is one Gaussian, so the risk has a closed
    conditional form: the Gaussian KL divergence given the demonstrations."""

    def test_sampled_gap_matches_analytic_kl(self, m1_sweep):
        s = M1_SCENARIO
        eps = s.sigma_eps_sq
        mu = m1_sweep.class_pred[0]
        v = m1_sweep.class_var[0]
        kl = 0.5 * (
            np.log(v / eps) + eps / v + (m1_sweep.ys_clean - mu) ** 2 / v - 1.0
        )
        gap = oracle_log_density(m1_sweep) - mixture_log_density(m1_sweep)
        # conditional on the demonstrations, the gap's expectation over the
        # next observation is exactly the KL; the residual is mean-zero noise
        noise = gap - kl
        R = s.replications
        for t in range(s.T + 1):
            col = noise[:, t]
            se = col.std(ddof=1) / math.sqrt(R)
            assert abs(col.mean()) <= 5.0 * se + 1e-12

    def test_curve_is_columnwise_mean(self, m1_sweep):
        rc = bayes_risk_curve(M1_SCENARIO, sweep=m1_sweep)
        gap = oracle_log_density(m1_sweep) - mixture_log_density(m1_sweep)
        assert_allclose(rc.bayes_risk, gap.mean(axis=0), rtol=1e-12)
        assert rc.n_reps == 256
        assert rc.T == 30

    def test_risk_decreases_with_demonstrations(self, m1_sweep):
        rc = bayes_risk_curve(M1_SCENARIO, sweep=m1_sweep)
        assert rc.bayes_risk[30] < rc.bayes_risk[0]

    def test_fresh_sweep_reproduces(self):
        a = bayes_risk_curve(M1_SCENARIO, n_reps=16, seeds=SEEDS)
        b = bayes_risk_curve(M1_SCENARIO, n_reps=16, seeds=SEEDS)
        assert_array_equal(a.bayes_risk, b.bayes_risk)


class TestExcessRiskCurve:
    def test_decomposition_identity(self, int_sweep):
        rs = to_records(int_sweep, "BMC")
        rc = excess_risk_curve(rs, INT_SCENARIO, sweep=int_sweep)
        lhs = rc.learner_nll[1:] - rc.oracle_ce[1:]
        rhs = rc.bayes_risk[1:] + rc.excess_risk[1:]
        assert_allclose(lhs, rhs, atol=1e-10)

    def test_record_learners_start_at_t1(self, int_sweep):
        rc = excess_risk_curve(to_records(int_sweep, "AIC"), INT_SCENARIO, sweep=int_sweep)
        assert math.isnan(rc.excess_risk[0])
        assert math.isnan(rc.excess_stderr[0])
        assert np.all(np.isfinite(rc.excess_risk[1:]))

    def test_oracle_learner_cancels_bayes_risk(self, int_sweep):
        # the oracle's density IS the reference density, so its excess risk
        # is the negated Bayes risk sample by sample
        rc = excess_risk_curve(to_records(int_sweep, "ORACLE"), INT_SCENARIO, sweep=int_sweep)
        assert_allclose(rc.bayes_risk[1:] + rc.excess_risk[1:], 0.0, atol=1e-12)

    def test_bma_excess_small_next_to_selectors(self, int_sweep):
        bma = excess_risk_curve(to_records(int_sweep, "BMA"), INT_SCENARIO, sweep=int_sweep)
        ens = excess_risk_curve(to_records(int_sweep, "ENSEMBLE"), INT_SCENARIO, sweep=int_sweep)
        # averaged over the later half of the horizon the mixture mean has to
        # beat the unweighted ensemble in this well-identified regime
        assert np.nanmean(bma.excess_risk[10:]) < np.nanmean(ens.excess_risk[10:])

    def test_shared_randomness_with_bayes_curve(self, int_sweep):
        rc = excess_risk_curve(to_records(int_sweep, "BMA"), INT_SCENARIO, sweep=int_sweep)
        base = bayes_risk_curve(INT_SCENARIO, sweep=int_sweep)
        assert_array_equal(rc.bayes_risk, base.bayes_risk)

    def test_wrong_scenario_rejected(self, int_sweep):
        rs = to_records(int_sweep, "BMA")
        with pytest.raises(DataError, match="expected"):
            excess_risk_curve(rs, M1_SCENARIO, sweep=int_sweep)

    def test_replay_mismatch_rejected(self, int_sweep):
        rs = to_records(int_sweep, "BMA")
        rs.y_true = rs.y_true.copy()
        rs.y_true[0] += 1e-3
        with pytest.raises(DataError, match="replay"):
            excess_risk_curve(rs, INT_SCENARIO, sweep=int_sweep)

    def test_prefix_horizon_allowed(self, int_sweep):
        rs = to_records(int_sweep, "BMA")
        keep = rs.t <= 10
        short = type(rs)(
            learner_id=rs.learner_id,
            scenario_id=rs.scenario_id,
            replication=rs.replication[keep],
            t=rs.t[keep],
            x_query=rs.x_query[keep],
            y_true=rs.y_true[keep],
            y_pred=rs.y_pred[keep],
        )
        rc = excess_risk_curve(short, INT_SCENARIO, sweep=int_sweep)
        assert np.all(np.isfinite(rc.excess_risk[1:11]))
        assert np.all(np.isnan(rc.excess_risk[11:]))

    def test_undersized_sweep_rejected(self, int_sweep):
        rs = to_records(int_sweep, "BMA")
        small = sweep_scenario(INT_SCENARIO, SEEDS, n_reps=4)
        with pytest.raises(ValueError, match="replications"):
            excess_risk_curve(rs, INT_SCENARIO, sweep=small)

    def test_floor_fit_on_real_curve(self, int_sweep):
        rc = excess_risk_curve(to_records(int_sweep, "BIC"), INT_SCENARIO, sweep=int_sweep)
        floor = fit_excess_floor(rc, t_bar=15)
        assert floor.delta_xs >= 0.0
        assert math.isfinite(floor.delta_xs)
