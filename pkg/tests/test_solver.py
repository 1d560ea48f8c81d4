import math

import numpy as np
import pytest

from grid_oracle import kl_ball_max, tv_ball_max
from infokernel.functionals import ExtendedKL, NegEntropy, TotalVariation
from infokernel.solver import (
    BoundednessReport,
    InfeasibleError,
    NonConvexDualError,
    check_f_bounded,
    classify_partial_sums,
    lower_branch,
    solution_at_beta,
    solve_for_lambda,
    solve_for_upsilon,
    solve_tv,
    special_values,
    value_curve,
)
from infokernel.spaces import FiniteSpace, JointSpace, Measure, ProbMeasure, Utility, pair

SP3 = FiniteSpace.of_size(3)
UNIFORM3 = ProbMeasure.uniform(SP3)
X012 = Utility(SP3, np.array([0.0, 1.0, 2.0]))
KL3 = ExtendedKL(Measure(SP3, UNIFORM3.weights), mode="simplex")


def kl_simplex(space, weights):
    return ExtendedKL(Measure(space, np.asarray(weights, float)), mode="simplex")


class TestSolveForLambda:
    def test_zero_budget_returns_reference(self):
        sol = solve_for_lambda(X012, KL3, 0.0)
        assert np.allclose(sol.measure.weights, UNIFORM3.weights, atol=1e-12)
        assert sol.upsilon == pytest.approx(1.0)
        assert sol.beta == 0.0

    def test_constant_utility_flat_flag(self):
        flat = Utility(SP3, np.array([2.5, 2.5, 2.5]))
        for lam in (0.0, 0.3, 5.0):
            sol = solve_for_lambda(flat, KL3, lam)
            assert sol.flat_objective
            assert np.allclose(sol.measure.weights, UNIFORM3.weights)
            assert sol.upsilon == pytest.approx(2.5)

    def test_three_point_against_grid_oracle(self):
        lam = 0.3
        sol = solve_for_lambda(X012, KL3, lam)
        oracle = kl_ball_max(X012.values, UNIFORM3.weights, lam)
        assert sol.upsilon == pytest.approx(oracle, abs=1e-3)
        assert sol.info == pytest.approx(lam, abs=1e-8)

    def test_budget_below_minimum_rejected(self):
        with pytest.raises(InfeasibleError):
            solve_for_lambda(X012, KL3, -0.01)

    def test_saturation_at_lambda_bar(self):
        sol = solve_for_lambda(X012, KL3, math.log(3))
        assert sol.saturated
        assert sol.upsilon == pytest.approx(2.0)
        sol = solve_for_lambda(X012, KL3, 10.0)
        assert sol.saturated and sol.upsilon == pytest.approx(2.0)

    def test_tv_routed_away(self):
        with pytest.raises(NonConvexDualError):
            solve_for_lambda(X012, TotalVariation(Measure(SP3, UNIFORM3.weights)), 0.3)

    def test_argmax_tie_spreads_reference_mass(self):
        x = Utility(SP3, np.array([0.0, 1.0, 1.0]))
        q = kl_simplex(SP3, [0.5, 0.3, 0.2])
        sol = solve_for_lambda(x, q, 10.0)
        assert sol.saturated
        assert np.allclose(sol.measure.weights, [0.0, 0.6, 0.4])


class TestSolveForUpsilon:
    def test_trivial_value_gives_beta_zero(self):
        sol = solve_for_upsilon(X012, KL3, 1.0)
        assert sol.beta == 0.0
        assert sol.info == pytest.approx(0.0, abs=1e-12)

    def test_below_trivial_value_notes_beta_zero(self):
        sol = solve_for_upsilon(X012, KL3, 0.2)
        assert sol.beta == 0.0 and "beta = 0" in sol.note

    def test_above_optimum_rejected(self):
        with pytest.raises(InfeasibleError):
            solve_for_upsilon(X012, KL3, 2.5)

    def test_approaching_the_cap_drives_info_to_lambda_bar(self):
        sol = solve_for_upsilon(X012, KL3, 2.0 - 1e-6)
        assert sol.info == pytest.approx(math.log(3), abs=1e-3)

    def test_binary_symmetric_closed_form(self):
        # 2x2 agreement utility as a 4-point simplex instance: beta = ln 9 at 0.9
        joint = JointSpace(FiniteSpace.of_size(2, "a"), FiniteSpace.of_size(2, "b"))
        flat = joint.flat
        x = Utility(flat, np.array([1.0, 0.0, 0.0, 1.0]))
        f = kl_simplex(flat, np.full(4, 0.25))
        sol = solve_for_upsilon(x, f, 0.9)
        assert sol.beta == pytest.approx(math.log(9), abs=1e-6)
        assert sol.upsilon == pytest.approx(0.9, abs=1e-9)

    def test_info_is_minimal_budget(self):
        sol = solve_for_upsilon(X012, KL3, 1.5)
        back = solve_for_lambda(X012, KL3, sol.info)
        assert back.upsilon == pytest.approx(1.5, abs=1e-7)

    def test_multiplier_nondecreasing_in_value(self):
        targets = np.linspace(1.0, 1.95, 12)
        betas = [solve_for_upsilon(X012, KL3, u).beta for u in targets]
        assert all(b >= a - 1e-12 for a, b in zip(betas, betas[1:]))


class TestLowerBranch:
    def test_symmetric_utility_reflects(self):
        # x symmetric about its mean under uniform q: lower = 2<x,q> - upper
        for lam in (0.05, 0.2, 0.5):
            up = solve_for_lambda(X012, KL3, lam)
            lo = lower_branch(X012, KL3, lam)
            assert lo.upsilon == pytest.approx(2.0 * 1.0 - up.upsilon, abs=1e-9)

    def test_zero_budget(self):
        lo = lower_branch(X012, KL3, 0.0)
        assert np.allclose(lo.measure.weights, UNIFORM3.weights, atol=1e-12)

    def test_against_grid_oracle_minimizing(self):
        lam = 0.3
        lo = lower_branch(X012, KL3, lam)
        oracle = kl_ball_max(X012.values, UNIFORM3.weights, lam, maximize=False)
        assert lo.upsilon == pytest.approx(oracle, abs=1e-3)


class TestValueCurve:
    def test_single_point(self):
        curve = value_curve(X012, KL3, [0.0])
        assert curve.samples[0].upsilon == pytest.approx(1.0)
        assert curve.samples[0].beta_inverse == math.inf

    def test_shape_on_grid(self):
        grid = np.linspace(0, math.log(3), 30)
        curve = value_curve(X012, KL3, grid)
        ups = curve.upsilons
        assert np.all(np.diff(ups) > 0)                      # strictly increasing
        assert np.all(np.diff(ups, 2) <= 1e-9)               # concave
        binv = curve.beta_inverses
        assert np.all(np.diff(binv) <= 1e-12)                # multiplier monotone
        lower = value_curve(X012, KL3, grid, branch="lower")
        assert np.all(np.diff(lower.upsilons) < 0)
        assert np.all(np.diff(lower.upsilons, 2) >= -1e-9)   # convex

    def test_beyond_lambda_bar_saturates(self):
        curve = value_curve(X012, KL3, [0.1, math.log(3) + 0.5])
        assert curve.samples[-1].saturated
        assert curve.samples[-1].upsilon == pytest.approx(2.0)

    def test_threaded_run_is_bit_identical(self):
        grid = np.linspace(0.01, 1.0, 12)
        seq = value_curve(X012, KL3, grid)
        par = value_curve(X012, KL3, grid, threads=4)
        assert [s.upsilon for s in seq.samples] == [s.upsilon for s in par.samples]
        assert ([s.beta_inverse for s in seq.samples]
                == [s.beta_inverse for s in par.samples])

    def test_multiplier_limits(self):
        near_zero = solution_at_beta(X012, KL3, 1e-8)
        assert np.abs(near_zero.measure.weights - UNIFORM3.weights).sum() < 1e-6
        frozen = solution_at_beta(X012, KL3, 1e3)
        off_argmax = frozen.measure.weights[:2].sum()
        assert off_argmax < 1e-6
        assert frozen.info == pytest.approx(math.log(3), abs=1e-4)


class TestSpecialValues:
    def test_uniform_three_point(self):
        sv = special_values(X012, KL3)
        assert sv.lambda0 == pytest.approx(0.0, abs=1e-15)
        assert sv.upsilon_bar == 2.0
        assert sv.upsilon0_upper == pytest.approx(1.0)
        assert sv.lambda_bar_upper == pytest.approx(math.log(3))

    def test_constant_utility_degenerate(self):
        flat = Utility(SP3, np.full(3, 1.5))
        sv = special_values(flat, KL3)
        assert sv.upsilon_bar == sv.upsilon0_upper == sv.upsilon_under == 1.5
        assert sv.lambda_bar_upper == pytest.approx(sv.lambda0, abs=1e-12)

    def test_skewed_reference(self):
        f = kl_simplex(SP3, [0.5, 0.25, 0.25])
        sv = special_values(X012, f)
        assert sv.lambda_bar_upper == pytest.approx(math.log(4))

    def test_ordering_invariants(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            q = rng.uniform(0.05, 1, 3)
            f = kl_simplex(SP3, q / q.sum())
            x = Utility(SP3, rng.uniform(-1, 1, 3))
            sv = special_values(x, f)
            assert sv.lambda0 <= sv.lambda_bar_upper + 1e-12
            assert sv.upsilon0_lower <= sv.upsilon0_upper + 1e-12
            assert sv.upsilon0_upper <= sv.upsilon_bar + 1e-12

    def test_cone_mode_endpoints(self):
        f = ExtendedKL(Measure(SP3, np.array([0.2, 0.3, 0.5])), mode="cone")
        sv = special_values(X012, f)
        assert sv.lambda0 == pytest.approx(0.0, abs=1e-15)
        assert sv.upsilon_bar == math.inf  # positive directions are unbounded on the cone
        negative = Utility(SP3, np.array([-1.0, -2.0, 0.0]))
        sv2 = special_values(negative, f)
        assert sv2.upsilon_bar == 0.0
        assert sv2.lambda_bar_upper == pytest.approx(0.5)  # mass off the zero set


class TestConeMode:
    def test_lagrangian_duality_identity(self):
        # <x, y_beta> = (1/beta) [F*(beta x) - <1,y0> + F(y_beta)], random instances
        rng = np.random.default_rng(5)
        for _ in range(25):
            y0 = Measure(SP3, rng.uniform(0.1, 2, 3))
            f = ExtendedKL(y0, mode="cone")
            x = Utility(SP3, rng.uniform(-2, 2, 3))
            beta = rng.uniform(0.1, 3)
            sol = solution_at_beta(x, f, beta)
            exact_conjugate = f.dual_evaluate(Utility(SP3, beta * x.values)) - f.dual_constant
            rhs = (exact_conjugate + f.evaluate(sol.measure)) / beta
            assert sol.upsilon == pytest.approx(rhs, abs=1e-8 * (1 + abs(rhs)))

    def test_neg_entropy_cone_solution(self):
        f = NegEntropy(SP3, mode="cone")
        sol = solution_at_beta(X012, f, 1.0)
        assert np.allclose(sol.measure.weights, np.exp(X012.values))

    def test_cone_budget_solve_hits_budget(self):
        f = ExtendedKL(Measure(SP3, np.array([0.4, 0.4, 0.2])), mode="cone")
        sol = solve_for_lambda(X012, f, 1.7)
        assert sol.info == pytest.approx(1.7, abs=1e-8)


class TestCheckFBounded:
    def test_decaying_series_converges(self):
        rep = check_f_bounded(lambda n: -n, 1.0, 200)
        assert rep.verdict == "CONVERGENT"
        closed = -math.e / (math.e - 1) ** 2
        assert rep.value_full == pytest.approx(closed, abs=1e-6)
        assert closed == pytest.approx(-0.920674, abs=5e-7)

    def test_growing_series_diverges(self):
        rep = check_f_bounded(lambda n: -n, -1.0, 200)
        assert rep.verdict == "DIVERGENT"

    def test_constant_not_bounded_either_way(self):
        const = lambda n: np.full_like(n, 2.0)
        assert check_f_bounded(const, 1.0, 200).verdict == "DIVERGENT"
        assert check_f_bounded(const, -1.0, 200).verdict == "DIVERGENT"

    def test_argument_guards(self):
        with pytest.raises(ValueError):
            check_f_bounded(lambda n: -n, 0.0, 100)
        with pytest.raises(ValueError):
            check_f_bounded(lambda n: -n, 1.0, 5)

    def test_classifier_inconclusive_on_wobble(self):
        assert classify_partial_sums([1.0, 3.0, 2.0, 4.0]) == "INCONCLUSIVE"


class TestSolveTv:
    def test_zero_budget(self):
        sol = solve_tv(X012, UNIFORM3, 0.0)
        assert np.allclose(sol.measure.weights, UNIFORM3.weights)
        assert sol.info == 0.0

    def test_uniform_three_point_derived(self):
        sol = solve_tv(X012, UNIFORM3, 0.4)
        assert np.allclose(sol.measure.weights, [1 / 3 - 0.2, 1 / 3, 1 / 3 + 0.2])
        assert sol.upsilon == pytest.approx(1.4, abs=1e-12)
        assert sol.unique_maximizer
        assert not sol.on_boundary

    def test_supporting_utility_not_unique(self):
        # a different utility shares the same maximizer at the same budget
        w = Utility(SP3, np.array([0.0, 0.5, 2.0]))
        sol_x = solve_tv(X012, UNIFORM3, 0.4)
        sol_w = solve_tv(w, UNIFORM3, 0.4)
        assert np.allclose(sol_x.measure.weights, sol_w.measure.weights)

    def test_negative_budget_rejected(self):
        with pytest.raises(InfeasibleError):
            solve_tv(X012, UNIFORM3, -0.1)

    def test_boundary_and_saturation(self):
        sol = solve_tv(X012, UNIFORM3, 1.5)
        assert sol.on_boundary  # the worst coordinate is fully drained
        full = solve_tv(X012, UNIFORM3, 2.0)
        assert full.saturated
        assert full.upsilon == pytest.approx(2.0)

    def test_argmax_tie_reported_nonunique(self):
        x = Utility(SP3, np.array([0.0, 1.0, 1.0]))
        sol = solve_tv(x, UNIFORM3, 0.2)
        assert not sol.unique_maximizer

    def test_donor_tie_reported_nonunique(self):
        x = Utility(SP3, np.array([0.0, 0.0, 1.0]))
        sol = solve_tv(x, UNIFORM3, 0.2)  # budget 0.1 split among equal donors
        assert not sol.unique_maximizer

    def test_matches_lp_oracle_on_random_instances(self):
        rng = np.random.default_rng(17)
        for _ in range(20):
            n = int(rng.integers(3, 6))
            sp = FiniteSpace.of_size(n)
            q = rng.uniform(0.05, 1, n)
            q = ProbMeasure(sp, q / q.sum())
            x = Utility(sp, rng.uniform(-1, 1, n))
            lam = float(rng.uniform(0, 2))
            sol = solve_tv(x, q, lam)
            oracle = tv_ball_max(x.values, q.weights, lam)
            assert sol.upsilon == pytest.approx(oracle, abs=1e-9)
