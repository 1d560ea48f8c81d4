import math

import numpy as np
import pytest

from infokernel.functionals import ExtendedKL, TotalVariation
from infokernel.kernels import shannon_entropy
from infokernel.separation import (
    enumerate_deterministic,
    separation_experiment,
    support_corollary_check,
    support_profile,
)
from infokernel.spaces import FiniteSpace, Measure, ProbMeasure, Utility

SP3 = FiniteSpace.of_size(3)
SP4 = FiniteSpace.of_size(4)
BETA_SWEEP = [0.1, 1.0, 10.0, 100.0]


def kl_simplex(space, weights):
    return ExtendedKL(Measure(space, np.asarray(weights, float)), mode="simplex")


class TestSupportProfile:
    def test_partial_reference_support_is_stable(self):
        # utility range kept small so e^{-100 gap} stays above the threshold
        f = kl_simplex(SP3, [0.5, 0.5, 0.0])
        x = Utility(SP3, np.array([0.03, -0.07, 0.2]))
        prof = support_profile(x, f, BETA_SWEEP, eps=1e-12)
        assert prof.stable
        assert prof.common == {0, 1}
        assert all(s == {0, 1} for s in prof.supports)

    def test_strictly_positive_reference_full_support(self):
        f = kl_simplex(SP3, [0.2, 0.3, 0.5])
        x = Utility(SP3, np.array([0.0, 0.05, 0.12]))
        prof = support_profile(x, f, BETA_SWEEP)
        assert prof.stable and prof.common == {0, 1, 2}

    def test_tv_sweep_breaks_stability(self):
        f = TotalVariation(Measure(SP3, np.full(3, 1 / 3)))
        x = Utility(SP3, np.array([0.0, 1.0, 2.0]))
        prof = support_profile(x, f, [0.2, 0.8, 1.6])
        assert not prof.stable
        assert len(set(prof.supports)) >= 2


class TestSupportCorollary:
    def test_nonconstant_utility_keeps_full_support(self):
        f = kl_simplex(SP3, [0.2, 0.3, 0.5])
        x = Utility(SP3, np.array([0.0, 1.0, 2.0]))
        rep = support_corollary_check(x, f, BETA_SWEEP)
        assert rep.passed and rep.zero_set == frozenset()

    def test_constant_utility_trivially_passes(self):
        f = kl_simplex(SP3, [0.2, 0.3, 0.5])
        x = Utility(SP3, np.full(3, 1.0))
        assert support_corollary_check(x, f, BETA_SWEEP).passed

    def test_reference_null_atom_is_vacuous(self):
        f = kl_simplex(SP3, [0.5, 0.5, 0.0])
        x = Utility(SP3, np.array([0.0, 1.0, 123.0]))  # arbitrary on the null atom
        rep = support_corollary_check(x, f, BETA_SWEEP)
        assert rep.passed
        assert rep.zero_set == frozenset({2})


class TestEnumerateDeterministic:
    def test_counts(self):
        a2, b2 = FiniteSpace.of_size(2, "a"), FiniteSpace.of_size(2, "b")
        assert len(list(enumerate_deterministic(a2, b2))) == 4
        a3 = FiniteSpace.of_size(3, "a")
        assert len(list(enumerate_deterministic(a3, b2))) == 9

    def test_lexicographic_unique(self):
        a2, b3 = FiniteSpace.of_size(2, "a"), FiniteSpace.of_size(3, "b")
        maps = [tuple(f.images) for f in enumerate_deterministic(a2, b3)]
        assert maps == sorted(maps)
        assert len(set(maps)) == 8

    def test_limit_enforced(self):
        a2 = FiniteSpace.of_size(2, "a")
        b20 = FiniteSpace.of_size(20, "b")
        with pytest.raises(ValueError, match="limit"):
            list(enumerate_deterministic(a2, b20, limit=10 ** 6))


class TestSeparationExperiment:
    X = np.array([[1.0, 0.0], [0.0, 1.0]])
    B = FiniteSpace.of_size(2, "b")
    INPUT = ProbMeasure(FiniteSpace.of_size(2, "b"), np.array([0.5, 0.5]))
    LAM = math.log(2) - (-0.9 * math.log(0.9) - 0.1 * math.log(0.1))

    def test_binary_instance(self):
        rep = separation_experiment(self.X, self.INPUT, self.LAM)
        # identity is infeasible (needs ln 2 > budget); constants win with E = 0.5
        assert rep.best_det_value == pytest.approx(0.5)
        assert rep.best_det_info == pytest.approx(0.0, abs=1e-15)
        assert rep.channel.expected_utility == pytest.approx(0.9, abs=1e-6)
        assert rep.gap == pytest.approx(0.4, abs=1e-6)
        assert rep.feasible_count == 2

    def test_full_budget_closes_gap(self):
        rep = separation_experiment(self.X, self.INPUT, math.log(2))
        assert rep.best_det_value == pytest.approx(1.0)
        assert abs(rep.gap) <= 1e-9

    def test_tiny_budget_degenerates_to_independence(self):
        rep = separation_experiment(self.X, self.INPUT, 1e-6)
        assert rep.best_det_value == pytest.approx(0.5)
        assert rep.gap == pytest.approx(0.0, abs=5e-3)
        assert rep.gap > 0

    def test_best_map_lexicographic_tie_break(self):
        rep = separation_experiment(self.X, self.INPUT, self.LAM)
        assert list(rep.best_map.images) == [0, 0]  # first of the two constants

    def test_interior_channel_never_deterministic(self):
        # a deterministic kernel appears in the optimal family only at capacity
        from infokernel.kernels import is_deterministic
        for lam in (0.05, self.LAM, 0.6):
            rep = separation_experiment(self.X, self.INPUT, lam, dual_check=False)
            det, _ = is_deterministic(rep.channel.kernel, 1e-9)
            assert not det
        full = separation_experiment(self.X, self.INPUT, math.log(2), dual_check=False)
        det, _ = is_deterministic(full.channel.kernel, 1e-9)
        assert det

    def test_dual_check_info_exceeds_channel_budget(self):
        # a lopsided instance so some map value falls strictly inside the range
        x = np.array([[1.0, 0.2, 0.0], [0.0, 0.9, 0.8]])
        inp = ProbMeasure(FiniteSpace.of_size(3, "b"), np.array([0.4, 0.3, 0.3]))
        rep = separation_experiment(x, inp, 0.3)
        assert rep.dual_checks  # at least one value-matched comparison ran
        for check in rep.dual_checks:
            assert check.strictly_worse
            assert check.info > check.min_info_for_value + 1e-9

    def test_matched_information_strictly_worse_small_sweep(self):
        rng = np.random.default_rng(100)
        for _ in range(8):
            na, nb = int(rng.integers(2, 4)), int(rng.integers(2, 4))
            x = rng.uniform(0, 1, (na, nb))
            w = rng.uniform(0.05, 1, nb)
            inp = ProbMeasure(FiniteSpace.of_size(nb, "b"), w / w.sum())
            fstar = x.argmax(axis=0)
            lam_bar = shannon_entropy(np.bincount(fstar, weights=inp.weights,
                                                  minlength=na))
            from infokernel.separation import _det_value_info
            from infokernel.kernels import channel_optimize
            from infokernel.separation import enumerate_deterministic as enum_det
            a_sp = FiniteSpace.of_size(na, "a")
            b_sp = FiniteSpace.of_size(nb, "b")
            for f in enum_det(a_sp, b_sp):
                value, info = _det_value_info(x, inp.weights, f.images)
                if not (1e-3 < info < lam_bar - 1e-3):
                    continue
                sol = channel_optimize(x, inp.weights, lam=info)
                assert sol.expected_utility > value + 1e-9
