"""Tests for the K-stage group search."""

from fractions import Fraction

import numpy as np
import pytest

from quickseek.harness import evaluate, trial_rng
from quickseek.low_complexity import design_thresholds_lc
from quickseek.models import Bernoulli, GaussianMeanShift, GaussianVariance
from quickseek.multistage import (MultiStageConfig, design_thresholds_multi,
                                  multistage_dp_decomposition_check, run_multistage_trial,
                                  scan_is_weak)

VAR12 = GaussianVariance.from_snr(12.0)
SYMMETRIC = Bernoulli(0.3, 0.7)


class TestDesign:
    def test_one_stage_matches_two_sequence_design(self):
        m = design_thresholds_multi(0.05, 0.1, 1)
        lc = design_thresholds_lc(0.05, 0.1)
        assert m.b_scan == lc.b_s
        assert m.stage_a == (lc.a_r,)
        assert m.stage_b == (lc.b_r,)

    def test_stage_budget(self):
        m = design_thresholds_multi(0.05, 0.06, 3)
        # with q1_0 = 1/2 the LR thresholds are (eps, 1/eps) for stage budget eps
        np.testing.assert_allclose(m.stage_a[0], 0.01, rtol=1e-12)
        np.testing.assert_allclose(1.0 / m.stage_b[0], 0.01, rtol=1e-12)

    def test_scanning_bound_scales_with_group(self):
        b1 = design_thresholds_multi(0.01, 0.1, 1).b_scan
        b3 = design_thresholds_multi(0.01, 0.1, 3).b_scan
        np.testing.assert_allclose(b1 / b3, 4.0, rtol=1e-12)

    def test_thresholds_ordered(self):
        m = design_thresholds_multi(0.05, 0.1, 4)
        assert m.b_scan > 1
        assert all(a < 1 < b for a, b in zip(m.stage_a, m.stage_b))

    @pytest.mark.parametrize("K", [0, 1.5, -1])
    def test_invalid_K(self, K):
        with pytest.raises(ValueError):
            design_thresholds_multi(0.05, 0.1, K)

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            MultiStageConfig(K=2, pi0=0.05, b_scan=10.0, stage_a=(0.1,), stage_b=(10.0,))


class TestTrial:
    def test_one_stage_identical_to_low_complexity(self):
        m = evaluate("multistage", VAR12, design_thresholds_multi(0.05, 0.1, 1), 300, 4, keep_records=True)
        lc = evaluate("low_complexity", VAR12, design_thresholds_lc(0.05, 0.1), 300, 4, keep_records=True)
        assert [(r.tau0, r.tau1, r.n_switches, r.claim_correct) for r in m.records] == \
               [(r.tau0, r.tau1, r.n_switches, r.claim_correct) for r in lc.records]

    def test_all_null_group_is_an_error(self):
        cfg = MultiStageConfig(K=2, pi0=1e-12, b_scan=1.01, stage_a=(0.1, 0.1), stage_b=(10.0, 10.0))
        s = evaluate("multistage", VAR12, cfg, 200, 0)
        assert s.fip == 1.0

    def test_fip_within_budget(self):
        s = evaluate("multistage", VAR12, design_thresholds_multi(0.05, 0.1, 2), 4000, 0)
        assert s.fip <= 0.1 + 3 * s.fip_se

    def test_weak_scan_warns(self):
        weak = GaussianMeanShift(0.0, 0.01, 1.0)
        assert scan_is_weak(weak, 3)
        assert not scan_is_weak(VAR12, 2)
        with pytest.warns(RuntimeWarning):
            run_multistage_trial(weak, design_thresholds_multi(0.05, 0.5, 3), trial_rng(0, 0), max_samples=100)

    def test_deterministic(self):
        cfg = design_thresholds_multi(0.05, 0.1, 2)
        assert run_multistage_trial(VAR12, cfg, trial_rng(2, 9)) == run_multistage_trial(VAR12, cfg, trial_rng(2, 9))


class TestDecomposition:
    @pytest.mark.parametrize("T", [0, 1, 2])
    def test_equal(self, T):
        ok, joint, concat = multistage_dp_decomposition_check(SYMMETRIC, K=2, T=T)
        assert ok
        assert joint == concat

    def test_horizon_three(self):
        ok, joint, concat = multistage_dp_decomposition_check(Bernoulli(0.2, 0.7), K=2, T=3)
        assert ok and joint == concat

    def test_zero_horizon_is_terminal_cost(self):
        _, joint, _ = multistage_dp_decomposition_check(SYMMETRIC, K=1, T=0, pi0=Fraction(1, 5))
        # nothing is observed, so the claim errs with the prior probability of H0
        assert joint == Fraction(4, 5)

    def test_expensive_samples(self):
        _, joint, concat = multistage_dp_decomposition_check(SYMMETRIC, K=2, T=2, c=Fraction(1))
        assert joint == concat == Fraction(4, 5)

    def test_tuple_model_and_bad_horizon(self):
        assert multistage_dp_decomposition_check((Fraction(3, 10), Fraction(7, 10)), K=1, T=1)[0]
        with pytest.raises(ValueError):
            multistage_dp_decomposition_check(SYMMETRIC, T=4)
