"""Tests for the asymptotic predictors and prediction reports."""

import numpy as np
import pytest

from quickseek.asymptotics import (alpha_asymptotic, overshoot_factor, predict_from_stats,
                                   predict_report)
from quickseek.models import GaussianMeanShift, GaussianVariance
from quickseek.single_search import RenewalStats


def _stats(alpha=0.0, beta=0.2, e0=3.0, e1=20.0, factor=None):
    return RenewalStats(alpha, beta, e0, e1, 0.0, 0.0, 0.0, 0.0, n_trials=1, overshoot_factor=factor)


class TestAlpha:
    def test_design_bound(self):
        np.testing.assert_allclose(alpha_asymptotic(100.0, 0.0, 1.0), 0.01, rtol=1e-15)

    def test_certain_lower_exit(self):
        assert alpha_asymptotic(100.0, 1.0) == 0.0

    @pytest.mark.parametrize("b, factor", [(100.0, 0.0), (100.0, 1.5), (1.0, 1.0)])
    def test_invalid(self, b, factor):
        with pytest.raises(ValueError):
            alpha_asymptotic(b, 0.1, factor)

    def test_overshoot_factor(self):
        assert overshoot_factor(_stats()) == 1.0
        assert overshoot_factor(_stats(factor=0.4)) == 0.4


class TestPredictions:
    def test_pure_function(self):
        single, scan = _stats(), _stats(beta=0.2)
        a = predict_from_stats(0.01, "RIE", single, scan, 5.0)
        assert a == predict_from_stats(0.01, "RIE", single, scan, 5.0)
        np.testing.assert_allclose(a["pred_ratio_limit"], 0.5, rtol=1e-15)
        np.testing.assert_allclose(a["pred_asd_mixed"], a["pred_scan_delay"] + 5.0, rtol=1e-15)

    def test_halving_prior_doubles_delay(self):
        single, scan = _stats(), _stats()
        a = predict_from_stats(0.01, "RIE", single, scan, 0.0)
        b = predict_from_stats(0.005, "RIE", single, scan, 0.0)
        np.testing.assert_allclose(b["pred_asd_single"] / a["pred_asd_single"], 2 * 0.995 / 0.99, rtol=1e-12)

    def test_report_tracks_simulation(self):
        rows = predict_report(GaussianVariance.from_snr(12.0), [0.01], 0.1, "FIE", n_renewal=20_000,
                              n_trials=3000)
        r = rows[0]
        assert abs(r["gap_single"]) < 0.2
        np.testing.assert_allclose(r["renewal_asd_single"], r["sim_asd_single"], rtol=0.1)

    def test_large_mean_shift_ratio_near_half(self):
        rows = predict_report(GaussianMeanShift(0.0, 8.0, 1.0), [0.05], 0.01, n_renewal=5000, simulate=False)
        assert abs(rows[0]["pred_ratio_limit"] - 0.5) < 0.02
