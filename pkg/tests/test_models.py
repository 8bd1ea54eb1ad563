"""Tests for hypothesis pairs, mixture densities and sampling."""

import math

import numpy as np
import pytest
from scipy import integrate, stats

from quickseek.models import (H0, H1, Bernoulli, Gamma, Gaussian, GaussianMeanShift, GaussianVariance,
                              MixtureDensity, ObservationStream, Poisson, density, effective_support,
                              kl_divergence, llr, mixture_density, model_from_dict, model_to_dict,
                              sample)

FAMILIES = [
    GaussianMeanShift(0.0, 1.0, 1.0),
    GaussianVariance(1.0, 3.0),
    Gaussian(0.0, 1.0, 2.0, 0.25),
    Gamma(1.0, 3.0, 2.0),
    Poisson(2.0, 4.0),
    Bernoulli(0.2, 0.7),
]


class TestDensity:
    def test_standard_normal_peak(self):
        assert density(GaussianMeanShift(0, 1, 1), H0, 0.0) == pytest.approx(0.39894, abs=1e-5)

    def test_exponential_at_zero(self):
        assert density(Gamma(1.0, 2.0, 2.0), H0, 0.0) == pytest.approx(0.5, abs=1e-12)

    def test_poisson_pmf(self):
        np.testing.assert_allclose(density(Poisson(2.0, 4.0), H0, 3), math.exp(-2) * 8 / 6, rtol=1e-12)
        assert density(Poisson(2.0, 4.0), H0, 3) == pytest.approx(0.18045, abs=1e-5)

    def test_gamma_negative_rejected(self):
        with pytest.raises(ValueError):
            density(Gamma(1.0, 2.0, 2.0), H0, -0.5)

    def test_bad_hypothesis(self):
        with pytest.raises(ValueError):
            density(GaussianMeanShift(0, 1, 1), 2, 0.0)


class TestLLR:
    def test_midpoint(self):
        assert llr(GaussianMeanShift(0, 1, 1), 0.5) == pytest.approx(0.0, abs=1e-15)

    def test_closed_form(self):
        assert llr(GaussianMeanShift(0, 1, 1), 1.0) == pytest.approx(0.5, abs=1e-15)

    @pytest.mark.parametrize("model", FAMILIES, ids=lambda m: m.family)
    def test_ratio_identity(self, model):
        lo, hi = effective_support(model, MixtureDensity(1, 0))
        if model.discrete:
            y = np.arange(lo, hi + 1)
        else:
            y = np.linspace(max(lo, 1e-6) if lo >= 0 else lo, hi, 401)
        f0 = density(model, H0, y)
        f1 = density(model, H1, y)
        keep = (f0 > 1e-300) & (f1 > 1e-300)
        np.testing.assert_allclose(np.exp(llr(model, y[keep])) * f0[keep], f1[keep], rtol=1e-12)

    @pytest.mark.parametrize("make", [lambda: GaussianMeanShift(0, 0, 1), lambda: GaussianVariance(2, 2),
                                      lambda: Gamma(2, 2, 1), lambda: Poisson(3, 3),
                                      lambda: Bernoulli(0.4, 0.4)])
    def test_degenerate_pair_rejected(self, make):
        with pytest.raises(ValueError):
            make()


class TestMixtureDensity:
    def test_g0_at_zero(self):
        m = GaussianMeanShift(0.0, 2.0, 1.0)
        assert mixture_density(m, MixtureDensity(2, 0), 0.0) == pytest.approx(1 / math.sqrt(4 * math.pi), abs=1e-12)

    def test_g1_at_mean(self):
        m = GaussianMeanShift(0.0, 2.0, 1.0)
        assert mixture_density(m, MixtureDensity(2, 1), 2.0) == pytest.approx(0.28209, abs=1e-5)

    def test_gamma_convolution_oracle(self):
        m = Gamma(1.0, 3.0, 2.0)
        z = 4.0
        conv, _ = integrate.quad(lambda y: density(m, H0, y) * density(m, H1, z - y), 0.0, z)
        closed = mixture_density(m, MixtureDensity(2, 1), z)
        np.testing.assert_allclose(closed, conv, rtol=1e-9)
        np.testing.assert_allclose(closed, stats.gamma(4.0, scale=2.0).pdf(z), rtol=1e-12)

    def test_poisson_sum(self):
        m = Poisson(2.0, 4.0)
        conv = sum(density(m, H0, k) * density(m, H1, 5 - k) for k in range(6))
        np.testing.assert_allclose(mixture_density(m, MixtureDensity(2, 1), 5), conv, rtol=1e-12)

    def test_bernoulli_sum(self):
        m = Bernoulli(0.2, 0.7)
        np.testing.assert_allclose(mixture_density(m, MixtureDensity(2, 1), 1), 0.2 * 0.3 + 0.8 * 0.7,
                                   rtol=1e-12)

    def test_gamma_scale_mismatch_rejected(self):
        with pytest.raises(ValueError):
            Gamma(1.0, 3.0, 2.0, theta1=3.0)

    def test_invalid_mix(self):
        with pytest.raises(ValueError):
            MixtureDensity(2, 3)

    @pytest.mark.parametrize("model", FAMILIES, ids=lambda m: m.family)
    @pytest.mark.parametrize("a", [0, 1, 2])
    def test_quadrature_normalised_with_correct_mean(self, model, a):
        x, w = model.quadrature(2, a)
        np.testing.assert_allclose(w.sum(), 1.0, rtol=1e-12)
        draws = model.draw(2, a, np.random.default_rng(5), 200_000)
        assert abs(np.dot(w, x) - draws.mean()) < 5 * draws.std() / math.sqrt(len(draws))


class TestSampling:
    def test_seed_reproducible(self):
        m = GaussianMeanShift(0, 1, 1)
        assert sample(m, H0, np.random.default_rng(3)) == sample(m, H0, np.random.default_rng(3))

    def test_mean_shift_mean(self):
        x = sample(GaussianMeanShift(0, 1, 1), H1, np.random.default_rng(0), 100_000)
        assert abs(x.mean() - 1.0) < 0.01

    def test_poisson_variance(self):
        x = sample(Poisson(2.0, 4.0), H0, np.random.default_rng(0), 100_000)
        assert abs(x.var() - 2.0) < 0.05

    def test_stream_matches_direct_draws(self):
        m = GaussianVariance(1.0, 3.0)
        stream = ObservationStream(m, np.random.default_rng(9), block=8)
        got = [stream.draw(2, 1) for _ in range(20)]
        again = ObservationStream(m, np.random.default_rng(9), block=8)
        assert got == [again.draw(2, 1) for _ in range(20)]


class TestKL:
    def test_mean_shift(self):
        assert kl_divergence(GaussianMeanShift(0, 1, 1), "10") == pytest.approx(0.5, abs=1e-15)
        assert kl_divergence(GaussianMeanShift(0, 2, 1), "10") == pytest.approx(2.0, abs=1e-15)

    def test_poisson(self):
        np.testing.assert_allclose(kl_divergence(Poisson(2, 4), "10"), 4 * math.log(2) - 2, rtol=1e-12)

    @pytest.mark.parametrize("model", FAMILIES, ids=lambda m: m.family)
    @pytest.mark.parametrize("direction", ["10", "01"])
    def test_positive_and_matches_integral(self, model, direction):
        d = kl_divergence(model, direction)
        assert d > 0
        num, den = (1, 0) if direction == "10" else (0, 1)
        lo, hi = model.support(1)
        if model.discrete:
            y = np.arange(lo, hi + 1)
            oracle = float(np.sum(model.pdf(1, num, y) * model.log_ratio(1, y, num, den)))
        else:
            oracle, _ = integrate.quad(lambda y: float(model.pdf(1, num, y) * model.log_ratio(1, y, num, den)),
                                       lo, hi, limit=200)
        np.testing.assert_allclose(d, oracle, rtol=1e-7)

    def test_bad_direction(self):
        with pytest.raises(ValueError):
            kl_divergence(GaussianMeanShift(0, 1, 1), "11")


class TestSnr:
    def test_from_snr(self):
        m = GaussianVariance.from_snr(12.0)
        np.testing.assert_allclose(m.var1, 1 + 10 ** 1.2, rtol=1e-15)
        assert m.var0 == 1.0


class TestConfigDicts:
    @pytest.mark.parametrize("model", FAMILIES, ids=lambda m: m.family)
    def test_round_trip(self, model):
        assert model_from_dict(model_to_dict(model)) == model

    def test_snr_key(self):
        assert model_from_dict({"family": "gaussian_variance", "snr_db": 12}) == GaussianVariance.from_snr(12)

    def test_unknown_family_lists_options(self):
        with pytest.raises(ValueError, match="valid options"):
            model_from_dict({"family": "cauchy"})
