import math

import numpy as np
import pytest

from zpl_lab.errors import FitError
from zpl_lab.fitting import (
    antibunching_model,
    exp_smeared,
    fit_antibunching,
    fit_gaussian_spot,
    fit_lorentzian,
    fit_saturation,
    gaussian_spot_model,
    linear_fit,
    lorentzian_model,
    saturation_model,
)
from zpl_lab.instruments import CorrelationHistogram


def hist_from_g2(edges, g2, norm):
    return CorrelationHistogram(edges, np.asarray(g2) * norm, norm, 1.0, 1.0, 1.0)


class TestLorentzianFit:
    x = np.linspace(-60e6, 60e6, 201)

    def test_noiseless_exact(self):
        y = lorentzian_model(self.x, 0.0, 17e6, 1000.0, 5.0)
        fit = fit_lorentzian(self.x, y)
        assert fit["fwhm"] == pytest.approx(17e6, rel=1e-6)
        assert abs(fit["center"]) < 1e-6 * 17e6
        assert fit["amplitude"] == pytest.approx(1000.0, rel=1e-6)

    def test_absolute_optical_axis(self):
        nu0 = 5.08e14
        y = lorentzian_model(self.x, 1.3e6, 17e6, 800.0, 2.0)
        fit = fit_lorentzian(nu0 + self.x, y)
        assert fit["center"] - nu0 == pytest.approx(1.3e6, abs=1.0)
        assert fit["fwhm"] == pytest.approx(17e6, rel=1e-6)

    def test_noisy_within_uncertainty(self):
        rng = np.random.default_rng(5)
        y = rng.poisson(lorentzian_model(self.x, 2e6, 17e6, 500.0, 3.0))
        fit = fit_lorentzian(self.x, y)
        assert abs(fit["fwhm"] - 17e6) < 3 * fit.error("fwhm")
        assert abs(fit["center"] - 2e6) < 3 * fit.error("center")
        assert 0.7 < fit.reduced_chi2 < 1.4

    def test_scale_equivariance(self):
        y = np.random.default_rng(6).poisson(lorentzian_model(self.x, 0.0, 17e6, 300.0, 20.0)).astype(float)
        base = fit_lorentzian(self.x, y)
        scaled = fit_lorentzian(self.x, 7.0 * y)
        assert scaled["center"] == pytest.approx(base["center"], rel=1e-6, abs=1e-3)
        assert scaled["fwhm"] == pytest.approx(base["fwhm"], rel=1e-6)
        assert scaled["amplitude"] == pytest.approx(7 * base["amplitude"], rel=1e-6)

    def test_too_few_bins(self):
        y = np.zeros_like(self.x)
        y[100:103] = 5
        with pytest.raises(FitError):
            fit_lorentzian(self.x, y)

    def test_reports_plain_floats(self):
        fit = fit_lorentzian(self.x, lorentzian_model(self.x, 0.0, 17e6, 100.0, 1.0))
        assert all(type(v) is float for v in [*fit.parameters.values(), *fit.uncertainties.values()])


class TestAntibunchingFit:
    edges = (np.arange(402) - 200.5) * 0.5e-9

    def test_synthetic_recovery(self):
        norm = 2000.0
        rng = np.random.default_rng(9)
        g2 = antibunching_model(self.edges * 1e9, 0.18, 5.5, 0.0)  # model called in ns
        counts = rng.poisson(g2 * norm)
        fit = fit_antibunching(CorrelationHistogram(self.edges, counts, norm, 1.0, 1.0, 1.0))
        assert abs(fit["tau_ab"] - 5.5e-9) < 2 * fit.error("tau_ab")
        assert abs(fit["g2_0"] - 0.18) < 2 * fit.error("g2_0")

    def test_smeared_recovery(self):
        irf = math.sqrt(2) * 1.02577113e-9
        e_ns = self.edges * 1e9
        g2 = antibunching_model(e_ns, 0.0, 5.5, irf * 1e9)
        fit = fit_antibunching(hist_from_g2(self.edges, g2, 1e6), irf_sigma=irf)
        assert fit["tau_ab"] == pytest.approx(5.5e-9, rel=1e-5)
        assert fit["g2_0_intrinsic"] == pytest.approx(0.0, abs=1e-5)
        assert fit["g2_0"] == pytest.approx(0.18, abs=1e-3)

    def test_scale_equivariance(self):
        rng = np.random.default_rng(10)
        counts = rng.poisson(antibunching_model(self.edges * 1e9, 0.2, 5.0, 0.0) * 500).astype(float)
        a = fit_antibunching(CorrelationHistogram(self.edges, counts, 500.0, 1.0, 1.0, 1.0))
        b = fit_antibunching(CorrelationHistogram(self.edges, 4 * counts, 2000.0, 1.0, 1.0, 1.0))
        assert b["tau_ab"] == pytest.approx(a["tau_ab"], rel=1e-6)

    def test_rejects_zero_normalisation(self):
        with pytest.raises(FitError):
            fit_antibunching(CorrelationHistogram(self.edges, np.ones(401), 0.0, 1.0, 0.0, 0.0))


def test_exp_smeared_limits():
    t = np.array([-3.0, 0.0, 2.0])
    np.testing.assert_allclose(exp_smeared(t, 5.5, 0.0), np.exp(-np.abs(t) / 5.5))
    np.testing.assert_allclose(exp_smeared(t, 5.5, 1e-6), np.exp(-np.abs(t) / 5.5), rtol=1e-5)
    # far from zero the smeared curve is the shifted exponential times exp(s^2/2 tau^2)
    s = 0.8
    assert float(exp_smeared(np.array(30.0), 5.5, s)) == pytest.approx(math.exp(-30 / 5.5 + 0.5 * (s / 5.5) ** 2), rel=1e-9)


def test_gaussian_spot_fit():
    x = np.arange(-600, 601, 20.0)
    xx, yy = np.meshgrid(x, x)
    img = gaussian_spot_model((xx, yy), 12.0, -7.0, 268.7, 900.0, 4.0)
    fit = fit_gaussian_spot(x, x, img)
    assert fit["fwhm"] == pytest.approx(268.7, rel=1e-6)
    assert fit["x0"] == pytest.approx(12.0, abs=1e-4) and fit["y0"] == pytest.approx(-7.0, abs=1e-4)


def test_saturation_fit():
    p = np.geomspace(5e-9, 5e-6, 10)
    r = saturation_model(p, 7e5, 1e-7, 300.0)
    fit = fit_saturation(p, r, np.sqrt(r))
    assert fit["r_inf"] == pytest.approx(7e5, rel=1e-6)
    assert fit["p_sat"] == pytest.approx(1e-7, rel=1e-6)
    with pytest.raises(FitError):
        fit_saturation(p[:3], r[:3], np.ones(3))


def test_linear_fit():
    x = np.linspace(0, 30, 16)
    y = -5.5556e7 * x + 3.0 + np.random.default_rng(1).normal(0, 1e4, 16)
    fit = linear_fit(x, y, np.full(16, 1e4))
    assert abs(fit["slope"] + 5.5556e7) < 3 * fit.error("slope")
