"""Frozen oracle numbers against fresh recomputation and the package's closed forms."""

import math

import pytest

import oracles
from zpl_lab.detection import DEFAULT_JITTER_SIGMA
from zpl_lab.fitting import exp_smeared
from zpl_lab.twosource import spectral_overlap

# frozen outputs of tests/oracles.py
JITTER_SIGMA = 1.0257711296925179e-09
FP_CONVOLVED_FWHM = 24436632.048960995  # 9.4 ns line through FSR 1.5 GHz, finesse 200
AIRY_FWHM = 7500077.108424799
INTERVAL_CDF_0P1NS = 3.988001655598609e-05  # R = 0.07543/ns, lifetime 9.4 ns


def test_jitter_oracle_reproduces():
    assert oracles.jitter_for_dip(0.18) == pytest.approx(JITTER_SIGMA, rel=1e-9)
    assert DEFAULT_JITTER_SIGMA == pytest.approx(JITTER_SIGMA, rel=1e-8)


def test_closed_form_smearing_matches_quadrature():
    s = math.sqrt(2) * JITTER_SIGMA
    closed = 1.0 - float(exp_smeared(0.0, 5.5e-9, s))
    assert closed == pytest.approx(oracles.smeared_dip_at_zero(JITTER_SIGMA), abs=1e-10)


def test_fp_convolution_oracle_reproduces():
    nat = 1.0 / (2 * math.pi * 9.4e-9)
    assert oracles.fp_convolution_fwhm(nat) == pytest.approx(FP_CONVOLVED_FWHM, rel=1e-6)
    assert oracles.airy_fwhm() == pytest.approx(AIRY_FWHM, rel=1e-9)


def test_interval_cdf_oracle():
    assert oracles.two_level_interval_cdf(0.1e-9, 7.543e7, 1 / 9.4e-9) == pytest.approx(INTERVAL_CDF_0P1NS, rel=1e-9)


@pytest.mark.parametrize(
    "fa, fb, det",
    [(17e6, 17e6, 0.0), (17e6, 17e6, 17e6), (17e6, 34e6, 0.0), (17e6, 25e6, 9e6), (5e6, 80e6, -40e6), (17e6, 17e6, 3e9)],
)
def test_spectral_overlap_matches_numeric_integral(fa, fb, det):
    assert spectral_overlap(fa, fb, det) == pytest.approx(oracles.wavepacket_overlap(fa, fb, det), abs=1e-6)
