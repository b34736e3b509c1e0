import math

import numpy as np
import pytest
from scipy import integrate

from zpl_lab.errors import DomainError
from zpl_lab.photophysics import (
    DEFAULT_CALIBRATION,
    BranchingFactors,
    LaserField,
    Molecule,
    Scheme,
    StarkResponse,
    excitation_rate,
    field_from_voltage,
    fourier_limited_fwhm,
    frequency_to_wavelength_nm,
    lorentzian_profile,
    psf_fwhm,
    pump_for_antibunching,
    saturation,
    stark_shift,
    wavelength_nm_to_frequency,
)


class TestLorentzian:
    def test_peak_value(self):
        assert lorentzian_profile(0.0, 0.0, 17e6) == pytest.approx(2 / (math.pi * 17e6), rel=1e-12)
        assert lorentzian_profile(0.0, 0.0, 17e6) == pytest.approx(3.745e-8, rel=1e-3)

    def test_half_width_gives_half_peak(self):
        peak = lorentzian_profile(5.0, 5.0, 17e6)
        assert lorentzian_profile(5.0 + 8.5e6, 5.0, 17e6) == pytest.approx(0.5 * peak, rel=1e-12)

    def test_trapezoid_normalisation(self):
        # trapezoid rule on a log-spaced symmetric grid over +-1e4 fwhm
        fwhm = 17e6
        half = np.geomspace(1e-3 * fwhm, 1e4 * fwhm, 200_001)
        x = np.concatenate([-half[::-1], [0.0], half])
        area = integrate.trapezoid(lorentzian_profile(x, 0.0, fwhm), x)
        # the truncated tails hold 2/pi * atan(1/(2e4)) of the mass
        assert area == pytest.approx(1.0, abs=1e-4)

    def test_quadrature_normalisation(self):
        fwhm = 17e6
        val, _ = integrate.quad(lorentzian_profile, -1e4 * fwhm, 1e4 * fwhm, args=(0.0, fwhm), points=[0.0], limit=500)
        assert val == pytest.approx(1.0, abs=1e-4)

    @pytest.mark.parametrize("bad", [0.0, -1.0])
    def test_rejects_non_positive_width(self, bad):
        with pytest.raises(DomainError):
            lorentzian_profile(0.0, 0.0, bad)


class TestFourierLimit:
    def test_reference_lifetime(self):
        assert fourier_limited_fwhm(9.4e-9) == pytest.approx(16.93e6, rel=1e-3)

    def test_five_picoseconds(self):
        assert fourier_limited_fwhm(5e-12) == pytest.approx(31.8e9, rel=2e-3)

    def test_inverse_proportional(self):
        assert fourier_limited_fwhm(2 * 9.4e-9) == pytest.approx(0.5 * fourier_limited_fwhm(9.4e-9), rel=1e-15)

    @pytest.mark.parametrize("t", [1e-12, 9.4e-9, 3.3e-6])
    def test_exact_product(self, t):
        assert fourier_limited_fwhm(t) * 2 * math.pi * t == pytest.approx(1.0, rel=4e-16)

    def test_rejects_non_positive(self):
        with pytest.raises(DomainError):
            fourier_limited_fwhm(0.0)

    def test_zero_one_width_is_primary(self):
        m = Molecule()
        assert m.fwhm_01 == pytest.approx(28e9, rel=1e-12)
        assert m.lifetime_s1v1 == pytest.approx(5.684e-12, rel=1e-3)


class TestStark:
    def test_zero_field(self):
        assert stark_shift(0.0, StarkResponse()) == 0.0

    def test_five_gigahertz(self):
        assert stark_shift(5e6, StarkResponse()) == pytest.approx(5e9, rel=1e-12)

    def test_overlap_field(self):
        assert stark_shift(1.167e6, StarkResponse()) == pytest.approx(1.167e9, rel=1e-12)

    def test_odd_without_quadratic(self):
        s = StarkResponse(linear_coeff=1234.5)
        assert stark_shift(-3e5, s) == -stark_shift(3e5, s)

    def test_quadratic_hook(self):
        s = StarkResponse(linear_coeff=0.0, quadratic_coeff=2e-3)
        assert stark_shift(1e6, s) == pytest.approx(2e9) and stark_shift(-1e6, s) == pytest.approx(2e9)

    def test_field_from_voltage(self):
        assert field_from_voltage(21.0, 18e-6) == pytest.approx(1.1667e6, rel=1e-4)
        assert field_from_voltage(0.0, 18e-6) == 0.0
        assert field_from_voltage(90.0, 18e-6) == pytest.approx(5e6, rel=1e-12)

    @pytest.mark.parametrize("gap", [0.0, -1e-6])
    def test_gap_must_be_positive(self, gap):
        with pytest.raises(DomainError):
            field_from_voltage(1.0, gap)


class TestMoleculeInvariants:
    def test_band_probabilities_sum_to_one(self):
        for fc, dw in [(0.4, 0.7), (0.1, 0.3), (0.33, 0.77), (1.0, 1.0), (0.0, 0.5)]:
            probs = BranchingFactors(fc, dw).band_probabilities()
            assert sum(probs) == 1.0
            assert probs[0] == pytest.approx(fc * dw)

    @pytest.mark.parametrize("kw", [
        {"lifetime_s1": 0.0},
        {"lifetime_s1v1": -1.0},
        {"lifetime_s1v1": 2e-8},
        {"vib_offset_01": 0.0},
        {"dipole_axis": (1.0, 0.1)},
    ])
    def test_rejects_invalid(self, kw):
        with pytest.raises(DomainError):
            Molecule(**kw)

    def test_branching_range(self):
        with pytest.raises(DomainError):
            BranchingFactors(1.2, 0.5)


class TestExcitationRate:
    def laser(self, mol, scheme, **kw):
        return LaserField(frequency=mol.transition_center(scheme), **kw)

    def test_far_detuned(self, molecule):
        on = excitation_rate(self.laser(molecule, Scheme.ZPL_00), molecule, Scheme.ZPL_00)
        off = excitation_rate(
            LaserField(frequency=molecule.nu00 + 200 * molecule.natural_fwhm), molecule, Scheme.ZPL_00
        )
        assert off < 1e-4 * on

    def test_crossed_polarisation(self, molecule):
        las = LaserField(frequency=molecule.nu00, polarization_axis=(0.0, 1.0))
        assert excitation_rate(las, molecule, Scheme.ZPL_00) == pytest.approx(0.0, abs=1e-20)

    def test_dipole_sign_flip(self):
        a = Molecule(dipole_axis=(0.6, 0.8))
        b = Molecule(dipole_axis=(-0.6, -0.8))
        las = LaserField(frequency=a.nu00, polarization_axis=(1.0, 0.0))
        assert excitation_rate(las, a, Scheme.ZPL_00) == excitation_rate(las, b, Scheme.ZPL_00)

    def test_two_orders_of_magnitude_calibration(self, molecule):
        zpl = excitation_rate(self.laser(molecule, Scheme.ZPL_00, power=1e-9), molecule, Scheme.ZPL_00)
        pump = excitation_rate(self.laser(molecule, Scheme.PUMP_01, power=100e-9), molecule, Scheme.PUMP_01)
        assert pump == pytest.approx(zpl, rel=0.2)

    def test_unit_saturation_at_one_nanowatt(self, molecule):
        r = excitation_rate(self.laser(molecule, Scheme.ZPL_00, power=1e-9), molecule, Scheme.ZPL_00)
        assert r / molecule.gamma == pytest.approx(1.0, rel=1e-12)

    def test_focus_offset_follows_psf(self, molecule):
        spot = psf_fwhm(590.0, 1.12)
        las = self.laser(molecule, Scheme.ZPL_00, focus_position=(0.5 * spot, 0.0))
        on = self.laser(molecule, Scheme.ZPL_00)
        ratio = excitation_rate(las, molecule, Scheme.ZPL_00) / excitation_rate(on, molecule, Scheme.ZPL_00)
        assert ratio == pytest.approx(0.5, rel=1e-3)

    def test_linewidths_add(self, molecule):
        las = LaserField(frequency=molecule.nu00 + 0.5 * (molecule.natural_fwhm + 1e6), linewidth=1e6, power=1e-9)
        r = excitation_rate(las, molecule, Scheme.ZPL_00, calibration=DEFAULT_CALIBRATION)
        # detuning resolution at 5e14 Hz limits this to ~1e-8
        assert r / molecule.gamma == pytest.approx(0.5, rel=1e-7)


class TestSaturation:
    def test_symmetric_point(self):
        g = 1 / 9.4e-9
        st = saturation(g, g)
        assert st.population == 0.5 and st.emitted_rate == pytest.approx(0.5 * g)

    def test_antibunching_anchor(self):
        r = pump_for_antibunching(1 / 5.5e-9, 1 / 9.4e-9)
        assert r * 1e-9 == pytest.approx(0.07543, rel=1e-4)

    def test_full_saturation(self):
        st = saturation(math.inf, 1 / 9.4e-9)
        assert st.emitted_rate == pytest.approx(1.064e8, rel=1e-3)
        assert saturation(1e15, 1 / 9.4e-9).emitted_rate == pytest.approx(1 / 9.4e-9, rel=1e-6)

    def test_monotone_and_bounded(self):
        g = 1e8
        rates = np.geomspace(1e3, 1e13, 60)
        p = np.array([saturation(r, g).population for r in rates])
        assert np.all(np.diff(p) > 0) and np.all(p < 1)
        assert all(saturation(r, g).emitted_rate <= g for r in rates)

    def test_rejects_negative(self):
        with pytest.raises(DomainError):
            saturation(-1.0, 1e8)


def test_psf_width():
    assert psf_fwhm(590.0, 1.12) == pytest.approx(268.66, abs=0.01)


def test_wavelength_round_trip():
    nu = wavelength_nm_to_frequency(np.array([590.0, 617.3]))
    np.testing.assert_allclose(frequency_to_wavelength_nm(nu), [590.0, 617.3], rtol=1e-14)
