"""Photophysics of a DBATT-like dye molecule at cryogenic temperature.

Deterministic formulas and parameter containers: lineshapes, the
lifetime/linewidth relation, Stark tuning, pump rates and the incoherent
two-level saturation model.  All quantities are SI (Hz, s, W, V/m, m)
except positions, which are in nm.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

SPEED_OF_LIGHT = 299_792_458.0
HZ_PER_WAVENUMBER = SPEED_OF_LIGHT * 100.0  # 1 cm^-1 in Hz

ZPL_WAVELENGTH = 590e-9
DEFAULT_NU00 = SPEED_OF_LIGHT / ZPL_WAVELENGTH
DEFAULT_LIFETIME_S1 = 9.4e-9
DEFAULT_FWHM_01 = 28e9
DEFAULT_VIB_OFFSET_01 = 242.0 * HZ_PER_WAVENUMBER
DEFAULT_NA = 1.12


class Scheme(enum.Enum):
    """Which transition the laser drives."""

    ZPL_00 = "ZPL_00"
    PUMP_01 = "PUMP_01"


def _unit(v, name: str) -> tuple[float, float]:
    x, y = (float(c) for c in v)
    n = math.hypot(x, y)
    if not math.isclose(n, 1.0, rel_tol=0.0, abs_tol=1e-12):
        raise DomainError(f"{name} must have unit norm, got |v|={n!r}")
    return (x, y)


def unit_vector(angle: float) -> tuple[float, float]:
    return (math.cos(angle), math.sin(angle))


@dataclass(frozen=True)
class BranchingFactors:
    franck_condon: float = 0.4
    debye_waller: float = 0.7

    def __post_init__(self):
        for name in ("franck_condon", "debye_waller"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1], got {v}")

    @property
    def zpl(self) -> float:
        return self.franck_condon * self.debye_waller

    @property
    def phonon_wing(self) -> float:
        return self.franck_condon * (1.0 - self.debye_waller)

    @property
    def stokes(self) -> float:
        return 1.0 - self.franck_condon

    def band_probabilities(self) -> tuple[float, float, float]:
        """(ZPL, phonon wing, Stokes); the last entry absorbs rounding so the sum is 1."""
        zpl, wing = self.zpl, self.phonon_wing
        return (zpl, wing, 1.0 - zpl - wing)


@dataclass(frozen=True)
class StarkResponse:
    linear_coeff: float = 1.0e3  # Hz per V/m
    quadratic_coeff: float = 0.0  # Hz per (V/m)^2


@dataclass(frozen=True)
class Molecule:
    id: str = "m0"
    position: tuple[float, float] = (0.0, 0.0)
    nu00: float = DEFAULT_NU00
    lifetime_s1: float = DEFAULT_LIFETIME_S1
    # back-derived from the 28 GHz 0-1 line: 1/(2*pi*28 GHz) ~ 5.68 ps
    lifetime_s1v1: float = 1.0 / (2.0 * math.pi * DEFAULT_FWHM_01)
    vib_offset_01: float = DEFAULT_VIB_OFFSET_01
    branching: BranchingFactors = field(default_factory=BranchingFactors)
    stark: StarkResponse = field(default_factory=StarkResponse)
    dipole_axis: tuple[float, float] = (1.0, 0.0)

    def __post_init__(self):
        if not self.lifetime_s1 > 0 or not self.lifetime_s1v1 > 0:
            raise DomainError("lifetimes must be positive")
        if not self.lifetime_s1v1 < self.lifetime_s1:
            raise DomainError("lifetime_s1v1 must be shorter than lifetime_s1")
        if not self.vib_offset_01 > 0:
            raise DomainError("vib_offset_01 must be positive")
        object.__setattr__(self, "dipole_axis", _unit(self.dipole_axis, "dipole_axis"))
        object.__setattr__(self, "position", tuple(float(c) for c in self.position))

    @property
    def gamma(self) -> float:
        """Radiative decay rate of S1,v=0 (1/s)."""
        return 1.0 / self.lifetime_s1

    @property
    def natural_fwhm(self) -> float:
        return fourier_limited_fwhm(self.lifetime_s1)

    @property
    def fwhm_01(self) -> float:
        return fourier_limited_fwhm(self.lifetime_s1v1)

    def zpl_center(self, field: float = 0.0) -> float:
        return self.nu00 + stark_shift(field, self.stark)

    def transition_center(self, scheme: Scheme, field: float = 0.0) -> float:
        nu = self.zpl_center(field)
        if scheme is Scheme.PUMP_01:
            nu += self.vib_offset_01
        return nu

    def transition_fwhm(self, scheme: Scheme) -> float:
        return self.natural_fwhm if scheme is Scheme.ZPL_00 else self.fwhm_01


@dataclass(frozen=True)
class LaserField:
    frequency: float = DEFAULT_NU00
    power: float = 1e-9
    linewidth: float = 1e6
    polarization_axis: tuple[float, float] = (1.0, 0.0)
    focus_position: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.power < 0:
            raise DomainError("laser power must be non-negative")
        if self.linewidth < 0:
            raise DomainError("laser linewidth must be non-negative")
        object.__setattr__(
            self, "polarization_axis", _unit(self.polarization_axis, "polarization_axis")
        )
        object.__setattr__(self, "focus_position", tuple(float(c) for c in self.focus_position))

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.frequency


@dataclass(frozen=True)
class PumpCalibration:
    """On-resonance pump rate per watt for each scheme.

    The lineshape entering :func:`excitation_rate` is peak-normalised, so
    these constants are the pump rate at zero detuning per unit power.
    The ZPL constant gives s = 1 at 1 nW for a 9.4 ns molecule; the 0-1
    constant is 100 times smaller.
    """

    sigma_zpl: float = 1.0 / (DEFAULT_LIFETIME_S1 * 1e-9)
    sigma_01: float = 1.0 / (DEFAULT_LIFETIME_S1 * 1e-9) / 100.0

    def sigma(self, scheme: Scheme) -> float:
        return self.sigma_zpl if scheme is Scheme.ZPL_00 else self.sigma_01


DEFAULT_CALIBRATION = PumpCalibration()


def lorentzian_profile(nu, nu0: float, fwhm: float):
    """Unit-area Lorentzian density (1/Hz)."""
    if not fwhm > 0:
        raise DomainError(f"fwhm must be positive, got {fwhm}")
    half = 0.5 * fwhm
    d = np.asarray(nu, dtype=float) - nu0
    out = (half / math.pi) / (d * d + half * half)
    return out if out.ndim else float(out)


def lorentzian_peak_normalised(nu, nu0: float, fwhm: float):
    half = 0.5 * fwhm
    d = np.asarray(nu, dtype=float) - nu0
    out = half * half / (d * d + half * half)
    return out if out.ndim else float(out)


def fourier_limited_fwhm(lifetime: float) -> float:
    if not lifetime > 0:
        raise DomainError(f"lifetime must be positive, got {lifetime}")
    return 1.0 / (2.0 * math.pi * lifetime)


def stark_shift(field: float, stark: StarkResponse):
    return stark.linear_coeff * field + stark.quadratic_coeff * field * field


def field_from_voltage(voltage: float, gap: float) -> float:
    if not gap > 0:
        raise DomainError(f"electrode gap must be positive, got {gap}")
    return voltage / gap


def psf_fwhm(wavelength: float, na: float = DEFAULT_NA) -> float:
    """Gaussian approximation of the focal spot, 0.51*lambda/NA (same unit as wavelength)."""
    return 0.51 * wavelength / na


def psf_weight(dx, dy, fwhm):
    """Peak-normalised Gaussian spot; dx, dy and fwhm share a unit."""
    r2 = np.asarray(dx, dtype=float) ** 2 + np.asarray(dy, dtype=float) ** 2
    out = np.exp(-4.0 * math.log(2.0) * r2 / (fwhm * fwhm))
    return out if out.ndim else float(out)


def excitation_rate(
    laser: LaserField,
    mol: Molecule,
    scheme: Scheme,
    field: float = 0.0,
    na: float = DEFAULT_NA,
    calibration: PumpCalibration = DEFAULT_CALIBRATION,
) -> float:
    """Unsaturated pump rate R (1/s) of ``mol`` by ``laser``.

    The transition Lorentzian is convolved with the laser line (widths add)
    and peak-normalised, then scaled by the polarisation projection and the
    focal-spot weight at the molecule position.
    """
    center = mol.transition_center(scheme, field)
    width = mol.transition_fwhm(scheme) + laser.linewidth
    line = lorentzian_peak_normalised(laser.frequency, center, width)
    px, py = laser.polarization_axis
    dx, dy = mol.dipole_axis
    cos2 = (px * dx + py * dy) ** 2
    spot = psf_fwhm(laser.wavelength * 1e9, na)
    fx, fy = laser.focus_position
    mx, my = mol.position
    weight = psf_weight(fx - mx, fy - my, spot)
    return calibration.sigma(scheme) * laser.power * line * cos2 * weight


@dataclass(frozen=True)
class SaturationState:
    population: float
    emitted_rate: float
    antibunching_rate: float


def saturation(rate_pump: float, gamma: float) -> SaturationState:
    """Steady state of the incoherently pumped two-level system."""
    if rate_pump < 0:
        raise DomainError("pump rate must be non-negative")
    if not gamma > 0:
        raise DomainError("decay rate must be positive")
    if math.isinf(rate_pump):
        return SaturationState(1.0, gamma, math.inf)
    p = rate_pump / (rate_pump + gamma)
    return SaturationState(p, p * gamma, rate_pump + gamma)


def pump_for_antibunching(k: float, gamma: float) -> float:
    """Pump rate giving an antibunching rate constant ``k`` = R + gamma."""
    if k < gamma:
        raise DomainError("antibunching rate cannot be below the decay rate")
    return k - gamma


def frequency_to_wavelength_nm(nu):
    return SPEED_OF_LIGHT / np.asarray(nu, dtype=float) * 1e9


def wavelength_nm_to_frequency(lam_nm):
    return SPEED_OF_LIGHT / (np.asarray(lam_nm, dtype=float) * 1e-9)
