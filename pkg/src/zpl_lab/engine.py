"""Kinetic Monte-Carlo generation of photon emission streams.

A molecule cycles ground -> excited -> ground.  The residence time in the
ground state is Exponential(R) with R the pump rate, the optional S1,v=1
relaxation is Exponential(1/lifetime_s1v1), and the S1,v=0 residence is
Exponential(gamma).  Each completed cycle emits one photon whose band and
frequency are drawn independently of its timing.

``TrajectoryConfig.keep_fraction`` < 1 returns an exact independent
thinning of that stream without simulating the discarded cycles: the
number of cycles between retained photons is Geometric(p), and the sum
of G exponential residences of a given rate is Gamma(G).  Instruments
use this to fold the collection efficiency into generation.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .errors import DomainError, UnorderedStreamError
from .photophysics import (
    DEFAULT_CALIBRATION,
    DEFAULT_NA,
    HZ_PER_WAVENUMBER,
    LaserField,
    Molecule,
    PumpCalibration,
    Scheme,
    excitation_rate,
    wavelength_nm_to_frequency,
)
from .rng import derive_rng


class Band(enum.IntEnum):
    ZPL = 0
    PHONON_WING = 1
    STOKES = 2
    BACKGROUND = 3


BACKGROUND_SOURCE = np.iinfo(np.int16).max


@dataclass(frozen=True)
class VibronicLine:
    """A Stokes-shifted emission line; ``offset`` is relative to the ZPL (Hz, negative = red)."""

    offset: float
    weight: float
    fwhm: float

    def __post_init__(self):
        if self.weight < 0:
            raise DomainError("line weight must be non-negative")
        if not self.fwhm > 0:
            raise DomainError("line fwhm must be positive")


DEFAULT_STOKES_LINES = (
    VibronicLine(-750.0 * HZ_PER_WAVENUMBER, 0.5, 30e9),
    VibronicLine(-1250.0 * HZ_PER_WAVENUMBER, 0.3, 30e9),
    VibronicLine(-1700.0 * HZ_PER_WAVENUMBER, 0.2, 30e9),
)
DEFAULT_BACKGROUND_BAND = (
    float(wavelength_nm_to_frequency(720.0)),
    float(wavelength_nm_to_frequency(560.0)),
)
# Stokes lines are Lorentzians truncated at this many fwhm from their centre
STOKES_TRUNCATION = 20.0


@dataclass(frozen=True)
class TrajectoryConfig:
    duration: float
    seed: int
    background_rate: float = 0.0
    extra_lines: tuple[VibronicLine, ...] = ()
    stokes_lines: tuple[VibronicLine, ...] = DEFAULT_STOKES_LINES
    wing_width: float = 1e12
    background_band: tuple[float, float] = DEFAULT_BACKGROUND_BAND
    keep_fraction: float = 1.0

    def __post_init__(self):
        if not self.duration >= 0:
            raise DomainError("duration must be non-negative")
        if self.seed is None:
            raise DomainError("a seed is required")
        if self.background_rate < 0:
            raise DomainError("background rate must be non-negative")
        if not 0 < self.keep_fraction <= 1:
            raise DomainError("keep_fraction must lie in (0, 1]")
        if not self.wing_width > 0:
            raise DomainError("wing width must be positive")
        if not sum(l.weight for l in self.vibronic_lines) > 0:
            raise DomainError("at least one Stokes line needs positive weight")

    @property
    def vibronic_lines(self) -> tuple[VibronicLine, ...]:
        return tuple(self.stokes_lines) + tuple(self.extra_lines)


class PhotonEvent(NamedTuple):
    time: float
    frequency: float
    band: Band
    polarization_axis: tuple[float, float] | None
    source: int


@dataclass
class EventStream:
    """Struct-of-arrays photon stream.

    ``polarization`` holds the in-plane polarisation angle in radians, NaN
    for unpolarised background.
    """

    time: np.ndarray
    frequency: np.ndarray
    band: np.ndarray
    source: np.ndarray
    polarization: np.ndarray

    def __post_init__(self):
        self.time = np.ascontiguousarray(self.time, dtype=np.float64)
        self.frequency = np.ascontiguousarray(self.frequency, dtype=np.float64)
        self.band = np.ascontiguousarray(self.band, dtype=np.uint8)
        self.source = np.ascontiguousarray(self.source, dtype=np.int16)
        self.polarization = np.ascontiguousarray(self.polarization, dtype=np.float32)
        n = len(self.time)
        if any(len(a) != n for a in (self.frequency, self.band, self.source, self.polarization)):
            raise ValueError("EventStream columns must have equal length")

    @classmethod
    def empty(cls) -> "EventStream":
        return cls(np.empty(0), np.empty(0), np.empty(0), np.empty(0), np.empty(0))

    @classmethod
    def concatenate(cls, parts: Sequence["EventStream"]) -> "EventStream":
        parts = list(parts)
        if not parts:
            return cls.empty()
        return cls(*(np.concatenate([getattr(p, f) for p in parts]) for f in _COLUMNS))

    @classmethod
    def monochromatic(cls, times, frequency: float, angle: float = 0.0, source: int = 0):
        times = np.asarray(times, dtype=float)
        n = len(times)
        return cls(
            times,
            np.full(n, frequency),
            np.full(n, Band.ZPL),
            np.full(n, source),
            np.full(n, angle),
        )

    def __len__(self) -> int:
        return len(self.time)

    def __getitem__(self, index) -> "EventStream":
        return EventStream(*(getattr(self, f)[index] for f in _COLUMNS))

    def __iter__(self) -> Iterator[PhotonEvent]:
        for t, f, b, s, a in zip(self.time, self.frequency, self.band, self.source, self.polarization):
            axis = None if np.isnan(a) else (math.cos(a), math.sin(a))
            yield PhotonEvent(float(t), float(f), Band(int(b)), axis, int(s))

    def is_ordered(self) -> bool:
        return bool(np.all(np.diff(self.time) >= 0))


_COLUMNS = ("time", "frequency", "band", "source", "polarization")


def _infer_scheme(mol: Molecule, laser: LaserField, field: float) -> Scheme:
    d00 = abs(laser.frequency - mol.transition_center(Scheme.ZPL_00, field))
    d01 = abs(laser.frequency - mol.transition_center(Scheme.PUMP_01, field))
    return Scheme.ZPL_00 if d00 <= d01 else Scheme.PUMP_01


def _chunk_size(expected: float) -> int:
    return int(min(max(1024, 1.05 * expected + 6.0 * math.sqrt(expected) + 64), 1 << 21))


def _emission_times(rng, rate_pump, gamma, relax, keep, duration) -> Iterator[np.ndarray]:
    cycle = 1.0 / rate_pump + 1.0 / gamma + relax
    expected = duration / cycle * keep
    t0 = 0.0
    while True:
        n = _chunk_size(expected)
        if keep < 1.0:
            g = rng.geometric(keep, n).astype(np.float64)
            dt = rng.gamma(g, 1.0 / rate_pump) + rng.gamma(g, 1.0 / gamma)
            if relax > 0:
                dt += rng.gamma(g, relax)
        else:
            dt = rng.standard_exponential(n) / rate_pump + rng.standard_exponential(n) / gamma
            if relax > 0:
                dt += rng.standard_exponential(n) * relax
        t = t0 + np.cumsum(dt)
        if t[-1] >= duration:
            yield t[t < duration]
            return
        yield t
        t0 = t[-1]
        expected = max(expected - n, 0.0)


def _truncated_lorentzian(rng, n, fwhm, truncation):
    # CDF span of a Lorentzian cut at +-truncation*fwhm is independent of fwhm
    span = (2.0 / math.pi) * math.atan(2.0 * truncation)
    return 0.5 * fwhm * np.tan(0.5 * math.pi * span * (2.0 * rng.random(n) - 1.0))


def _draw_spectrum(rng, n, mol: Molecule, field: float, cfg: TrajectoryConfig):
    p_zpl, p_wing, _ = mol.branching.band_probabilities()
    u = rng.random(n)
    band = np.full(n, Band.STOKES, dtype=np.uint8)
    band[u < p_zpl + p_wing] = Band.PHONON_WING
    band[u < p_zpl] = Band.ZPL
    nu0 = mol.zpl_center(field)
    freq = np.empty(n)

    zpl = band == Band.ZPL
    k = int(zpl.sum())
    # Lorentzian by inverse CDF
    freq[zpl] = nu0 + 0.5 * mol.natural_fwhm * np.tan(math.pi * (rng.random(k) - 0.5))

    wing = band == Band.PHONON_WING
    freq[wing] = nu0 - cfg.wing_width * rng.standard_exponential(int(wing.sum()))

    stokes = band == Band.STOKES
    k = int(stokes.sum())
    lines = cfg.vibronic_lines
    weights = np.array([l.weight for l in lines], dtype=float)
    which = rng.choice(len(lines), size=k, p=weights / weights.sum())
    offsets = np.array([l.offset for l in lines])[which]
    widths = np.array([l.fwhm for l in lines])[which]
    freq[stokes] = nu0 + offsets + _truncated_lorentzian(rng, k, widths, STOKES_TRUNCATION)
    return band, freq


def iter_stream(
    mol: Molecule,
    laser: LaserField,
    cfg: TrajectoryConfig,
    *,
    scheme: Scheme | None = None,
    field: float = 0.0,
    na: float = DEFAULT_NA,
    calibration: PumpCalibration = DEFAULT_CALIBRATION,
    source: int = 0,
    pump_rate: float | None = None,
) -> Iterator[EventStream]:
    """Molecule emission in time-ordered chunks (no background)."""
    if scheme is None:
        scheme = _infer_scheme(mol, laser, field)
    if pump_rate is None:
        pump_rate = excitation_rate(laser, mol, scheme, field, na, calibration)
    if pump_rate <= 0 or cfg.duration <= 0:
        return
    relax = mol.lifetime_s1v1 if scheme is Scheme.PUMP_01 else 0.0
    rng = derive_rng(cfg.seed, "emitter", source)
    angle = math.atan2(mol.dipole_axis[1], mol.dipole_axis[0])
    for times in _emission_times(rng, pump_rate, mol.gamma, relax, cfg.keep_fraction, cfg.duration):
        n = len(times)
        if n == 0:
            continue
        band, freq = _draw_spectrum(rng, n, mol, field, cfg)
        yield EventStream(times, freq, band, np.full(n, source), np.full(n, angle))


def generate_background(cfg: TrajectoryConfig) -> EventStream:
    """Spectrally flat (in frequency), unpolarised Poisson background."""
    rate = cfg.background_rate * cfg.keep_fraction
    if rate <= 0 or cfg.duration <= 0:
        return EventStream.empty()
    rng = derive_rng(cfg.seed, "background")
    n = rng.poisson(rate * cfg.duration)
    # conditional on the count, Poisson arrival times are iid uniform
    times = np.sort(rng.random(n) * cfg.duration)
    lo, hi = cfg.background_band
    freq = lo + (hi - lo) * rng.random(n)
    return EventStream(
        times,
        freq,
        np.full(n, Band.BACKGROUND),
        np.full(n, BACKGROUND_SOURCE),
        np.full(n, np.nan),
    )


def generate_stream(
    mol: Molecule,
    laser: LaserField,
    cfg: TrajectoryConfig,
    **kwargs,
) -> EventStream:
    """Emission of one molecule plus the configured background, time-ordered.

    Keyword arguments are forwarded to :func:`iter_stream`.
    """
    own = EventStream.concatenate(list(iter_stream(mol, laser, cfg, **kwargs)))
    bg = generate_background(cfg)
    if len(bg) == 0:
        return own
    return merge_streams([own, bg])


def merge_streams(streams: Sequence[EventStream]) -> EventStream:
    """Time-ordered merge; equal timestamps are ordered by source id."""
    streams = [s for s in streams if len(s)]
    for i, s in enumerate(streams):
        if not s.is_ordered():
            raise UnorderedStreamError(f"input stream {i} is not time-ordered")
    if not streams:
        return EventStream.empty()
    if len(streams) == 1:
        return streams[0]
    merged = EventStream.concatenate(streams)
    order = np.lexsort((merged.source, merged.time))
    return merged[order]


def steady_state_rate(pump_rate: float, gamma: float, relax: float = 0.0) -> float:
    """Mean emission rate of the renewal process (1/mean cycle time)."""
    if pump_rate <= 0:
        return 0.0
    return 1.0 / (1.0 / pump_rate + 1.0 / gamma + relax)
