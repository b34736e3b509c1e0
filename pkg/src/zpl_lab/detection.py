"""Optical filtering and photon detection.

Every element acts on an :class:`~zpl_lab.engine.EventStream` photon by
photon (independent Bernoulli trials) and preserves time order.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _backend
from .engine import EventStream
from .errors import DomainError, UnorderedStreamError
from .photophysics import frequency_to_wavelength_nm
from .rng import derive_rng

# per-detector Gaussian jitter that turns 1 - exp(-|tau|/5.5 ns) into
# g2(0) = 0.18 after convolution with the difference of two such jitters
DEFAULT_JITTER_SIGMA = 1.02577113e-9


class FilterKind(enum.Enum):
    LONG_PASS = "long_pass"
    BAND_PASS = "band_pass"


@dataclass(frozen=True)
class SpectralFilter:
    """Ideal edge filter; wavelengths in nm.

    LONG_PASS transmits wavelengths >= ``edge``; BAND_PASS transmits
    ``|lambda - center| <= width / 2``.
    """

    kind: FilterKind
    edge: float | None = None
    center: float | None = None
    width: float | None = None
    transmission_pass: float = 0.95
    transmission_stop: float = 1e-4

    def __post_init__(self):
        for name in ("transmission_pass", "transmission_stop"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1]")
        if self.kind is FilterKind.LONG_PASS and self.edge is None:
            raise DomainError("long-pass filter needs an edge wavelength")
        if self.kind is FilterKind.BAND_PASS:
            if self.center is None or self.width is None or not self.width > 0:
                raise DomainError("band-pass filter needs a center and a positive width")

    @classmethod
    def long_pass(cls, edge_nm: float, **kw) -> "SpectralFilter":
        return cls(FilterKind.LONG_PASS, edge=edge_nm, **kw)

    @classmethod
    def band_pass(cls, center_nm: float, width_nm: float, **kw) -> "SpectralFilter":
        return cls(FilterKind.BAND_PASS, center=center_nm, width=width_nm, **kw)

    def passes(self, nu) -> np.ndarray:
        lam = frequency_to_wavelength_nm(nu)
        if self.kind is FilterKind.LONG_PASS:
            return lam >= self.edge
        return np.abs(lam - self.center) <= 0.5 * self.width

    def transmission(self, nu):
        out = np.where(self.passes(nu), self.transmission_pass, self.transmission_stop)
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class FabryPerot:
    fsr: float = 1.5e9
    finesse: float = 200.0
    peak_offset: float = 0.0

    def __post_init__(self):
        if not self.fsr > 0:
            raise DomainError("fsr must be positive")
        if not self.finesse > 1:
            raise DomainError("finesse must exceed 1")

    @property
    def fwhm(self) -> float:
        return self.fsr / self.finesse

    def tuned(self, peak_offset: float) -> "FabryPerot":
        return FabryPerot(self.fsr, self.finesse, peak_offset)


def fabry_perot_transmission(nu, fp: FabryPerot):
    """Airy transmission of a lossless etalon."""
    # fmod is exact, so shifting nu by whole FSRs gives bit-identical output
    r = np.fmod(np.asarray(nu, dtype=float) - fp.peak_offset, fp.fsr)
    r = np.where(r < 0, r + fp.fsr, r)
    r = np.where(r >= 0.5 * fp.fsr, r - fp.fsr, r)
    coeff = (2.0 * fp.finesse / math.pi) ** 2
    out = 1.0 / (1.0 + coeff * np.sin(math.pi * r / fp.fsr) ** 2)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class Detector:
    quantum_efficiency: float = 0.7
    jitter_sigma: float = DEFAULT_JITTER_SIGMA
    dead_time: float = 50e-9
    dark_rate: float = 100.0
    tick: float = 4e-12

    def __post_init__(self):
        if not 0.0 <= self.quantum_efficiency <= 1.0:
            raise DomainError("quantum efficiency must lie in [0, 1]")
        for name in ("jitter_sigma", "dead_time", "dark_rate"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be non-negative")
        if not self.tick > 0:
            raise DomainError("tick must be positive")


@dataclass
class DetectorRecords:
    """Detector clicks as parallel ``channel``/``ticks`` arrays."""

    channel: np.ndarray
    ticks: np.ndarray
    tick: float = 4e-12

    def __post_init__(self):
        self.channel = np.ascontiguousarray(self.channel, dtype=np.uint8)
        self.ticks = np.ascontiguousarray(self.ticks, dtype=np.uint64)
        if len(self.channel) != len(self.ticks):
            raise ValueError("channel and ticks must have equal length")

    def __len__(self) -> int:
        return len(self.ticks)

    @property
    def times(self) -> np.ndarray:
        return self.ticks.astype(np.float64) * self.tick

    def for_channel(self, channel: int) -> "DetectorRecords":
        sel = self.channel == channel
        return DetectorRecords(self.channel[sel], self.ticks[sel], self.tick)

    @property
    def channels(self) -> list[int]:
        return sorted(int(c) for c in np.unique(self.channel))

    @classmethod
    def merge(cls, parts: Sequence["DetectorRecords"]) -> "DetectorRecords":
        parts = [p for p in parts]
        if not parts:
            return cls(np.empty(0), np.empty(0))
        tick = parts[0].tick
        if any(p.tick != tick for p in parts):
            raise ValueError("cannot merge records with different ticks")
        ch = np.concatenate([p.channel for p in parts])
        tk = np.concatenate([p.ticks for p in parts])
        order = np.lexsort((ch, tk))
        return cls(ch[order], tk[order], tick)


def _thin(events: EventStream, prob, rng) -> EventStream:
    keep = rng.random(len(events)) < prob
    return events[keep]


def apply_spectral_filter(events: EventStream, filt: SpectralFilter, seed: int, *labels) -> EventStream:
    rng = derive_rng(seed, "filter", *labels)
    return _thin(events, filt.transmission(events.frequency), rng)


def apply_fabry_perot(events: EventStream, fp: FabryPerot, seed: int, *labels) -> EventStream:
    rng = derive_rng(seed, "etalon", *labels)
    return _thin(events, fabry_perot_transmission(events.frequency, fp), rng)


def beam_splitter(events: EventStream, reflectivity: float, seed: int, *labels):
    """Route each photon to output A with probability ``reflectivity``."""
    if not 0.0 <= reflectivity <= 1.0:
        raise DomainError("reflectivity must lie in [0, 1]")
    rng = derive_rng(seed, "beam_splitter", *labels)
    to_a = rng.random(len(events)) < reflectivity
    return events[to_a], events[~to_a]


def polarizer_keep_probability(angle, axis, extinction: float):
    """cos^2(theta) + sin^2(theta)/extinction; NaN angles count as unpolarised."""
    if not extinction >= 1:
        raise DomainError("extinction must be >= 1")
    axis_angle = math.atan2(axis[1], axis[0])
    angle = np.asarray(angle, dtype=np.float64)
    c2 = np.cos(angle - axis_angle) ** 2
    c2 = np.where(np.isnan(angle), 0.5, c2)
    return c2 + (1.0 - c2) / extinction


def polarizer(events: EventStream, axis, extinction: float, seed: int, *labels) -> EventStream:
    rng = derive_rng(seed, "polarizer", *labels)
    return _thin(events, polarizer_keep_probability(events.polarization, axis, extinction), rng)


def detect(
    events,
    det: Detector,
    channel: int,
    seed: int,
    *,
    collection_efficiency: float = 1.0,
    duration: float | None = None,
) -> DetectorRecords:
    """Turn photons (an EventStream or an array of times) into clicks.

    Chain: Bernoulli thinning by ``quantum_efficiency * collection_efficiency``,
    Gaussian timing jitter, Poisson dark counts over ``[0, duration)`` (only when
    ``duration`` is given),
    re-sort, dead-time pruning, quantisation to ``det.tick``.  Clicks
    falling outside the acquisition window are discarded.
    """
    times = events.time if isinstance(events, EventStream) else np.asarray(events, dtype=float)
    if len(times) > 1 and np.any(np.diff(times) < 0):
        raise UnorderedStreamError("detect() needs time-ordered input")
    rng = derive_rng(seed, "detect", channel)
    eff = det.quantum_efficiency * collection_efficiency
    t = times[rng.random(len(times)) < eff]
    if det.jitter_sigma > 0:
        t = t + det.jitter_sigma * rng.standard_normal(len(t))
    end = math.inf if duration is None else duration
    if det.dark_rate > 0 and duration is not None and duration > 0:
        n_dark = rng.poisson(det.dark_rate * duration)
        t = np.concatenate([t, rng.random(n_dark) * duration])
    t = np.sort(t, kind="stable")
    t = t[(t >= 0.0) & (t < end)]
    if det.dead_time > 0:
        t = t[_backend.dead_time_mask(t, det.dead_time)]
    ticks = np.floor(t / det.tick).astype(np.uint64)
    return DetectorRecords(np.full(len(ticks), channel, dtype=np.uint8), ticks, det.tick)
