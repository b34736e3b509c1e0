"""Virtual instruments: one function per measurement of the experiment.

Each scan point runs the full generate -> filter -> detect chain with its
own seed derived from the master seed and the point index, so results do
not depend on evaluation order or on ``ZPL_LAB_THREADS``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import signal

from . import _backend
from .detection import (
    Detector,
    DetectorRecords,
    FabryPerot,
    SpectralFilter,
    apply_spectral_filter,
    beam_splitter,
    detect,
    fabry_perot_transmission,
)
from .engine import (
    DEFAULT_BACKGROUND_BAND,
    DEFAULT_STOKES_LINES,
    EventStream,
    TrajectoryConfig,
    VibronicLine,
    generate_background,
    iter_stream,
    merge_streams,
)
from .errors import ConfigurationError, DomainError
from .fitting import FitResult, fit_lorentzian, fit_saturation, poisson_sigma
from .photophysics import (
    DEFAULT_CALIBRATION,
    DEFAULT_NA,
    LaserField,
    Molecule,
    PumpCalibration,
    Scheme,
    field_from_voltage,
    frequency_to_wavelength_nm,
    psf_fwhm,
    psf_weight,
    wavelength_nm_to_frequency,
)
from .rng import derive_int, derive_rng


def max_workers() -> int:
    try:
        return max(1, int(os.environ.get("ZPL_LAB_THREADS", "1")))
    except ValueError:
        return 1


def parallel_map(func: Callable, items: Sequence) -> list:
    """Ordered map; threads only when ZPL_LAB_THREADS > 1."""
    n = max_workers()
    if n == 1 or len(items) < 2:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(func, items))


# ---------------------------------------------------------------- setup types

@dataclass(frozen=True)
class EmissionModel:
    stokes_lines: tuple[VibronicLine, ...] = DEFAULT_STOKES_LINES
    extra_lines: tuple[VibronicLine, ...] = ()
    wing_width: float = 1e12
    background_band: tuple[float, float] = DEFAULT_BACKGROUND_BAND

    def trajectory(self, duration, seed, background_rate=0.0, keep_fraction=1.0) -> TrajectoryConfig:
        return TrajectoryConfig(
            duration=duration,
            seed=seed,
            background_rate=background_rate,
            extra_lines=self.extra_lines,
            stokes_lines=self.stokes_lines,
            wing_width=self.wing_width,
            background_band=self.background_band,
            keep_fraction=keep_fraction,
        )


@dataclass(frozen=True)
class Microscope:
    molecules: tuple[Molecule, ...]
    filters: tuple[SpectralFilter, ...] = ()
    detector: Detector = field(default_factory=Detector)
    collection_efficiency: float = 0.0335
    na: float = DEFAULT_NA
    electrode_gap: float = 18e-6
    voltage: float = 0.0
    background_rate: float = 0.0
    name: str = "A"
    source_base: int = 0

    def __post_init__(self):
        if not 0 < self.collection_efficiency <= 1:
            raise DomainError("collection efficiency must lie in (0, 1]")
        object.__setattr__(self, "molecules", tuple(self.molecules))
        object.__setattr__(self, "filters", tuple(self.filters))

    @property
    def field(self) -> float:
        return field_from_voltage(self.voltage, self.electrode_gap)

    def with_voltage(self, voltage: float) -> "Microscope":
        return replace(self, voltage=voltage)


@dataclass(frozen=True)
class Setup:
    microscope: Microscope
    laser: LaserField = field(default_factory=LaserField)
    emission: EmissionModel = field(default_factory=EmissionModel)
    calibration: PumpCalibration = DEFAULT_CALIBRATION

    def with_laser(self, **changes) -> "Setup":
        return replace(self, laser=replace(self.laser, **changes))

    def with_microscope(self, **changes) -> "Setup":
        return replace(self, microscope=replace(self.microscope, **changes))


@dataclass
class SpectrumHistogram:
    axis: str  # "frequency" (Hz) or "wavelength" (nm)
    bin_edges: np.ndarray
    counts: np.ndarray
    dwell: float

    def __post_init__(self):
        self.bin_edges = np.asarray(self.bin_edges, dtype=float)
        self.counts = np.asarray(self.counts)
        if np.any(np.diff(self.bin_edges) <= 0):
            raise ValueError("bin edges must be strictly increasing")
        if len(self.counts) != len(self.bin_edges) - 1:
            raise ValueError("counts length must equal the number of bins")

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def rates(self) -> np.ndarray:
        return self.counts / self.dwell if self.dwell > 0 else np.zeros(len(self.counts))


@dataclass
class CorrelationHistogram:
    tau_edges: np.ndarray
    coincidences: np.ndarray
    normalization: float
    duration: float
    rate_a: float
    rate_b: float

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.tau_edges[1:] + self.tau_edges[:-1])

    @property
    def bin_width(self) -> float:
        return float(self.tau_edges[1] - self.tau_edges[0])

    @property
    def g2(self) -> np.ndarray:
        return self.coincidences / self.normalization

    @property
    def g2_error(self) -> np.ndarray:
        return np.sqrt(np.maximum(self.coincidences, 1)) / self.normalization


@dataclass
class ImageMap:
    x_edges: np.ndarray
    y_edges: np.ndarray
    counts: np.ndarray  # indexed [iy, ix]

    def __post_init__(self):
        if self.counts.shape != (len(self.y_edges) - 1, len(self.x_edges) - 1):
            raise ValueError("image grid does not match its edges")

    @property
    def x_centers(self):
        return 0.5 * (self.x_edges[1:] + self.x_edges[:-1])

    @property
    def y_centers(self):
        return 0.5 * (self.y_edges[1:] + self.y_edges[:-1])


def edges_from_centers(centers) -> np.ndarray:
    c = np.asarray(centers, dtype=float)
    if len(c) == 1:
        return np.array([c[0] - 0.5, c[0] + 0.5])
    mid = 0.5 * (c[1:] + c[:-1])
    return np.concatenate([[c[0] - (mid[0] - c[0])], mid, [c[-1] + (c[-1] - mid[-1])]])


# ---------------------------------------------------------------- photon pipeline

def _filter_chain(events: EventStream, filters, seed, *labels) -> EventStream:
    for k, filt in enumerate(filters):
        events = apply_spectral_filter(events, filt, seed, *labels, k)
    return events


def iter_collected(
    setup: Setup,
    scheme: Scheme,
    duration: float,
    seed: int,
    *,
    pump_rates: Sequence[float] | None = None,
    apply_filters: bool = True,
):
    """Collected photons, already thinned by the collection efficiency and
    passed through the microscope filters, as ordered per-source chunks."""
    mic = setup.microscope
    cfg = setup.emission.trajectory(duration, seed, mic.background_rate, mic.collection_efficiency)
    filters = mic.filters if apply_filters else ()
    for i, mol in enumerate(mic.molecules):
        src = mic.source_base + i
        chunks = iter_stream(
            mol, setup.laser, cfg, scheme=scheme, field=mic.field, na=mic.na,
            calibration=setup.calibration, source=src,
            pump_rate=None if pump_rates is None else pump_rates[i],
        )
        for c, chunk in enumerate(chunks):
            yield _filter_chain(chunk, filters, seed, "src", src, c)
    bg = generate_background(cfg)
    if len(bg):
        yield _filter_chain(bg, filters, seed, "background")


def collect_photons(setup: Setup, scheme: Scheme, duration: float, seed: int, **kw) -> EventStream:
    by_source: dict[int, list[EventStream]] = {}
    for chunk in iter_collected(setup, scheme, duration, seed, **kw):
        if len(chunk):
            by_source.setdefault(int(chunk.source[0]), []).append(chunk)
    return merge_streams([EventStream.concatenate(v) for v in by_source.values()])


def count_detected(setup: Setup, scheme: Scheme, dwell: float, seed: int, **kw) -> int:
    if dwell <= 0:
        return 0
    photons = collect_photons(setup, scheme, dwell, seed, **kw)
    return len(detect(photons, setup.microscope.detector, 0, seed, duration=dwell))


def check_scheme_filters(setup: Setup, scheme: Scheme) -> None:
    """Excitation via the 0-0 line must detect red-shifted light only; via
    the 0-1 line it must isolate the 0-0 ZPL."""
    mic = setup.microscope
    if not mic.molecules:
        raise ConfigurationError("microscope has no molecules")
    ref = mic.molecules[0]
    zpl = ref.zpl_center(mic.field)
    stokes = zpl + min(l.offset for l in setup.emission.stokes_lines)
    t_zpl = float(np.prod([f.transmission(zpl) for f in mic.filters])) if mic.filters else 1.0
    t_stokes = float(np.prod([f.transmission(stokes) for f in mic.filters])) if mic.filters else 1.0
    if scheme is Scheme.ZPL_00 and t_zpl > 0.01:
        raise ConfigurationError("ZPL_00 excitation needs filters that block the 0-0 emission")
    if scheme is Scheme.PUMP_01 and (t_zpl < 0.5 or t_stokes > 0.01):
        raise ConfigurationError("PUMP_01 excitation needs a band-pass isolating the 0-0 ZPL")


def power_for_saturation(setup: Setup, s: float, scheme: Scheme, molecule: int = 0) -> float:
    """Laser power giving saturation parameter ``s`` on resonance at the molecule."""
    mol = setup.microscope.molecules[molecule]
    px, py = setup.laser.polarization_axis
    dx, dy = mol.dipole_axis
    cos2 = (px * dx + py * dy) ** 2
    spot = psf_fwhm(setup.laser.wavelength * 1e9, setup.microscope.na)
    fx, fy = setup.laser.focus_position
    w = psf_weight(fx - mol.position[0], fy - mol.position[1], spot)
    return s * mol.gamma / (setup.calibration.sigma(scheme) * cos2 * w)


# ---------------------------------------------------------------- instruments

def excitation_scan(
    setup: Setup,
    scheme: Scheme,
    freq_points,
    dwell: float,
    seed: int,
    *,
    check_filters: bool = True,
) -> SpectrumHistogram:
    """Detected counts per laser frequency (absolute Hz)."""
    if dwell < 0:
        raise DomainError("dwell must be non-negative")
    if check_filters:
        check_scheme_filters(setup, scheme)
    freqs = np.asarray(freq_points, dtype=float)

    def point(k):
        s = setup.with_laser(frequency=float(freqs[k]))
        return count_detected(s, scheme, dwell, derive_int(seed, "scan", k))

    counts = np.array(parallel_map(point, range(len(freqs))), dtype=np.int64)
    return SpectrumHistogram("frequency", edges_from_centers(freqs), counts, dwell)


def raster_scan(
    setup: Setup,
    x_range,
    y_range,
    step: float,
    dwell: float,
    seed: int,
    scheme: Scheme = Scheme.ZPL_00,
) -> ImageMap:
    """Move the laser focus over a grid (nm) and count detections per pixel."""
    if not step > 0:
        raise DomainError("step must be positive")
    check_scheme_filters(setup, scheme)
    nx = max(1, int(round((x_range[1] - x_range[0]) / step)))
    ny = max(1, int(round((y_range[1] - y_range[0]) / step)))
    x_edges = x_range[0] + step * np.arange(nx + 1)
    y_edges = y_range[0] + step * np.arange(ny + 1)
    xc = 0.5 * (x_edges[1:] + x_edges[:-1])
    yc = 0.5 * (y_edges[1:] + y_edges[:-1])

    def pixel(k):
        iy, ix = divmod(k, nx)
        s = setup.with_laser(focus_position=(float(xc[ix]), float(yc[iy])))
        return count_detected(s, scheme, dwell, derive_int(seed, "pixel", k))

    counts = np.array(parallel_map(pixel, range(nx * ny)), dtype=np.int64).reshape(ny, nx)
    return ImageMap(x_edges, y_edges, counts)


def emission_spectrum(
    events: EventStream,
    resolution: float,
    wavelength_range,
    seed: int,
    bin_width: float | None = None,
) -> SpectrumHistogram:
    """Spectrometer readout (nm).

    Each photon's wavelength is blurred by a Gaussian of FWHM
    ``resolution`` before binning, which samples the convolution with the
    instrument profile while keeping integer, event-conserving counts.
    """
    if not resolution > 0:
        raise DomainError("resolution must be positive")
    lo, hi = wavelength_range
    bin_width = resolution / 4.0 if bin_width is None else bin_width
    nbins = max(1, int(round((hi - lo) / bin_width)))
    edges = np.linspace(lo, hi, nbins + 1)
    lam = frequency_to_wavelength_nm(events.frequency)
    rng = derive_rng(seed, "spectrometer")
    lam = lam + resolution / (2.0 * math.sqrt(2.0 * math.log(2.0))) * rng.standard_normal(len(lam))
    counts, _ = np.histogram(lam, bins=edges)
    return SpectrumHistogram("wavelength", edges, counts.astype(np.int64), 0.0)


@dataclass
class BandAreas:
    total: float
    band00: float
    zpl: float
    wing: float
    wing_width: float

    @property
    def franck_condon(self) -> float:
        return self.band00 / self.total

    @property
    def debye_waller(self) -> float:
        return self.zpl / self.band00


def band_areas(spec: SpectrumHistogram, zpl_nm: float, band_window=(-1.0, 9.0), zpl_halfwidth=1.0) -> BandAreas:
    """Split an emission spectrum into 0-0 band, ZPL and phonon wing areas.

    The wing under the ZPL is estimated by fitting an exponential (in
    optical frequency) to the red side outside ``zpl_halfwidth`` and
    integrating it from the ZPL to infinity.
    """
    c = spec.centers
    counts = spec.counts.astype(float)
    total = counts.sum()
    in_band = (c >= zpl_nm + band_window[0]) & (c < zpl_nm + band_window[1])
    band_counts = counts[in_band].sum()
    nu0 = float(wavelength_nm_to_frequency(zpl_nm))
    nu_edges = wavelength_nm_to_frequency(spec.bin_edges)
    dnu = nu_edges[:-1] - nu_edges[1:]
    offset = nu0 - wavelength_nm_to_frequency(c)  # >0 on the red side
    wing_sel = (c > zpl_nm + zpl_halfwidth) & (c < zpl_nm + band_window[1]) & (counts > 0)
    x = offset[wing_sel]
    density = counts[wing_sel] / dnu[wing_sel]
    wts = np.sqrt(counts[wing_sel])
    slope, intercept = np.polyfit(x, np.log(density), 1, w=wts)
    width = -1.0 / slope
    a0 = math.exp(intercept)
    wing_total = a0 * width
    # wing beyond the band window on the red side is not in band_counts
    red_edge = nu0 - float(wavelength_nm_to_frequency(zpl_nm + band_window[1]))
    tail = a0 * width * math.exp(-red_edge / width)
    zpl = band_counts - (wing_total - tail)
    return BandAreas(total, band_counts + tail, zpl, wing_total, width)


def hbt_correlate(
    records_a: DetectorRecords,
    records_b: DetectorRecords,
    bin_width: float,
    tau_max: float,
    duration: float | None = None,
) -> CorrelationHistogram:
    """Start-multistop histogram of t_B - t_A within +-tau_max.

    Bins are centred on zero delay.  The normalisation is the expected
    count per bin for uncorrelated streams, rate_A * rate_B * bin * T.
    """
    if not bin_width > 0:
        raise DomainError("bin width must be positive")
    tick = records_a.tick
    if records_b.tick != tick:
        raise ValueError("records must share a tick")
    half = int(round(tau_max / bin_width))
    nbins = 2 * half + 1
    edges = (np.arange(nbins + 1) - (half + 0.5)) * bin_width
    a = records_a.ticks.astype(np.int64)
    b = records_b.ticks.astype(np.int64)
    coinc = _backend.correlate(a, b, edges[0] / tick, bin_width / tick, nbins)
    if duration is None:
        both = np.concatenate([a, b])
        duration = float(both.max() - both.min()) * tick if len(both) else 0.0
    ra = len(a) / duration if duration > 0 else 0.0
    rb = len(b) / duration if duration > 0 else 0.0
    norm = ra * rb * bin_width * duration
    return CorrelationHistogram(edges, coinc, norm, duration, ra, rb)


@dataclass
class HbtRun:
    histogram: CorrelationHistogram
    records: DetectorRecords  # both channels, time-ordered


def hbt_measurement(
    setup: Setup,
    scheme: Scheme,
    duration: float,
    seed: int,
    *,
    bin_width: float = 0.5e-9,
    tau_max: float = 100e-9,
    reflectivity: float = 0.5,
    detectors: tuple[Detector, Detector] | None = None,
    pump_rates: Sequence[float] | None = None,
) -> HbtRun:
    """Collected photons -> 50:50 beam splitter -> two detectors -> correlator."""
    det_a, det_b = detectors or (setup.microscope.detector, setup.microscope.detector)
    arms: tuple[list, list] = ([], [])
    for k, chunk in enumerate(iter_collected(setup, scheme, duration, seed, pump_rates=pump_rates)):
        a, b = beam_splitter(chunk, reflectivity, seed, k)
        arms[0].append(a.time)
        arms[1].append(b.time)
    times = [np.sort(np.concatenate(arm), kind="stable") if arm else np.empty(0) for arm in arms]
    rec_a = detect(times[0], det_a, 0, seed, duration=duration)
    rec_b = detect(times[1], det_b, 1, seed, duration=duration)
    hist = hbt_correlate(rec_a, rec_b, bin_width, tau_max, duration)
    return HbtRun(hist, DetectorRecords.merge([rec_a, rec_b]))


def fp_scan(events: EventStream, fp: FabryPerot, offsets, dwell_equivalent: float, seed: int) -> SpectrumHistogram:
    """Transmitted photon counts of a scanning etalon, one Bernoulli trial
    per photon and offset.  ``offsets`` are absolute resonance frequencies."""
    offsets = np.asarray(offsets, dtype=float)
    freq = events.frequency

    def point(k):
        rng = derive_rng(seed, "fp", k)
        t = fabry_perot_transmission(freq, fp.tuned(float(offsets[k])))
        return int(np.count_nonzero(rng.random(len(freq)) < t))

    counts = np.array(parallel_map(point, range(len(offsets))), dtype=np.int64)
    return SpectrumHistogram("frequency", edges_from_centers(offsets), counts, dwell_equivalent)


def count_peaks(hist: SpectrumHistogram, rel_prominence: float = 0.5) -> int:
    y = hist.counts.astype(float)
    if y.max() <= 0:
        return 0
    peaks, _ = signal.find_peaks(y, prominence=rel_prominence * (y.max() - np.median(y)))
    return len(peaks)


@dataclass
class SaturationCurve:
    powers: np.ndarray
    counts: np.ndarray
    dwell: float
    fit: FitResult | None = None

    @property
    def rates(self) -> np.ndarray:
        return self.counts / self.dwell

    @property
    def rate_errors(self) -> np.ndarray:
        return poisson_sigma(self.counts) / self.dwell

    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.powers.tolist(), self.rates.tolist()))


def saturation_curve(
    setup: Setup,
    powers,
    dwell: float,
    seed: int,
    scheme: Scheme = Scheme.PUMP_01,
) -> SaturationCurve:
    """Detected rate on resonance versus pump power, with a saturation fit."""
    powers = np.asarray(powers, dtype=float)
    if np.any(powers <= 0):
        raise DomainError("powers must be positive")
    check_scheme_filters(setup, scheme)
    mic = setup.microscope
    nu = mic.molecules[0].transition_center(scheme, mic.field)

    def point(k):
        s = setup.with_laser(frequency=nu, power=float(powers[k]))
        return count_detected(s, scheme, dwell, derive_int(seed, "power", k))

    counts = np.array(parallel_map(point, range(len(powers))), dtype=np.int64)
    curve = SaturationCurve(powers, counts, dwell)
    curve.fit = fit_saturation(powers, curve.rates, curve.rate_errors)
    return curve


# ---------------------------------------------------------------- line finding

def scan_and_fit(setup: Setup, scheme: Scheme, freqs, dwell: float, seed: int, **kw) -> tuple[SpectrumHistogram, FitResult]:
    hist = excitation_scan(setup, scheme, freqs, dwell, seed, **kw)
    return hist, fit_lorentzian(hist.centers, hist.counts)


def locate_line(
    setup: Setup,
    scheme: Scheme,
    window: tuple[float, float],
    dwell: float,
    seed: int,
    *,
    coarse_step: float = 5e6,
    fine_span: float = 120e6,
    fine_points: int = 121,
) -> FitResult:
    """Coarse survey of ``window`` (absolute Hz) then a fitted fine scan around the maximum."""
    coarse = np.arange(window[0], window[1] + 0.5 * coarse_step, coarse_step)
    survey = excitation_scan(setup, scheme, coarse, dwell, derive_int(seed, "coarse"))
    if survey.counts.max() <= 0:
        raise ConfigurationError("no line found in the survey window")
    peak = coarse[int(np.argmax(survey.counts))]
    fine = peak + np.linspace(-0.5 * fine_span, 0.5 * fine_span, fine_points)
    _, fit = scan_and_fit(setup, scheme, fine, dwell, derive_int(seed, "fine"), check_filters=False)
    return fit
