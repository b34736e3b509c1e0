"""Two molecules in independent microscopes, Stark-tuned into resonance."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError, FitError, SearchError
from .fitting import fit_lorentzian, linear_fit
from .instruments import Setup, excitation_scan, locate_line
from .photophysics import Scheme
from .rng import derive_int


@dataclass(frozen=True)
class TwoSourceSetup:
    a: Setup
    b: Setup
    polarizer_axes: tuple[tuple[float, float], tuple[float, float]] = ((1.0, 0.0), (1.0, 0.0))
    g2_0: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.a.microscope.electrode_gap <= 0 or self.b.microscope.electrode_gap <= 0:
            raise DomainError("electrode gaps must be positive")

    def microscope(self, which: str) -> Setup:
        return self.a if which == "A" else self.b

    def with_voltage(self, which: str, voltage: float) -> "TwoSourceSetup":
        s = self.microscope(which)
        s = replace(s, microscope=s.microscope.with_voltage(voltage))
        return replace(self, **{which.lower(): s})

    @property
    def polarization_angle(self) -> float:
        (ax, ay), (bx, by) = self.polarizer_axes
        return math.atan2(ax * by - ay * bx, ax * bx + ay * by)


@dataclass
class StarkMap:
    voltages: np.ndarray
    frequencies: np.ndarray
    counts: np.ndarray  # [voltage, frequency], both microscopes summed
    counts_a: np.ndarray
    counts_b: np.ndarray
    centers_a: np.ndarray
    centers_b: np.ndarray
    center_errors_a: np.ndarray
    center_errors_b: np.ndarray
    tuned: str = "B"

    def tuned_slope(self):
        """Linear fit of the tuned molecule's line centre against voltage (Hz/V)."""
        centers = self.centers_b if self.tuned == "B" else self.centers_a
        errors = self.center_errors_b if self.tuned == "B" else self.center_errors_a
        ok = np.isfinite(centers) & np.isfinite(errors) & (errors > 0)
        return linear_fit(self.voltages[ok], centers[ok], errors[ok])


@dataclass
class OverlapResult:
    voltage: float
    detuning: float
    overlap_metric: float
    predicted_hom_visibility: float
    evaluations: list[tuple[float, float]] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "voltage": self.voltage,
            "detuning": self.detuning,
            "overlap_metric": self.overlap_metric,
            "predicted_hom_visibility": self.predicted_hom_visibility,
            "evaluations": [list(e) for e in self.evaluations],
        }


def spectral_overlap(fwhm_a: float, fwhm_b: float, detuning: float) -> float:
    """Mean two-photon overlap of exponentially decaying wavepackets.

    With gamma = 2*pi*fwhm: (2 sqrt(gA gB)/(gA+gB))^2 * g^2/(g^2 + dw^2),
    g = (gA+gB)/2, dw = 2*pi*detuning.
    """
    if not (fwhm_a > 0 and fwhm_b > 0):
        raise DomainError("linewidths must be positive")
    ga, gb = 2 * math.pi * fwhm_a, 2 * math.pi * fwhm_b
    gbar = 0.5 * (ga + gb)
    dw = 2 * math.pi * detuning
    return (2 * math.sqrt(ga * gb) / (ga + gb)) ** 2 * gbar**2 / (gbar**2 + dw**2)


def hom_visibility(overlap: float, polarization_angle: float, g2_0_a: float = 0.0, g2_0_b: float = 0.0) -> float:
    v = overlap * math.cos(polarization_angle) ** 2 * (1 - g2_0_a) * (1 - g2_0_b)
    return min(max(v, 0.0), 1.0)


def _other(which: str) -> str:
    return "A" if which == "B" else "B"


def stark_map(
    setup: TwoSourceSetup,
    voltages,
    freq_points,
    dwell: float,
    seed: int,
    *,
    tuned: str = "B",
    scheme: Scheme = Scheme.ZPL_00,
) -> StarkMap:
    """Excitation spectra of both molecules versus the tuned microscope's voltage.

    Both microscopes are scanned by the same laser and their detections are
    summed, as on a single APD.  Each microscope's own counts are kept to
    extract per-molecule line centres.
    """
    voltages = np.asarray(voltages, dtype=float)
    if np.any(np.diff(voltages) < 0):
        raise DomainError("voltages must be ordered")
    freqs = np.asarray(freq_points, dtype=float)
    nv, nf = len(voltages), len(freqs)
    per = {"A": np.zeros((nv, nf), np.int64), "B": np.zeros((nv, nf), np.int64)}
    centers = {"A": np.full(nv, np.nan), "B": np.full(nv, np.nan)}
    errors = {"A": np.full(nv, np.nan), "B": np.full(nv, np.nan)}
    for i, v in enumerate(voltages):
        ts = setup.with_voltage(tuned, float(v))
        for which in ("A", "B"):
            s = ts.microscope(which)
            if which != "A":
                # one APD: count its dark counts once
                s = replace(s, microscope=replace(
                    s.microscope, detector=replace(s.microscope.detector, dark_rate=0.0)))
            hist = excitation_scan(s, scheme, freqs, dwell, derive_int(seed, "stark", which, i))
            per[which][i] = hist.counts
            try:
                fit = fit_lorentzian(freqs, hist.counts)
                centers[which][i] = fit["center"]
                errors[which][i] = fit.error("center")
            except FitError:
                pass
    return StarkMap(
        voltages, freqs, per["A"] + per["B"], per["A"], per["B"],
        centers["A"], centers["B"], errors["A"], errors["B"], tuned,
    )


def overlap_voltage_analytic(setup: TwoSourceSetup, tuned: str = "B") -> float:
    """Voltage at which the tuned molecule's ZPL meets the other one, for a linear Stark response."""
    mt = setup.microscope(tuned).microscope
    mo = setup.microscope(_other(tuned)).microscope
    target = mo.molecules[0].zpl_center(mo.field) - mt.molecules[0].nu00
    coeff = mt.molecules[0].stark.linear_coeff
    if mt.molecules[0].stark.quadratic_coeff != 0:
        raise DomainError("closed form only for a linear Stark response")
    return target / coeff * mt.electrode_gap


def find_overlap_voltage(
    setup: TwoSourceSetup,
    tolerance: float,
    *,
    voltage_range: tuple[float, float] = (0.0, 30.0),
    dwell: float = 0.05,
    seed: int = 0,
    tuned: str = "B",
    scheme: Scheme = Scheme.ZPL_00,
    search_span: float = 2.5e9,
    noiseless: bool = False,
    max_iter: int = 60,
) -> OverlapResult:
    """Bisection on the fitted detuning between the two lines.

    Line centres come from simulated excitation scans (coarse survey plus
    a fitted fine scan).  With ``noiseless`` the exact Stark-shifted ZPL
    centres are used instead.  Returns the first voltage whose
    |detuning| is below ``tolerance``.
    """
    other = _other(tuned)
    evals: list[tuple[float, float]] = []

    def center(which: str, s: TwoSourceSetup, around: float, tag) -> float:
        sm = s.microscope(which)
        mic = sm.microscope
        if noiseless:
            return mic.molecules[0].zpl_center(mic.field)
        window = (around - search_span, around + search_span)
        return locate_line(sm, scheme, window, dwell, derive_int(seed, "overlap", which, tag))["center"]

    mo = setup.microscope(other).microscope
    ref = center(other, setup, mo.molecules[0].zpl_center(mo.field), "ref")

    def detuning(v: float, k: int) -> float:
        d = center(tuned, setup.with_voltage(tuned, v), ref, k) - ref
        evals.append((v, d))
        return d

    def result(v: float, d: float) -> OverlapResult:
        fa = setup.a.microscope.molecules[0].natural_fwhm
        fb = setup.b.microscope.molecules[0].natural_fwhm
        m = spectral_overlap(fa, fb, d)
        vis = hom_visibility(m, setup.polarization_angle, *setup.g2_0)
        return OverlapResult(float(v), float(d), m, vis, evals)

    lo, hi = voltage_range
    d_lo = detuning(lo, "lo")
    if abs(d_lo) < tolerance:
        return result(lo, d_lo)
    d_hi = detuning(hi, "hi")
    if abs(d_hi) < tolerance:
        return result(hi, d_hi)
    if np.sign(d_lo) == np.sign(d_hi):
        raise SearchError(
            f"overlap not bracketed in [{lo}, {hi}] V: detunings {d_lo:.4g} Hz and {d_hi:.4g} Hz"
        )
    for k in range(max_iter):
        mid = 0.5 * (lo + hi)
        d_mid = detuning(mid, k)
        if abs(d_mid) < tolerance:
            return result(mid, d_mid)
        if np.sign(d_mid) == np.sign(d_lo):
            lo, d_lo = mid, d_mid
        else:
            hi, d_hi = mid, d_mid
    raise SearchError(f"no voltage within tolerance after {max_iter} bisection steps")

