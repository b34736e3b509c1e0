"""Execute a scenario's measurement and write its artifacts.

Artifacts in ``out_dir``:

* ``report.json``: status, config hash, seeds, fitted parameters with
  one-sigma uncertainties, list of written files.  Deterministic: no
  timestamps or host details, so identical (scenario, seed) give
  byte-identical reports.
* CSV files with ``#``-prefixed metadata lines, one row per bin/point.
* optionally ``timetags.zplt`` (HBT records) and SVG plots.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .engine import Band, EventStream
from .detection import FabryPerot, apply_spectral_filter
from .errors import RunError, ZplLabError
from .fitting import fit_antibunching, fit_gaussian_spot, fit_lorentzian, lorentzian_model
from .instruments import (
    band_areas,
    collect_photons,
    count_peaks,
    emission_spectrum,
    excitation_scan,
    fp_scan,
    hbt_measurement,
    power_for_saturation,
    raster_scan,
    saturation_curve,
)
from .photophysics import frequency_to_wavelength_nm, psf_fwhm
from .rng import derive_int
from .scenario import (
    EmissionSpectrumSpec,
    ExcitationScanSpec,
    FpScanSpec,
    HbtSpec,
    OverlapSpec,
    RasterSpec,
    Resolved,
    SaturationSpec,
    Scenario,
    StarkMapSpec,
    build_filter,
    config_hash,
    resolve,
    scheme_of,
)
from .timetags import write_timetags
from .twosource import find_overlap_voltage, overlap_voltage_analytic, stark_map


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path, columns, rows, metadata: dict | None = None) -> None:
    """CSV with ``# key: value`` metadata lines before the column header."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for key, value in (metadata or {}).items():
            fh.write(f"# {key}: {value}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_csv(path) -> tuple[dict, list[str], np.ndarray]:
    meta, lines = {}, []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition(":")
                meta[key.strip()] = value.strip()
            else:
                lines.append(line)
    reader = csv.reader(lines)
    columns = next(reader)
    data = np.array([[float(x) for x in row] for row in reader], dtype=float)
    return meta, columns, data.reshape(-1, len(columns))


class _Run:
    """Collects outputs while a measurement executes."""

    def __init__(self, resolved: Resolved, out_dir: Path, timetags: bool, svg: bool):
        self.r = resolved
        self.out = out_dir
        self.timetags = timetags
        self.svg = svg
        self.files: list[str] = []
        self.meta = {
            "scenario": resolved.scenario.name,
            "measurement": resolved.measurement.type,
            "seed": resolved.seed,
            "config_hash": config_hash(resolved.scenario),
        }

    def csv(self, name, columns, rows, **extra) -> None:
        write_csv(self.out / name, columns, rows, {**self.meta, **extra})
        self.files.append(name)

    def plot(self, kind: str, name: str, *args, **kw) -> None:
        if not self.svg:
            return
        from . import plotting

        getattr(plotting, kind)(self.out / name, *args, **kw)
        self.files.append(name)


def _on_resonance(run: _Run, m):
    setup = run.r.setup(m.microscope)
    scheme = scheme_of(m.scheme)
    mic = setup.microscope
    nu = mic.molecules[0].transition_center(scheme, mic.field) + run.r.laser_spec.detuning_mhz * 1e6
    setup = setup.with_laser(frequency=nu)
    if m.saturation is not None:
        setup = setup.with_laser(power=power_for_saturation(setup, m.saturation, scheme))
    return setup, scheme, nu


def _excitation_scan(run: _Run, m: ExcitationScanSpec, seed: int) -> dict:
    setup, scheme, nu0 = _on_resonance(run, m)
    det = m.center_offset_mhz * 1e6 + np.linspace(-0.5, 0.5, m.points) * m.span_mhz * 1e6
    hist = excitation_scan(setup, scheme, nu0 + det, m.dwell_ms * 1e-3, seed)
    fit = fit_lorentzian(det, hist.counts)
    run.csv("excitation_scan.csv", ["frequency_hz", "detuning_hz", "counts"],
            zip(nu0 + det, det, hist.counts), dwell_s=m.dwell_ms * 1e-3, scheme=scheme.value)
    model = lorentzian_model(det, *(fit[k] for k in ("center", "fwhm", "amplitude", "offset")))
    run.plot("line_plot", "excitation_scan.svg", det * 1e-6, hist.counts, xlabel="detuning (MHz)",
             ylabel="counts", fit=(det * 1e-6, model), style=".")
    return {
        "fit": fit.as_dict(),
        "laser_power_w": setup.laser.power,
        "transition_frequency_hz": nu0,
        "total_counts": int(hist.counts.sum()),
    }


def _raster(run: _Run, m: RasterSpec, seed: int) -> dict:
    setup, scheme, _ = _on_resonance(run, m)
    px, py = setup.microscope.molecules[0].position
    hw = m.half_width_nm
    image = raster_scan(setup, (px - hw, px + hw), (py - hw, py + hw), m.step_nm, m.dwell_ms * 1e-3, seed, scheme)
    fit = fit_gaussian_spot(image.x_centers, image.y_centers, image.counts)
    xx, yy = np.meshgrid(image.x_centers, image.y_centers)
    run.csv("raster.csv", ["x_nm", "y_nm", "counts"], zip(xx.ravel(), yy.ravel(), image.counts.ravel()),
            step_nm=m.step_nm, dwell_s=m.dwell_ms * 1e-3)
    run.plot("heat_map", "raster.svg", image.x_edges, image.y_edges, image.counts,
             xlabel="x (nm)", ylabel="y (nm)")
    return {
        "fit": fit.as_dict(),
        "psf_fwhm_nm": psf_fwhm(setup.laser.wavelength * 1e9, setup.microscope.na),
        "laser_power_w": setup.laser.power,
    }


def _emission(run: _Run, m: EmissionSpectrumSpec, seed: int) -> dict:
    setup, scheme, _ = _on_resonance(run, m)
    events = collect_photons(setup, scheme, m.duration_s, seed, apply_filters=False)
    spec = emission_spectrum(events, m.resolution_nm, m.range_nm, derive_int(seed, "spectrometer"), m.bin_nm)
    zpl_nm = float(frequency_to_wavelength_nm(setup.microscope.molecules[0].zpl_center(setup.microscope.field)))
    areas = band_areas(spec, zpl_nm)
    run.csv("emission_spectrum.csv", ["wavelength_nm", "counts"], zip(spec.centers, spec.counts),
            resolution_nm=m.resolution_nm, events=len(events))
    run.plot("line_plot", "emission_spectrum.svg", spec.centers, spec.counts,
             xlabel="wavelength (nm)", ylabel="counts")
    n = len(events)
    fractions = {b.name.lower(): int(np.count_nonzero(events.band == b)) / n if n else 0.0 for b in Band}
    band00 = fractions["zpl"] + fractions["phonon_wing"]
    out = {
        "events": n,
        "zpl_wavelength_nm": zpl_nm,
        "spectrum_estimate": {
            "franck_condon": areas.franck_condon,
            "debye_waller": areas.debye_waller,
            "wing_width_hz": areas.wing_width,
        },
        "label_fractions": {
            **fractions,
            "band00": band00,
            "zpl_over_band00": fractions["zpl"] / band00 if band00 else 0.0,
        },
    }
    if m.isolation_filters:
        filters = {f.id: f for f in run.r.scenario.filters}
        iso = events
        for k, fid in enumerate(m.isolation_filters):
            iso = apply_spectral_filter(iso, build_filter(filters[fid]), seed, "isolation", k)
        ispec = emission_spectrum(iso, m.resolution_nm, m.range_nm, derive_int(seed, "spectrometer", "iso"), m.bin_nm)
        run.csv("isolated_spectrum.csv", ["wavelength_nm", "counts"], zip(ispec.centers, ispec.counts),
                resolution_nm=m.resolution_nm, events=len(iso), filters=",".join(m.isolation_filters))
        run.plot("line_plot", "isolated_spectrum.svg", ispec.centers, ispec.counts,
                 xlabel="wavelength (nm)", ylabel="counts")
        in_band = np.isin(iso.band, [Band.ZPL, Band.PHONON_WING])
        peak_nm = float(ispec.centers[int(np.argmax(ispec.counts))]) if len(iso) else math.nan
        out["isolated"] = {
            "events": len(iso),
            "band00_fraction": float(in_band.mean()) if len(iso) else 0.0,
            "peak_wavelength_nm": peak_nm,
        }
    return out


def _hbt(run: _Run, m: HbtSpec, seed: int) -> dict:
    setup, scheme, _ = _on_resonance(run, m)
    det = setup.microscope.detector
    if not m.jitter:
        det = replace(det, jitter_sigma=0.0)
        setup = setup.with_microscope(detector=det)
    pump = None
    if m.pump_rate_per_ns is not None:
        pump = [m.pump_rate_per_ns * 1e9] * len(setup.microscope.molecules)
    res = hbt_measurement(
        setup, scheme, m.duration_s, seed, bin_width=m.bin_width_ns * 1e-9,
        tau_max=m.tau_max_ns * 1e-9, reflectivity=m.reflectivity, pump_rates=pump,
    )
    h = res.histogram
    fit = fit_antibunching(h, irf_sigma=math.sqrt(2.0) * det.jitter_sigma)
    run.csv("g2.csv", ["tau_s", "coincidences", "normalization", "g2", "g2_error"],
            zip(h.centers, h.coincidences, np.full(len(h.centers), h.normalization), h.g2, h.g2_error),
            bin_width_s=h.bin_width, duration_s=h.duration)
    run.plot("line_plot", "g2.svg", h.centers * 1e9, h.g2, xlabel="delay (ns)", ylabel="g2", style=".")
    if run.timetags:
        write_timetags(res.records, run.out / "timetags.zplt", channel_count=2)
        run.files.append("timetags.zplt")
    return {
        "fit": fit.as_dict(),
        "rate_a_hz": h.rate_a,
        "rate_b_hz": h.rate_b,
        "coincidences": int(np.sum(h.coincidences)),
        "jitter_sigma_s": det.jitter_sigma,
    }


def _fp_scan(run: _Run, m: FpScanSpec, seed: int) -> dict:
    setup, scheme, _ = _on_resonance(run, m)
    mic = setup.microscope
    nu_zpl = mic.molecules[0].zpl_center(mic.field)
    if m.source == "molecule":
        events = collect_photons(setup, scheme, m.duration_s, seed)
    else:
        events = EventStream.monochromatic(np.arange(m.photons) * 1e-6, nu_zpl)
    fp = FabryPerot(m.fsr_ghz * 1e9, m.finesse)
    start = nu_zpl - 0.25 * fp.fsr
    coarse = start + np.arange(m.points) * (m.span_fsr * fp.fsr / m.points)
    hist = fp_scan(events, fp, coarse, m.duration_s, derive_int(seed, "coarse"))
    fine_det = np.linspace(-0.5, 0.5, m.fine_points) * m.fine_span_mhz * 1e6
    fine = fp_scan(events, fp, nu_zpl + fine_det, m.duration_s, derive_int(seed, "fine"))
    fit = fit_lorentzian(fine_det, fine.counts)
    run.csv("fp_scan.csv", ["offset_hz", "counts"], zip(coarse - nu_zpl, hist.counts),
            fsr_hz=fp.fsr, finesse=fp.finesse, photons=len(events))
    run.csv("fp_fine.csv", ["offset_hz", "counts"], zip(fine_det, fine.counts),
            fsr_hz=fp.fsr, finesse=fp.finesse, photons=len(events))
    run.plot("line_plot", "fp_scan.svg", (coarse - nu_zpl) * 1e-9, hist.counts,
             xlabel="etalon offset (GHz)", ylabel="transmitted photons")
    return {
        "photons": len(events),
        "peaks": count_peaks(hist),
        "fit": fit.as_dict(),
        "instrument_fwhm_hz": fp.fwhm,
        "natural_fwhm_hz": mic.molecules[0].natural_fwhm,
    }


def _saturation(run: _Run, m: SaturationSpec, seed: int) -> dict:
    setup, scheme, _ = _on_resonance(run, m)
    powers = np.asarray(m.powers_nw) * 1e-9
    curve = saturation_curve(setup, powers, m.dwell_ms * 1e-3, seed, scheme)
    run.csv("saturation.csv", ["power_w", "counts", "rate_hz", "rate_error_hz"],
            zip(powers, curve.counts, curve.rates, curve.rate_errors), dwell_s=m.dwell_ms * 1e-3)
    run.plot("line_plot", "saturation.svg", powers * 1e9, curve.rates, xlabel="power (nW)",
             ylabel="detected rate (1/s)", style="o")
    return {"fit": curve.fit.as_dict()}


def _voltages(spec: StarkMapSpec) -> np.ndarray:
    lo, hi, n = spec.voltages_v
    return np.linspace(lo, hi, int(n))


def _stark_map(run: _Run, m: StarkMapSpec, seed: int) -> dict:
    pair = run.r.pair()
    scheme = scheme_of(m.scheme)
    ref = pair.microscope("A" if m.tuned == "B" else "B").microscope
    nu_ref = ref.molecules[0].zpl_center(ref.field)
    lo, hi = m.frequency_window_ghz
    freqs = nu_ref + np.linspace(lo, hi, m.frequency_points) * 1e9
    volts = _voltages(m)
    smap = stark_map(pair, volts, freqs, m.dwell_ms * 1e-3, seed, tuned=m.tuned, scheme=scheme)
    vv, ff = np.meshgrid(volts, freqs - nu_ref, indexing="ij")
    run.csv("stark_map.csv", ["voltage_v", "frequency_offset_hz", "counts"],
            zip(vv.ravel(), ff.ravel(), smap.counts.ravel()), reference_frequency_hz=nu_ref)
    run.csv("line_centers.csv",
            ["voltage_v", "center_a_hz", "error_a_hz", "center_b_hz", "error_b_hz"],
            zip(volts, smap.centers_a - nu_ref, smap.center_errors_a,
                smap.centers_b - nu_ref, smap.center_errors_b),
            reference_frequency_hz=nu_ref)
    run.plot("heat_map", "stark_map.svg", np.linspace(lo, hi, m.frequency_points + 1),
             np.append(volts, volts[-1] + (volts[-1] - volts[0]) / max(len(volts) - 1, 1)),
             smap.counts, xlabel="laser offset (GHz)", ylabel="voltage (V)")
    tuned = pair.microscope(m.tuned).microscope
    mol = tuned.molecules[0]
    slope = smap.tuned_slope()
    return {
        "slope_fit": slope.as_dict(),
        "expected_slope_hz_per_v": mol.stark.linear_coeff / tuned.electrode_gap,
        "tuned": m.tuned,
    }


def _overlap(run: _Run, m: OverlapSpec, seed: int) -> dict:
    pair = run.r.pair()
    res = find_overlap_voltage(
        pair, m.tolerance_mhz * 1e6, voltage_range=tuple(m.voltage_range_v),
        dwell=m.dwell_ms * 1e-3, seed=seed, tuned=m.tuned, scheme=scheme_of(m.scheme),
        search_span=m.search_span_ghz * 1e9,
    )
    run.csv("overlap_search.csv", ["voltage_v", "detuning_hz"], res.evaluations)
    out = {
        "overlap": res.as_dict(),
        "analytic_voltage_v": overlap_voltage_analytic(pair, m.tuned),
    }
    if m.stark_map is not None:
        out["stark_map"] = _stark_map(run, m.stark_map.model_copy(update={"tuned": m.tuned}), derive_int(seed, "map"))
    return out


_DISPATCH = {
    "excitation_scan": _excitation_scan,
    "raster": _raster,
    "emission": _emission,
    "hbt": _hbt,
    "fp_scan": _fp_scan,
    "saturation": _saturation,
    "stark_map": _stark_map,
    "overlap": _overlap,
}


def _write_report(path: Path, report: dict) -> None:
    path.write_text(json.dumps(report, indent=2, sort_keys=True, allow_nan=True) + "\n", encoding="utf-8")


def run(scenario: Scenario, out_dir, *, timetags: bool | None = None, svg: bool | None = None) -> dict:
    """Run the active measurement; returns the report also written to ``report.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    resolved = resolve(scenario)
    m = resolved.measurement
    tt = scenario.outputs.timetags if timetags is None else timetags
    sv = scenario.outputs.svg if svg is None else svg
    r = _Run(resolved, out, tt, sv)
    measurement_seed = derive_int(resolved.seed, "measurement", m.type)
    report = {
        **r.meta,
        "version": __version__,
        "seeds": {"master": resolved.seed, "measurement": measurement_seed},
        "config": scenario.model_dump(mode="json"),
    }
    try:
        results = _DISPATCH[m.type](r, m, measurement_seed)
    except (ZplLabError, ValueError, ArithmeticError) as exc:
        report.update(status="failed", partial=True, error=f"{type(exc).__name__}: {exc}", outputs=r.files)
        _write_report(out / "report.json", report)
        raise RunError(f"{scenario.name}/{m.type} failed: {exc}", out / "report.json") from exc
    report.update(status="ok", partial=False, results=results, outputs=r.files + ["report.json"])
    _write_report(out / "report.json", report)
    return report
