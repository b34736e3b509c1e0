"""JSON scenario files: strict schema, reference resolution, object building.

Every physical key carries its unit in the name (``lifetime_ns``,
``power_nw``, ``dwell_ms`` ...).  Unknown keys are rejected.  A scenario
describes the sample and optics once and selects one active
``measurement``; :mod:`zpl_lab.runner` executes it.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .detection import DEFAULT_JITTER_SIGMA, Detector, SpectralFilter
from .engine import VibronicLine
from .errors import DomainError, MissingSeedError, ScenarioParseError, ScenarioValidationError
from .instruments import EmissionModel, Microscope, Setup
from .photophysics import (
    HZ_PER_WAVENUMBER,
    BranchingFactors,
    LaserField,
    Molecule,
    PumpCalibration,
    Scheme,
    StarkResponse,
    unit_vector,
    wavelength_nm_to_frequency,
)
from .twosource import TwoSourceSetup

MAX_SEED = 2**64 - 1


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


Pair = tuple[float, float]


# ---------------------------------------------------------------- sample and optics

class MoleculeSpec(_Strict):
    id: str
    position_nm: Pair = (0.0, 0.0)
    zpl_wavelength_nm: float = Field(590.0, gt=0)
    zpl_offset_ghz: float = 0.0
    lifetime_ns: float = Field(9.4, gt=0)
    fwhm_01_ghz: float = Field(28.0, gt=0)
    vib_offset_01_cm: float = Field(242.0, gt=0)
    franck_condon: float = Field(0.4, ge=0, le=1)
    debye_waller: float = Field(0.7, ge=0, le=1)
    stark_linear_hz_per_v_per_m: float = 1e3
    stark_quadratic_hz_per_v2_per_m2: float = 0.0
    dipole_angle_deg: float = 0.0


class LaserSpec(_Strict):
    id: str
    power_nw: float = Field(1.0, ge=0)
    linewidth_mhz: float = Field(1.0, ge=0)
    detuning_mhz: float = 0.0
    polarization_angle_deg: float = 0.0
    focus_nm: Pair = (0.0, 0.0)


class FilterSpec(_Strict):
    id: str
    kind: Literal["long_pass", "band_pass"]
    edge_nm: Optional[float] = Field(None, gt=0)
    center_nm: Optional[float] = Field(None, gt=0)
    width_nm: Optional[float] = Field(None, gt=0)
    transmission_pass: float = Field(0.95, ge=0, le=1)
    transmission_stop: float = Field(1e-4, ge=0, le=1)

    @model_validator(mode="after")
    def _shape(self):
        if self.kind == "long_pass" and self.edge_nm is None:
            raise ValueError(f"filter {self.id!r}: long_pass needs edge_nm")
        if self.kind == "band_pass" and (self.center_nm is None or self.width_nm is None):
            raise ValueError(f"filter {self.id!r}: band_pass needs center_nm and width_nm")
        return self


class DetectorSpec(_Strict):
    id: str
    quantum_efficiency: float = Field(0.7, ge=0, le=1)
    jitter_sigma_ns: float = Field(DEFAULT_JITTER_SIGMA * 1e9, ge=0)
    dead_time_ns: float = Field(50.0, ge=0)
    dark_rate_hz: float = Field(100.0, ge=0)
    tick_ps: float = Field(4.0, gt=0)


class MicroscopeSpec(_Strict):
    id: str
    molecules: list[str] = Field(min_length=1)
    filters: list[str] = []
    detector: Optional[str] = None
    collection_efficiency: float = Field(0.0335, gt=0, le=1)
    na: float = Field(1.12, gt=0)
    electrode_gap_um: float = Field(18.0, gt=0)
    voltage_v: float = 0.0
    background_rate_hz: float = Field(0.0, ge=0)


class LineSpec(_Strict):
    offset_cm: float
    weight: float = Field(ge=0)
    fwhm_ghz: float = Field(gt=0)


class EmissionSpec(_Strict):
    wing_width_thz: float = Field(1.0, gt=0)
    stokes_lines: list[LineSpec] = [
        LineSpec(offset_cm=-750.0, weight=0.5, fwhm_ghz=30.0),
        LineSpec(offset_cm=-1250.0, weight=0.3, fwhm_ghz=30.0),
        LineSpec(offset_cm=-1700.0, weight=0.2, fwhm_ghz=30.0),
    ]
    extra_lines: list[LineSpec] = []
    background_band_nm: Pair = (560.0, 720.0)


class CalibrationSpec(_Strict):
    pump_rate_zpl_per_s_per_nw: float = Field(1.0 / 9.4e-9, gt=0)
    pump_rate_01_per_s_per_nw: float = Field(1.0 / 9.4e-9 / 100.0, gt=0)


class OutputSpec(_Strict):
    timetags: bool = False
    svg: bool = False


# ---------------------------------------------------------------- measurements

class _Single(_Strict):
    microscope: Optional[str] = None
    laser: Optional[str] = None
    scheme: Literal["zpl_00", "pump_01"] = "zpl_00"
    saturation: Optional[float] = Field(None, gt=0)


class ExcitationScanSpec(_Single):
    type: Literal["excitation_scan"] = "excitation_scan"
    span_mhz: float = Field(100.0, gt=0)
    center_offset_mhz: float = 0.0
    points: int = Field(200, ge=5)
    dwell_ms: float = Field(50.0, ge=0)


class RasterSpec(_Single):
    type: Literal["raster"] = "raster"
    half_width_nm: float = Field(600.0, gt=0)
    step_nm: float = Field(20.0, gt=0)
    dwell_ms: float = Field(10.0, gt=0)


class EmissionSpectrumSpec(_Single):
    type: Literal["emission"] = "emission"
    scheme: Literal["zpl_00", "pump_01"] = "pump_01"
    duration_s: float = Field(0.1, gt=0)
    resolution_nm: float = Field(0.3, gt=0)
    range_nm: Pair = (570.0, 660.0)
    bin_nm: Optional[float] = Field(None, gt=0)
    isolation_filters: list[str] = []


class HbtSpec(_Single):
    type: Literal["hbt"] = "hbt"
    duration_s: float = Field(1.0, gt=0)
    bin_width_ns: float = Field(0.5, gt=0)
    tau_max_ns: float = Field(100.0, gt=0)
    pump_rate_per_ns: Optional[float] = Field(None, gt=0)
    reflectivity: float = Field(0.5, ge=0, le=1)
    jitter: bool = True


class FpScanSpec(_Single):
    type: Literal["fp_scan"] = "fp_scan"
    scheme: Literal["zpl_00", "pump_01"] = "pump_01"
    source: Literal["molecule", "monochromatic"] = "molecule"
    duration_s: float = Field(0.2, gt=0)
    photons: int = Field(200_000, ge=1)
    fsr_ghz: float = Field(1.5, gt=0)
    finesse: float = Field(200.0, gt=1)
    span_fsr: float = Field(2.0, ge=1)
    points: int = Field(1201, ge=5)
    fine_span_mhz: float = Field(150.0, gt=0)
    fine_points: int = Field(151, ge=5)


class SaturationSpec(_Single):
    type: Literal["saturation"] = "saturation"
    scheme: Literal["zpl_00", "pump_01"] = "pump_01"
    powers_nw: list[float] = Field(
        default_factory=lambda: [10.0, 20.0, 50.0, 100.0, 200.0, 500.0, 1000.0, 2000.0, 5000.0]
    )
    dwell_ms: float = Field(20.0, gt=0)

    @model_validator(mode="after")
    def _powers(self):
        if len(self.powers_nw) < 4 or any(p <= 0 for p in self.powers_nw):
            raise ValueError("powers_nw needs at least four positive entries")
        return self


class _Pair(_Strict):
    microscopes: Optional[tuple[str, str]] = None
    laser: Optional[str] = None
    scheme: Literal["zpl_00", "pump_01"] = "zpl_00"
    tuned: Literal["A", "B"] = "B"
    dwell_ms: float = Field(50.0, gt=0)


class StarkMapSpec(_Pair):
    type: Literal["stark_map"] = "stark_map"
    voltages_v: tuple[float, float, int] = (0.0, 30.0, 16)
    frequency_window_ghz: Pair = (-0.6, 1.8)
    frequency_points: int = Field(241, ge=5)


class OverlapSpec(_Pair):
    type: Literal["overlap"] = "overlap"
    tolerance_mhz: float = Field(0.5, gt=0)
    voltage_range_v: Pair = (0.0, 30.0)
    search_span_ghz: float = Field(2.5, gt=0)
    polarizer_angles_deg: Pair = (0.0, 0.0)
    g2_0: Pair = (0.0, 0.0)
    stark_map: Optional[StarkMapSpec] = None


Measurement = Annotated[
    Union[
        ExcitationScanSpec, RasterSpec, EmissionSpectrumSpec, HbtSpec,
        FpScanSpec, SaturationSpec, StarkMapSpec, OverlapSpec,
    ],
    Field(discriminator="type"),
]

MEASUREMENT_TYPES = {
    "excitation_scan": ExcitationScanSpec,
    "raster": RasterSpec,
    "emission": EmissionSpectrumSpec,
    "hbt": HbtSpec,
    "fp_scan": FpScanSpec,
    "saturation": SaturationSpec,
    "stark_map": StarkMapSpec,
    "overlap": OverlapSpec,
}


class Scenario(_Strict):
    name: str
    description: str = ""
    seed: Optional[int] = Field(None, ge=0, le=MAX_SEED)
    molecules: list[MoleculeSpec] = Field(min_length=1)
    lasers: list[LaserSpec] = Field(min_length=1)
    filters: list[FilterSpec] = []
    detectors: list[DetectorSpec] = []
    microscopes: list[MicroscopeSpec] = Field(min_length=1)
    emission: EmissionSpec = EmissionSpec()
    calibration: CalibrationSpec = CalibrationSpec()
    measurement: Measurement
    outputs: OutputSpec = OutputSpec()

    @model_validator(mode="after")
    def _references(self):
        for kind in ("molecules", "lasers", "filters", "detectors", "microscopes"):
            ids = [x.id for x in getattr(self, kind)]
            dup = sorted({i for i in ids if ids.count(i) > 1})
            if dup:
                raise ValueError(f"duplicate {kind[:-1]} id {dup[0]!r}")
        mol_ids = {m.id for m in self.molecules}
        filt_ids = {f.id for f in self.filters}
        det_ids = {d.id for d in self.detectors}
        mic_ids = {m.id for m in self.microscopes}
        owner: dict[str, str] = {}
        for mic in self.microscopes:
            for mid in mic.molecules:
                if mid not in mol_ids:
                    raise ValueError(f"microscope {mic.id!r} references undefined molecule {mid!r}")
                if mid in owner:
                    raise ValueError(f"molecule {mid!r} is placed in both {owner[mid]!r} and {mic.id!r}")
                owner[mid] = mic.id
            for fid in mic.filters:
                if fid not in filt_ids:
                    raise ValueError(f"microscope {mic.id!r} references undefined filter {fid!r}")
            if mic.detector is not None and mic.detector not in det_ids:
                raise ValueError(f"microscope {mic.id!r} references undefined detector {mic.detector!r}")
        m = self.measurement
        if m.laser is not None and m.laser not in {l.id for l in self.lasers}:
            raise ValueError(f"measurement references undefined laser {m.laser!r}")
        if isinstance(m, _Single):
            if m.microscope is not None and m.microscope not in mic_ids:
                raise ValueError(f"measurement references undefined microscope {m.microscope!r}")
        else:
            pair = m.microscopes
            if pair is None and len(self.microscopes) < 2:
                raise ValueError(f"{m.type} needs two microscopes")
            for mid in pair or ():
                if mid not in mic_ids:
                    raise ValueError(f"measurement references undefined microscope {mid!r}")
            if pair is not None and pair[0] == pair[1]:
                raise ValueError("the two microscopes must be distinct")
        if isinstance(m, EmissionSpectrumSpec):
            for fid in m.isolation_filters:
                if fid not in filt_ids:
                    raise ValueError(f"measurement references undefined filter {fid!r}")
        return self


# ---------------------------------------------------------------- loading

def bundled_scenarios() -> list[str]:
    root = resources.files("zpl_lab") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def resolve_scenario_path(name_or_path: str | Path) -> Path:
    """A file path, or the name of a bundled scenario (with or without ``.json``)."""
    p = Path(name_or_path)
    if p.exists():
        return p
    stem = p.name[:-5] if p.name.endswith(".json") else p.name
    bundled = resources.files("zpl_lab") / "scenarios" / f"{stem}.json"
    if str(p) in (stem, f"{stem}.json") and bundled.is_file():
        return Path(str(bundled))
    raise FileNotFoundError(f"no scenario file or bundled scenario named {str(name_or_path)!r}")


def _format_validation(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(x) for x in err["loc"])
        msg = err["msg"].removeprefix("Value error, ")
        parts.append(f"{loc}: {msg}" if loc else msg)
    return "; ".join(parts)


def parse_scenario(text: str, *, seed: int | None = None, source: str = "<string>") -> Scenario:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"{source}: {exc.msg}", exc.lineno, exc.colno) from None
    if isinstance(raw, dict) and seed is not None:
        raw = {**raw, "seed": seed}
    try:
        scenario = Scenario.model_validate(raw)
    except ValidationError as exc:
        raise ScenarioValidationError(f"{source}: {_format_validation(exc)}") from None
    if scenario.seed is None:
        raise MissingSeedError(f"{source}: no seed in the scenario and none given")
    return scenario


def load_scenario(path, *, seed: int | None = None) -> Scenario:
    """Load, validate and apply defaults.  ``seed`` overrides the file's seed."""
    p = resolve_scenario_path(path)
    return parse_scenario(p.read_text(encoding="utf-8"), seed=seed, source=str(p))


def canonical_json(scenario: Scenario) -> str:
    return json.dumps(scenario.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))


def config_hash(scenario: Scenario) -> str:
    return hashlib.sha256(canonical_json(scenario).encode()).hexdigest()


# ---------------------------------------------------------------- building domain objects

def scheme_of(name: str) -> Scheme:
    return Scheme.ZPL_00 if name == "zpl_00" else Scheme.PUMP_01


def build_molecule(spec: MoleculeSpec) -> Molecule:
    nu00 = float(wavelength_nm_to_frequency(spec.zpl_wavelength_nm)) + spec.zpl_offset_ghz * 1e9
    return Molecule(
        id=spec.id,
        position=spec.position_nm,
        nu00=nu00,
        lifetime_s1=spec.lifetime_ns * 1e-9,
        lifetime_s1v1=1.0 / (2.0 * math.pi * spec.fwhm_01_ghz * 1e9),
        vib_offset_01=spec.vib_offset_01_cm * HZ_PER_WAVENUMBER,
        branching=BranchingFactors(spec.franck_condon, spec.debye_waller),
        stark=StarkResponse(spec.stark_linear_hz_per_v_per_m, spec.stark_quadratic_hz_per_v2_per_m2),
        dipole_axis=unit_vector(math.radians(spec.dipole_angle_deg)),
    )


def build_filter(spec: FilterSpec) -> SpectralFilter:
    kw = dict(transmission_pass=spec.transmission_pass, transmission_stop=spec.transmission_stop)
    if spec.kind == "long_pass":
        return SpectralFilter.long_pass(spec.edge_nm, **kw)
    return SpectralFilter.band_pass(spec.center_nm, spec.width_nm, **kw)


def build_detector(spec: DetectorSpec | None) -> Detector:
    if spec is None:
        return Detector()
    return Detector(
        quantum_efficiency=spec.quantum_efficiency,
        jitter_sigma=spec.jitter_sigma_ns * 1e-9,
        dead_time=spec.dead_time_ns * 1e-9,
        dark_rate=spec.dark_rate_hz,
        tick=spec.tick_ps * 1e-12,
    )


def _line(spec: LineSpec) -> VibronicLine:
    return VibronicLine(spec.offset_cm * HZ_PER_WAVENUMBER, spec.weight, spec.fwhm_ghz * 1e9)


def build_emission(spec: EmissionSpec) -> EmissionModel:
    lo, hi = spec.background_band_nm
    return EmissionModel(
        stokes_lines=tuple(_line(l) for l in spec.stokes_lines),
        extra_lines=tuple(_line(l) for l in spec.extra_lines),
        wing_width=spec.wing_width_thz * 1e12,
        background_band=(float(wavelength_nm_to_frequency(hi)), float(wavelength_nm_to_frequency(lo))),
    )


@dataclass(frozen=True)
class Resolved:
    """A validated scenario turned into simulation objects."""

    scenario: Scenario
    setups: dict[str, Setup]  # one per microscope id, laser = chosen laser
    laser_spec: LaserSpec

    @property
    def seed(self) -> int:
        return int(self.scenario.seed)

    @property
    def measurement(self):
        return self.scenario.measurement

    def setup(self, microscope: str | None = None) -> Setup:
        return self.setups[microscope or self.scenario.microscopes[0].id]

    def pair(self) -> TwoSourceSetup:
        m = self.measurement
        a_id, b_id = m.microscopes or (self.scenario.microscopes[0].id, self.scenario.microscopes[1].id)
        angles = tuple(unit_vector(math.radians(x)) for x in m.polarizer_angles_deg) \
            if isinstance(m, OverlapSpec) else ((1.0, 0.0), (1.0, 0.0))
        g2 = tuple(m.g2_0) if isinstance(m, OverlapSpec) else (0.0, 0.0)
        return TwoSourceSetup(self.setups[a_id], self.setups[b_id], angles, g2)


def resolve(scenario: Scenario) -> Resolved:
    try:
        return _resolve(scenario)
    except DomainError as exc:
        raise ScenarioValidationError(f"scenario {scenario.name!r}: {exc}") from None


def _resolve(scenario: Scenario) -> Resolved:
    mols = {m.id: build_molecule(m) for m in scenario.molecules}
    filters = {f.id: build_filter(f) for f in scenario.filters}
    dets = {d.id: d for d in scenario.detectors}
    emission = build_emission(scenario.emission)
    cal = PumpCalibration(
        sigma_zpl=scenario.calibration.pump_rate_zpl_per_s_per_nw * 1e9,
        sigma_01=scenario.calibration.pump_rate_01_per_s_per_nw * 1e9,
    )
    laser_id = scenario.measurement.laser or scenario.lasers[0].id
    lspec = next(l for l in scenario.lasers if l.id == laser_id)
    laser = LaserField(
        power=lspec.power_nw * 1e-9,
        linewidth=lspec.linewidth_mhz * 1e6,
        polarization_axis=unit_vector(math.radians(lspec.polarization_angle_deg)),
        focus_position=lspec.focus_nm,
    )
    setups = {}
    base = 0
    for mic in scenario.microscopes:
        microscope = Microscope(
            molecules=tuple(mols[i] for i in mic.molecules),
            filters=tuple(filters[i] for i in mic.filters),
            detector=build_detector(dets.get(mic.detector) if mic.detector else None),
            collection_efficiency=mic.collection_efficiency,
            na=mic.na,
            electrode_gap=mic.electrode_gap_um * 1e-6,
            voltage=mic.voltage_v,
            background_rate=mic.background_rate_hz,
            name=mic.id,
            source_base=base,
        )
        base += len(mic.molecules)
        setups[mic.id] = Setup(microscope, laser, emission, cal)
    return Resolved(scenario, setups, lspec)


def with_measurement(scenario: Scenario, kind: str) -> Scenario:
    """The scenario with ``kind`` as its active measurement.

    Keeps the configured measurement when it already has that type,
    otherwise substitutes the defaults for ``kind`` (same laser).
    """
    if scenario.measurement.type == kind:
        return scenario
    cls = MEASUREMENT_TYPES[kind]
    m = cls(laser=scenario.measurement.laser)
    data = scenario.model_dump()
    data["measurement"] = m.model_dump()
    try:
        return Scenario.model_validate(data)
    except ValidationError as exc:
        raise ScenarioValidationError(f"{scenario.name}: {_format_validation(exc)}") from None
