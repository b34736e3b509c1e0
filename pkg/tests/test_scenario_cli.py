import json
import subprocess
import sys

import pytest

from zpl_lab.cli import main
from zpl_lab.errors import MissingSeedError, ScenarioParseError, ScenarioValidationError
from zpl_lab.photophysics import Scheme
from zpl_lab.runner import read_csv, write_csv
from zpl_lab.scenario import (
    bundled_scenarios,
    config_hash,
    load_scenario,
    parse_scenario,
    resolve,
    scheme_of,
    with_measurement,
)
from zpl_lab.timetags import read_timetags

MINIMAL = {
    "name": "mini",
    "seed": 7,
    "molecules": [{"id": "m1"}],
    "lasers": [{"id": "dye", "power_nw": 0.02}],
    "filters": [{"id": "lp", "kind": "long_pass", "edge_nm": 600.0}],
    "detectors": [{"id": "apd"}],
    "microscopes": [{"id": "A", "molecules": ["m1"], "filters": ["lp"], "detector": "apd"}],
    "measurement": {"type": "excitation_scan", "points": 21, "dwell_ms": 5.0},
}

SHORT_HBT = {
    **MINIMAL,
    "name": "short_hbt",
    "lasers": [{"id": "dye", "power_nw": 5.0}],
    "filters": [{"id": "bp", "kind": "band_pass", "center_nm": 590.0, "width_nm": 0.5}],
    "microscopes": [{"id": "A", "molecules": ["m1"], "filters": ["bp"], "detector": "apd"}],
    "measurement": {"type": "hbt", "scheme": "pump_01", "duration_s": 0.05, "pump_rate_per_ns": 0.07543},
    "outputs": {"timetags": True},
}


def dump(path, data):
    path.write_text(json.dumps(data))
    return path


class TestScenarioLoading:
    def test_bundled_zpl_scan(self):
        res = resolve(load_scenario("zpl_scan"))
        mols = res.setup().microscope.molecules
        assert len(mols) == 1
        assert mols[0].lifetime_s1 == pytest.approx(9.4e-9)
        assert scheme_of(res.measurement.scheme) is Scheme.ZPL_00

    def test_all_bundled_validate(self):
        names = bundled_scenarios()
        assert {"zpl_scan", "vibronic_scan", "emission_spectrum", "antibunching", "fabry_perot", "stark_overlap", "saturation", "raster"} <= set(names)
        for name in names:
            resolve(load_scenario(name))

    def test_empty_file(self, tmp_path):
        p = tmp_path / "empty.json"
        p.write_text("")
        with pytest.raises(ScenarioParseError) as exc:
            load_scenario(p)
        assert exc.value.line == 1

    def test_syntax_error_position(self):
        with pytest.raises(ScenarioParseError) as exc:
            parse_scenario('{\n  "name": "x",\n  "seed": 1,,\n}')
        assert exc.value.line == 3

    def test_undefined_molecule(self, tmp_path):
        bad = {**MINIMAL, "microscopes": [{"id": "A", "molecules": ["ghost"], "filters": ["lp"]}]}
        with pytest.raises(ScenarioValidationError, match="ghost"):
            load_scenario(dump(tmp_path / "s.json", bad))

    def test_unknown_key(self, tmp_path):
        bad = {**MINIMAL, "molecules": [{"id": "m1", "lifetime_s": 9.4e-9}]}
        with pytest.raises(ScenarioValidationError, match="lifetime_s"):
            load_scenario(dump(tmp_path / "s.json", bad))

    def test_molecule_in_two_microscopes(self, tmp_path):
        mic = {"molecules": ["m1"], "filters": ["lp"]}
        bad = {**MINIMAL, "microscopes": [{"id": "A", **mic}, {"id": "B", **mic}]}
        with pytest.raises(ScenarioValidationError, match="m1"):
            load_scenario(dump(tmp_path / "s.json", bad))

    def test_missing_seed(self, tmp_path):
        data = {k: v for k, v in MINIMAL.items() if k != "seed"}
        path = dump(tmp_path / "s.json", data)
        with pytest.raises(MissingSeedError):
            load_scenario(path)
        assert load_scenario(path, seed=3).seed == 3

    def test_seed_override_changes_hash(self):
        a = load_scenario("zpl_scan")
        b = load_scenario("zpl_scan", seed=1)
        assert config_hash(a) != config_hash(b)
        assert config_hash(a) == config_hash(load_scenario("zpl_scan"))

    def test_measurement_substitution(self):
        sc = with_measurement(load_scenario("zpl_scan"), "hbt")
        assert sc.measurement.type == "hbt" and sc.measurement.duration_s == 1.0
        assert with_measurement(sc, "hbt") is sc


def test_csv_round_trip(tmp_path):
    path = tmp_path / "t.csv"
    write_csv(path, ["x", "n"], [[0.1, 3], [1 / 3, 4]], {"seed": 5})
    meta, cols, data = read_csv(path)
    assert meta == {"seed": "5"} and cols == ["x", "n"]
    assert data[1, 0] == 1 / 3


class TestCli:
    def test_validate(self, capsys):
        assert main(["validate", "--scenario", "zpl_scan"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["seed"] == 590 and out["measurement"] == "excitation_scan"

    def test_invalid_scenario_exit_code(self, tmp_path, capsys):
        bad = dump(tmp_path / "s.json", {**MINIMAL, "molecules": [{"id": "m1", "colour": 1}]})
        assert main(["validate", "--scenario", str(bad)]) == 2
        assert "colour" in capsys.readouterr().err

    def test_missing_file_exit_code(self, tmp_path):
        assert main(["run", "--scenario", str(tmp_path / "nope.json")]) == 2

    def test_run_failure_leaves_partial_report(self, tmp_path):
        # saturation on a 0-0 scheme with a band-pass isolating the 0-0 line is
        # a filter/scheme mismatch discovered only at run time
        data = {**SHORT_HBT, "measurement": {"type": "saturation", "scheme": "zpl_00"}}
        path = dump(tmp_path / "s.json", data)
        assert main(["run", "--scenario", str(path), "--out", str(tmp_path / "out")]) == 1
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        assert report["status"] == "failed" and report["partial"] is True

    def test_run_and_seed_override(self, tmp_path, capsys):
        path = dump(tmp_path / "s.json", MINIMAL)
        assert main(["scan-excitation", "--scenario", str(path), "--seed", "0x10", "--out", str(tmp_path / "o")]) == 0
        report = json.loads((tmp_path / "o" / "report.json").read_text())
        assert report["seeds"]["master"] == 16
        assert (tmp_path / "o" / "excitation_scan.csv").exists()
        assert "fit.fwhm" in capsys.readouterr().out

    def test_rejects_bad_seed(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["run", "--scenario", "zpl_scan", "--seed", "-1"])
        assert exc.value.code == 2

    def test_module_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "zpl_lab", "validate", "--scenario", "stark_overlap"],
                              capture_output=True, text=True)
        assert proc.returncode == 0 and '"overlap"' in proc.stdout


def test_reruns_are_byte_identical(tmp_path):
    path = dump(tmp_path / "s.json", SHORT_HBT)
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert main(["run", "--scenario", str(path), "--out", str(out)]) == 0
        outs.append(out)
    names = sorted(p.name for p in outs[0].iterdir())
    assert "timetags.zplt" in names and "g2.csv" in names
    for name in names:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name
    rec = read_timetags(outs[0] / "timetags.zplt")
    assert len(rec) > 0 and set(rec.channels) == {0, 1}


@pytest.mark.slow
@pytest.mark.parametrize("name", ["zpl_scan", "vibronic_scan", "emission_spectrum", "antibunching", "fabry_perot", "stark_overlap", "saturation", "raster"])
def test_bundled_scenario_runs(bundled_run, name):
    report, out = bundled_run(name)
    assert report["status"] == "ok" and not report["partial"]
    for f in report["outputs"]:
        assert (out / f).exists()
