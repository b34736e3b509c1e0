"""``zpl-lab`` command line.

Every verb takes ``--scenario`` (file path or bundled name), ``--seed``
(overrides the scenario's seed) and ``--out`` (output directory).
``run`` executes the scenario's own measurement; the measurement verbs
run that measurement on the scenario's sample, using the scenario's
settings when its measurement already has that type and defaults
otherwise.  ``validate`` only loads and checks the file.

Exit status: 0 success, 1 measurement failure, 2 invalid scenario or
usage.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import BACKEND, __version__
from .errors import RunError, ScenarioError, ZplLabError
from .runner import run
from .scenario import bundled_scenarios, config_hash, load_scenario, resolve, with_measurement

VERBS = {
    "run": None,
    "scan-excitation": "excitation_scan",
    "raster": "raster",
    "emission": "emission",
    "hbt": "hbt",
    "fp-scan": "fp_scan",
    "stark-map": "stark_map",
    "saturation": "saturation",
    "overlap": "overlap",
    "validate": None,
}


HELP = {
    "run": "run the scenario's own measurement",
    "scan-excitation": "sweep the laser frequency and fit the excitation line",
    "raster": "scan the focus over the sample and fit the spot size",
    "emission": "record the emission spectrum and its band fractions",
    "hbt": "Hanbury Brown-Twiss intensity correlation and antibunching fit",
    "fp-scan": "analyse the filtered emission with a scanning Fabry-Perot",
    "stark-map": "excitation spectra of two molecules versus electrode voltage",
    "saturation": "detected rate versus pump power with a saturation fit",
    "overlap": "find the voltage bringing two molecules into resonance",
    "validate": "load and check a scenario without running it",
}


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zpl-lab", description="Simulate single-molecule photon-source measurements.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__} ({BACKEND} kernels)")
    sub = parser.add_subparsers(dest="verb", required=True, metavar="VERB")
    for verb in VERBS:
        p = sub.add_parser(verb, help=HELP[verb], description=HELP[verb])
        p.add_argument("--scenario", required=True, help="scenario JSON path or bundled name (%s)" % ", ".join(bundled_scenarios()))
        p.add_argument("--seed", type=_seed, default=None, help="master seed; overrides the scenario")
        p.add_argument("--out", type=Path, default=None, help="output directory (default runs/<scenario>/<measurement>)")
        if verb != "validate":
            p.add_argument("--timetags", action=argparse.BooleanOptionalAction, default=None,
                           help="write HBT detector records as a time-tag file")
            p.add_argument("--svg", action=argparse.BooleanOptionalAction, default=None,
                           help="write SVG plots (needs matplotlib)")
    return parser


def _summary(results: dict) -> dict:
    """Fitted numbers worth printing: the top-level scalars and fit parameters."""
    out = {}
    for key, value in results.items():
        if isinstance(value, dict) and "parameters" in value:
            for name, v in value["parameters"].items():
                out[f"{key}.{name}"] = v
                out[f"{key}.{name}_err"] = value["uncertainties"][name]
        elif isinstance(value, dict):
            out.update({f"{key}.{k}": v for k, v in _summary(value).items()})
        elif isinstance(value, (int, float, str)):
            out[key] = value
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scenario = load_scenario(args.scenario, seed=args.seed)
        kind = VERBS[args.verb]
        if kind is not None:
            scenario = with_measurement(scenario, kind)
        resolve(scenario)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.verb == "validate":
        print(json.dumps({
            "scenario": scenario.name,
            "measurement": scenario.measurement.type,
            "seed": scenario.seed,
            "config_hash": config_hash(scenario),
        }, indent=2))
        return 0
    out = args.out or Path("runs") / scenario.name / scenario.measurement.type
    try:
        report = run(scenario, out, timetags=args.timetags, svg=args.svg)
    except RunError as exc:
        print(f"error: {exc}; partial report at {exc.report_path}", file=sys.stderr)
        return 1
    except ZplLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"{scenario.name}: {scenario.measurement.type} -> {out}")
    for key, value in _summary(report["results"]).items():
        print(f"  {key} = {value:.6g}" if isinstance(value, float) else f"  {key} = {value}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
