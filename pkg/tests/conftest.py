import importlib

import pytest

from zpl_lab.detection import Detector
from zpl_lab.instruments import Microscope, Setup
from zpl_lab.photophysics import LaserField, Molecule, Scheme
from zpl_lab.detection import SpectralFilter

# criterion number -> (title, passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {num}. {title}: {detail}")


@pytest.fixture
def molecule():
    return Molecule()


@pytest.fixture
def zpl_setup():
    """One molecule, 0-0 excitation, Stokes detection through a 600 nm long-pass."""
    mic = Microscope(molecules=(Molecule(),), filters=(SpectralFilter.long_pass(600.0),))
    return Setup(mic, LaserField(power=0.02e-9, linewidth=0.0))


@pytest.fixture
def pump01_setup():
    mic = Microscope(molecules=(Molecule(),), filters=(SpectralFilter.band_pass(590.0, 0.5),))
    return Setup(mic, LaserField(power=5e-9))


@pytest.fixture
def ideal_detector():
    return Detector(quantum_efficiency=1.0, jitter_sigma=0.0, dead_time=0.0, dark_rate=0.0)


@pytest.fixture(params=["cython", "python"])
def backend(request):
    """Kernel module for each available backend."""
    if request.param == "python":
        return importlib.import_module("zpl_lab._fallback")
    try:
        return importlib.import_module("zpl_lab._kernels")
    except ImportError:
        pytest.skip("compiled kernels not built")


SCHEMES = (Scheme.ZPL_00, Scheme.PUMP_01)


@pytest.fixture(scope="session")
def bundled_run(tmp_path_factory):
    """Run a bundled scenario once per session; returns (report, output dir)."""
    from zpl_lab.runner import run
    from zpl_lab.scenario import load_scenario

    cache = {}

    def get(name: str):
        if name not in cache:
            out = tmp_path_factory.mktemp(name)
            cache[name] = (run(load_scenario(name), out), out)
        return cache[name]

    return get
