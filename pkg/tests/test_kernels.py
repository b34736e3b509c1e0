"""Compiled and fallback kernels against brute-force references and each other."""

import importlib
import os
import subprocess
import sys

import numpy as np
import pytest


def brute_correlate(a, b, lo, bin_ticks, nbins):
    d = np.subtract.outer(b, a).ravel().astype(float)
    idx = np.floor((d - lo) / bin_ticks)
    ok = (d >= lo) & (idx >= 0) & (idx < nbins)
    return np.bincount(idx[ok].astype(int), minlength=nbins)


def brute_dead_time(t, dead):
    keep, last = [], -np.inf
    for x in t:
        ok = x - last >= dead
        keep.append(ok)
        if ok:
            last = x
    return np.array(keep, dtype=bool)


def _ticks(seed, n, span):
    return np.sort(np.random.default_rng(seed).integers(0, span, n)).astype(np.int64)


@pytest.mark.parametrize("seed", range(5))
def test_correlate_matches_brute_force(backend, seed):
    a, b = _ticks(seed, 400, 200_000), _ticks(seed + 100, 300, 200_000)
    lo, width, nbins = -5000.5, 250.0, 41
    np.testing.assert_array_equal(backend.correlate(a, b, lo, width, nbins), brute_correlate(a, b, lo, width, nbins))


def test_correlate_fractional_edges(backend):
    a, b = _ticks(1, 500, 50_000), _ticks(2, 500, 50_000)
    for lo, width in [(-1000.0, 125.0), (-1001.3, 125.7), (-7.5, 0.5)]:
        nbins = 31
        np.testing.assert_array_equal(backend.correlate(a, b, lo, width, nbins), brute_correlate(a, b, lo, width, nbins))


def test_correlate_empty(backend):
    empty = np.empty(0, np.int64)
    assert backend.correlate(empty, _ticks(0, 10, 100), -10.0, 1.0, 20).sum() == 0
    assert backend.correlate(_ticks(0, 10, 100), empty, -10.0, 1.0, 20).sum() == 0


def test_dead_time_matches_loop(backend):
    rng = np.random.default_rng(3)
    t = np.sort(rng.random(5000) * 1e-3)
    for dead in (0.0, 5e-8, 1e-7, 1e-6):
        np.testing.assert_array_equal(backend.dead_time_mask(t, dead), brute_dead_time(t, dead))


def test_backends_identical_on_large_input():
    try:
        fast = importlib.import_module("zpl_lab._kernels")
    except ImportError:
        pytest.skip("compiled kernels not built")
    slow = importlib.import_module("zpl_lab._fallback")
    a, b = _ticks(5, 200_000, 10**10), _ticks(6, 200_000, 10**10)
    args = (-25_000_000.0 - 62.5, 125_000.0, 401)
    np.testing.assert_array_equal(fast.correlate(a, b, *args), slow.correlate(a, b, *args))
    t = np.sort(np.random.default_rng(7).random(300_000))
    np.testing.assert_array_equal(fast.dead_time_mask(t, 5e-6), slow.dead_time_mask(t, 5e-6))


def test_pure_env_var_selects_fallback():
    env = {**os.environ, "ZPL_LAB_PURE": "1"}
    out = subprocess.run(
        [sys.executable, "-c", "import zpl_lab; print(zpl_lab.BACKEND)"], env=env, capture_output=True, text=True, check=True
    )
    assert out.stdout.strip() == "python"
