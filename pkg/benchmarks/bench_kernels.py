"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Inputs mirror a one-second HBT run (~1.5e5 clicks per arm, 4 ps ticks,
201 bins of 0.5 ns) and a dead-time pass over 1e6 photons at 1e8/s.
"""

import argparse
import timeit

import numpy as np

from zpl_lab import _fallback

try:
    from zpl_lab import _kernels
except ImportError:
    _kernels = None


def hbt_inputs(rng, rate=1.5e5, duration=1.0, tick=4e-12):
    def arm():
        t = np.sort(rng.random(rng.poisson(rate * duration)) * duration)
        return np.floor(t / tick).astype(np.int64)

    bin_ticks = 0.5e-9 / tick
    return arm(), arm(), -100.5 * bin_ticks, bin_ticks, 201


def dead_time_inputs(rng, n=1_000_000, rate=1e8):
    return np.cumsum(rng.exponential(1 / rate, n)), 50e-9


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    rng = np.random.default_rng(0)
    cases = {
        "correlate": hbt_inputs(rng),
        "dead_time_mask": dead_time_inputs(rng),
    }
    backends = {"python": _fallback}
    if _kernels is not None:
        backends["cython"] = _kernels
    else:
        print("compiled kernels not built; timing the fallback only")
    print(f"{'kernel':<16}{'backend':<10}{'best (ms)':>12}{'speed-up':>10}")
    for name, inputs in cases.items():
        best = {}
        for label, mod in backends.items():
            func = getattr(mod, name)
            best[label] = min(timeit.repeat(lambda: func(*inputs), number=1, repeat=args.repeat))
        results = {label: getattr(mod, name)(*inputs) for label, mod in backends.items()}
        assert all(np.array_equal(results["python"], r) for r in results.values()), name
        for label, t in best.items():
            print(f"{name:<16}{label:<10}{t * 1e3:>12.2f}{best['python'] / t:>9.1f}x")


if __name__ == "__main__":
    main()
