"""Time the numba kernels against the pure-numpy fallback.

    python benchmarks/bench_kernels.py [--scenarios 11 100 1000] [--repeat 20]

Both implementations are imported directly, so the comparison runs in one
process regardless of ``CVARSYNTH_BACKEND``. The first numba call per
signature is excluded (compilation, or loading from the on-disk cache).
"""
import argparse
import statistics
import time

import numpy as np

from cvarsynth import draw_scenarios, example_system
from cvarsynth._kernels import numba_impl, numpy_impl
from cvarsynth.scenario import ScenarioBatch


def timeit(fn, repeat):
    fn()
    samples = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--scenarios", type=int, nargs="+", default=[11, 100, 1000])
    p.add_argument("--repeat", type=int, default=20)
    args = p.parse_args(argv)

    plant, unc, hor = example_system()
    K = np.random.default_rng(0).normal(scale=0.3, size=(3, 3))
    print(f"{'kernel':<24}{'S':>6}{'numpy ms':>12}{'numba ms':>12}{'speed-up':>10}")
    for S in args.scenarios:
        b = ScenarioBatch(plant, unc, draw_scenarios(unc, S, seed=0).deltas, hor)
        for grad in (False, True):
            t = [timeit(lambda impl=impl: impl.proxy_oracle(b.G0, b.M, b.D, K, b.f, 0.1, grad), args.repeat)
                 for impl in (numpy_impl, numba_impl)]
            name = "proxy_oracle" + ("+grad" if grad else "")
            print(f"{name:<24}{S:>6}{1e3 * t[0]:>12.3f}{1e3 * t[1]:>12.3f}{t[0] / t[1]:>10.1f}")

    rng = np.random.default_rng(1)
    mats = [np.ascontiguousarray(rng.normal(scale=0.4, size=(3, 3))) for _ in range(4)]
    for T in (5, 50, 500):
        attack = rng.normal(size=(T, 3))
        t = [timeit(lambda impl=impl: impl.simulate(*mats, attack), args.repeat) for impl in (numpy_impl, numba_impl)]
        print(f"{'simulate':<24}{T:>6}{1e3 * t[0]:>12.3f}{1e3 * t[1]:>12.3f}{t[0] / t[1]:>10.1f}")


if __name__ == "__main__":
    main()
