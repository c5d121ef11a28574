"""Both kernel backends must agree; the environment flag must select between them."""
import os
import subprocess
import sys

import numpy as np
import pytest

from cvarsynth import _kernels, draw_scenarios, example_system
from cvarsynth._kernels import numpy_impl
from cvarsynth.scenario import ScenarioBatch

numba_impl = pytest.importorskip("cvarsynth._kernels.numba_impl")


@pytest.fixture(scope="module")
def batch():
    plant, unc, hor = example_system()
    return ScenarioBatch(plant, unc, draw_scenarios(unc, 7, seed=0).deltas, hor)


def test_block_toeplitz(rng):
    base, right = rng.normal(size=(3, 3)), rng.normal(size=(3, 3))
    for nb in (1, 2, 5):
        np.testing.assert_allclose(numba_impl.block_toeplitz(base, right, nb),
                                   numpy_impl.block_toeplitz(base, right, nb), rtol=1e-13, atol=1e-13)
    T = numpy_impl.block_toeplitz(base, right, 3)
    np.testing.assert_allclose(T[6:9, 0:3], base @ base @ right)
    assert not T[0:3, 3:].any()


def test_kappa_inverse_batch(batch, rng):
    KD = rng.normal(size=(3, 3))
    np.testing.assert_allclose(numba_impl.kappa_inverse_batch(batch.G0, batch.M, KD),
                               numpy_impl.kappa_inverse_batch(batch.G0, batch.M, KD), rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("with_grad", [True, False])
def test_proxy_oracle(batch, rng, with_grad):
    K = rng.normal(scale=0.3, size=(3, 3))
    v1, g1 = numba_impl.proxy_oracle(batch.G0, batch.M, batch.D, K, batch.f, 0.1, with_grad)
    v0, g0 = numpy_impl.proxy_oracle(batch.G0, batch.M, batch.D, K, batch.f, 0.1, with_grad)
    np.testing.assert_allclose(v1, v0, rtol=1e-12)
    if with_grad:
        np.testing.assert_allclose(g1, g0, rtol=1e-10, atol=1e-10)


def test_simulate(rng):
    n, T = 3, 6
    mats = [rng.normal(scale=0.5, size=(n, n)) for _ in range(4)]
    attack = rng.normal(size=(T, n))
    for a, b in zip(numba_impl.simulate(*mats, attack), numpy_impl.simulate(*mats, attack)):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_thread_count_does_not_change_results(batch, rng):
    K = rng.normal(scale=0.3, size=(3, 3))
    _kernels.set_threads(1)
    one = _kernels.proxy_oracle(batch.G0, batch.M, batch.D, K, batch.f, 0.1, True)
    _kernels.set_threads(os.cpu_count())
    many = _kernels.proxy_oracle(batch.G0, batch.M, batch.D, K, batch.f, 0.1, True)
    for a, b in zip(one, many):
        np.testing.assert_array_equal(a, b)


def _backend_under(value):
    env = dict(os.environ, CVARSYNTH_BACKEND=value)
    return subprocess.run([sys.executable, "-c", "from cvarsynth import _kernels; print(_kernels.BACKEND)"],
                          env=env, capture_output=True, text=True)


def test_environment_flag_selects_backend():
    assert _backend_under("numpy").stdout.strip() == "numpy"
    assert _backend_under("numba").stdout.strip() == "numba"
    bad = _backend_under("fortran")
    assert bad.returncode != 0 and "CVARSYNTH_BACKEND" in bad.stderr
