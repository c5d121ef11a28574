import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cvarsynth import Horizon, PlantModel, UncertaintyModel  # noqa: E402

# acceptance results collected by tests/test_acceptance.py
ACCEPTANCE_LINES = {}


@pytest.fixture
def desk():
    """Scalar plant A=2, B=C=C_J=L=1 with horizon 2 and a small uncertainty box."""
    plant = PlantModel(A=[[2.0]], B=[[1.0]], C=[[1.0]], C_J=[[1.0]], L=[[1.0]])
    unc = UncertaintyModel(basis=[[[1.0]]], lower=[-0.1], upper=[0.1])
    return plant, unc, Horizon(N_h=2, eps_r=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile (or load cached) jitted kernels once so timed tests measure steady state."""
    from cvarsynth import _kernels

    n, S = 2, 2
    G0 = np.zeros((S, n * 2, n * 2)) + np.eye(n * 2)
    M = np.zeros_like(G0)
    _kernels.proxy_oracle(G0, M, np.eye(n), np.zeros((n, n)), 3, 0.1, True)
    _kernels.proxy_oracle(G0, M, np.eye(n), np.zeros((n, n)), 3, 0.1, False)
    _kernels.kappa_inverse_batch(G0, M, np.eye(n))
    _kernels.block_toeplitz(np.eye(n), np.eye(n), 2)
    _kernels.simulate(np.eye(n), np.eye(n), np.eye(n), np.eye(n), np.zeros((2, n)))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
