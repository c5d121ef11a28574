"""numba ports of the kernels in :mod:`numpy_impl`; same signatures and results."""
import os

import numba
import numpy as np
from numba import njit, prange

# prefer OpenMP/workqueue; TBB is often present but too old and warns
if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

_opts = dict(cache=True, nogil=True)


@njit(**_opts)
def block_toeplitz(base, right, n_blocks):
    n = base.shape[0]
    out = np.zeros((n * n_blocks, n * n_blocks))
    power = np.eye(n)
    for lag in range(n_blocks):
        blk = power @ right
        for j in range(n_blocks - lag):
            k = j + lag
            out[k * n:(k + 1) * n, j * n:(j + 1) * n] = blk
        power = power @ base
    return out


@njit(**_opts)
def _kappa_inverse_one(G0, M, KD):
    n = KD.shape[0]
    rows, cols = G0.shape
    X = G0.copy()
    for j in range(cols // n - 1):
        blk = np.ascontiguousarray(M[:, (j + 1) * n:(j + 2) * n]) @ KD
        X[:, j * n:(j + 1) * n] -= blk
    return X


@njit(parallel=True, **_opts)
def kappa_inverse_batch(G0, M, KD):
    out = np.empty_like(G0)
    for s in prange(G0.shape[0]):
        out[s] = _kappa_inverse_one(G0[s], M[s], KD)
    return out


@njit(parallel=True, **_opts)
def proxy_oracle(G0, M, D, K, f, eta, with_grad):
    n = K.shape[0]
    S, rows, cols = G0.shape
    KD = K @ D
    DT = np.ascontiguousarray(D.T)
    reg = eta * np.sum(K * K)
    vals = np.empty(S)
    grads = np.zeros((S, n, n))
    for s in prange(S):
        X = _kappa_inverse_one(G0[s], M[s], KD)
        U, sv, Vt = np.linalg.svd(X)
        vals[s] = np.sum(sv[:f]) + reg
        if with_grad:
            W = np.ascontiguousarray(U[:, :f]) @ np.ascontiguousarray(Vt[:f, :])
            g = 2.0 * eta * K
            for j in range(cols // n - 1):
                Mj = np.ascontiguousarray(M[s][:, (j + 1) * n:(j + 2) * n])
                Wj = np.ascontiguousarray(W[:, j * n:(j + 1) * n])
                g -= (Mj.T @ Wj) @ DT
            grads[s] = g
    return vals, grads


@njit(**_opts)
def simulate(Ax, Ae, dA, B, attack):
    n_steps, n = attack.shape
    xp = np.zeros(n)
    e = np.zeros(n)
    xs = np.empty((n_steps, n))
    es = np.empty((n_steps, n))
    for k in range(n_steps):
        Ba = B @ attack[k]
        e = Ae @ e + dA @ xp + Ba
        xp = Ax @ xp + Ba
        xs[k] = xp
        es[k] = e
    return xs, es
