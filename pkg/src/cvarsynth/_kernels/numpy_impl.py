"""Vectorised numpy kernels. Reference path, and the fallback when numba is off."""
import numpy as np


def block_toeplitz(base, right, n_blocks):
    """Block lower-triangular Toeplitz matrix with block (k, j) = base^(k-j) @ right."""
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


def _shifted_cols(M, n):
    # block columns 1..N_h-1 of every M, shaped (S, rows, N_h-1, n)
    S, rows, cols = M.shape
    return M[:, :, n:].reshape(S, rows, cols // n - 1, n)


def kappa_inverse_batch(G0, M, KD):
    """G0 - L(K) for a stack of scenarios; ``KD`` is ``K @ (C C_J^-1)``."""
    n = KD.shape[0]
    S, rows, cols = G0.shape
    X = G0.copy()
    if cols > n:
        Mb = _shifted_cols(M, n)
        X[:, :, :cols - n] -= np.einsum("srjk,kl->srjl", Mb, KD).reshape(S, rows, cols - n)
    return X


def proxy_oracle(G0, M, D, K, f, eta, with_grad):
    """Per-scenario proxy values (top-f singular value sum + eta*|K|_F^2) and gradients."""
    n = K.shape[0]
    S, rows, cols = G0.shape
    X = kappa_inverse_batch(G0, M, K @ D)
    reg = eta * float(np.sum(K * K))
    if not with_grad:
        s = np.linalg.svd(X, compute_uv=False)
        return s[:, :f].sum(axis=1) + reg, np.zeros((S, n, n))
    U, s, Vt = np.linalg.svd(X)
    vals = s[:, :f].sum(axis=1) + reg
    W = U[:, :, :f] @ Vt[:, :f, :]
    grads = np.broadcast_to(2.0 * eta * K, (S, n, n)).copy()
    if cols > n:
        Mb = _shifted_cols(M, n)
        Wb = W[:, :, :cols - n].reshape(S, rows, cols // n - 1, n)
        grads -= np.einsum("srjk,srjl->skl", Mb, Wb) @ D.T
    return vals, grads


def simulate(Ax, Ae, dA, B, attack):
    """Closed-loop recursion from rest; returns stacked x_p[1..N_h], e[1..N_h]."""
    n_steps, n = attack.shape
    xp = np.zeros(n)
    e = np.zeros(n)
    xs = np.empty((n_steps, n))
    es = np.empty((n_steps, n))
    for k in range(n_steps):
        Ba = B @ attack[k]
        xp, e = Ax @ xp + Ba, Ae @ e + dA @ xp + Ba
        xs[k] = xp
        es[k] = e
    return xs, es
