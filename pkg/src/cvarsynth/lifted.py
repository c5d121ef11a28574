"""Horizon-stacked closed-loop operators and the affine-in-K form of kappa^-1.

Stacking convention: the attack stack is ``a[0..N_h-1]``; state, error and
output stacks are indexed ``1..N_h``. With ``A_x = A_d + B K C`` and
``A_e = A_d - L C`` (``A_d`` the uncertain dynamics)::

    x_p = F_xa a,    e = F_ea a + F_ex x_p
    y_p = F_p a = (I (x) C_J) F_xa a
    y_r = F_r a = (I (x) C)(F_ea + F_ex F_xa) a

and ``kappa = F_p F_r^-1``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .model import Horizon, PlantModel, UncertaintyModel, sample_A


def _blockdiag(M, n_blocks):
    return np.kron(np.eye(n_blocks), M)


def _as_K(plant, K):
    n = plant.n_x
    if K is None:
        return np.zeros((n, n))
    K = np.asarray(K, dtype=float).reshape(n, n)
    return K


@dataclass(frozen=True)
class LiftedOperators:
    F_xa: np.ndarray
    F_ea: np.ndarray
    F_ex: np.ndarray
    F_p: np.ndarray
    F_r: np.ndarray
    delta: np.ndarray
    K: np.ndarray


def closed_loop_matrices(plant: PlantModel, unc: UncertaintyModel, delta, K):
    """Return ``(A_x, A_e, dA)`` for one uncertainty realisation."""
    K = _as_K(plant, K)
    A_d = sample_A(plant, unc, delta)
    A_x = A_d + plant.B @ K @ plant.C
    A_e = A_d - plant.L @ plant.C
    return A_x, A_e, A_d - plant.A


def build_lifted(plant: PlantModel, unc: UncertaintyModel, delta, K, hor: Horizon) -> LiftedOperators:
    n, Nh = plant.n_x, hor.N_h
    K = _as_K(plant, K)
    A_x, A_e, dA = closed_loop_matrices(plant, unc, delta, K)
    F_xa = _kernels.block_toeplitz(A_x, plant.B, Nh)
    F_ea = _kernels.block_toeplitz(A_e, plant.B, Nh)
    F_ex = np.zeros_like(F_ea)
    if Nh > 1:
        # strictly lower: block (k, j) = A_e^(k-1-j) dA
        F_ex[n:, :-n] = _kernels.block_toeplitz(A_e, dA, Nh - 1)
    F_p = _blockdiag(plant.C_J, Nh) @ F_xa
    F_r = _blockdiag(plant.C, Nh) @ (F_ea + F_ex @ F_xa)
    return LiftedOperators(F_xa, F_ea, F_ex, F_p, F_r, np.atleast_1d(np.asarray(delta, float)), K)


def xa_inverse(plant: PlantModel, A_x: np.ndarray, N_h: int) -> np.ndarray:
    """Closed-form ``F_xa^-1``: ``B^-1`` on the diagonal, ``-B^-1 A_x`` below it."""
    n = plant.n_x
    Binv = np.linalg.inv(plant.B)
    sub = -Binv @ A_x
    out = np.zeros((n * N_h, n * N_h))
    for k in range(N_h):
        out[k * n:(k + 1) * n, k * n:(k + 1) * n] = Binv
        if k:
            out[k * n:(k + 1) * n, (k - 1) * n:k * n] = sub
    return out


def build_kappa_inverse(plant: PlantModel, unc: UncertaintyModel, delta, K, hor: Horizon) -> np.ndarray:
    """``kappa^-1 = (I (x) C)(F_ea F_xa^-1 + F_ex)(I (x) C_J)^-1`` without inverting F_xa."""
    ops = build_lifted(plant, unc, delta, K, hor)
    A_x, _, _ = closed_loop_matrices(plant, unc, delta, K)
    Xi = xa_inverse(plant, A_x, hor.N_h)
    CJinv = np.linalg.inv(plant.C_J)
    inner = ops.F_ea @ Xi + ops.F_ex
    return _blockdiag(plant.C, hor.N_h) @ inner @ _blockdiag(CJinv, hor.N_h)


@dataclass(frozen=True)
class AffineKappaInverse:
    """``kappa^-1(K) = G0 - L(K)`` for a fixed uncertainty.

    ``L(K)`` puts ``M_{j+1} K D`` in block column ``j`` (``j < N_h - 1``),
    where ``M_j`` is block column ``j`` of ``(I (x) C) F_ea`` and
    ``D = C C_J^-1``.
    """

    G0: np.ndarray
    M: np.ndarray
    D: np.ndarray
    n_x: int
    N_h: int

    def linear_map(self, K) -> np.ndarray:
        K = np.asarray(K, dtype=float).reshape(self.n_x, self.n_x)
        zero = np.zeros_like(self.G0)[None]
        return -_kernels.kappa_inverse_batch(zero, self.M[None], K @ self.D)[0]

    def adjoint(self, G) -> np.ndarray:
        n = self.n_x
        G = np.asarray(G, dtype=float)
        out = np.zeros((n, n))
        for j in range(self.N_h - 1):
            out += self.M[:, (j + 1) * n:(j + 2) * n].T @ G[:, j * n:(j + 1) * n]
        return out @ self.D.T

    def __call__(self, K) -> np.ndarray:
        return self.G0 - self.linear_map(K)


def affine_decomposition(plant: PlantModel, unc: UncertaintyModel, delta, hor: Horizon) -> AffineKappaInverse:
    n, Nh = plant.n_x, hor.N_h
    A_x0, A_e, dA = closed_loop_matrices(plant, unc, delta, None)
    F_ea = _kernels.block_toeplitz(A_e, plant.B, Nh)
    F_ex = np.zeros_like(F_ea)
    if Nh > 1:
        F_ex[n:, :-n] = _kernels.block_toeplitz(A_e, dA, Nh - 1)
    CJinv = np.linalg.inv(plant.C_J)
    Cb = _blockdiag(plant.C, Nh)
    G0 = Cb @ (F_ea @ xa_inverse(plant, A_x0, Nh) + F_ex) @ _blockdiag(CJinv, Nh)
    M = Cb @ F_ea
    for a in (G0, M):
        a.setflags(write=False)
    return AffineKappaInverse(G0=G0, M=M, D=plant.C @ CJinv, n_x=n, N_h=Nh)


def simulate_closed_loop(plant: PlantModel, unc: UncertaintyModel, delta, K, attack):
    """Time-domain recursion of the 2n_x-state closed loop from rest.

    ``attack`` has shape ``(N_h, n_x)`` (or is its row-major flattening).
    Returns the stacked performance output ``y_p[1..N_h]`` and residual
    ``y_r[1..N_h]`` as flat vectors.
    """
    n = plant.n_x
    attack = np.asarray(attack, dtype=float).reshape(-1, n)
    A_x, A_e, dA = closed_loop_matrices(plant, unc, delta, K)
    xs, es = _kernels.simulate(A_x, A_e, dA, np.ascontiguousarray(plant.B), np.ascontiguousarray(attack))
    return (xs @ plant.C_J.T).ravel(), (es @ plant.C.T).ravel()
