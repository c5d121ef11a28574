"""Worst-case stealthy attack impact, its convex proxy, and proxy gradients."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .lifted import affine_decomposition, closed_loop_matrices, xa_inverse
from .model import Horizon, ModelError, PlantModel, UncertaintyModel

SINGULAR_RTOL = 1e-14
TIE_RTOL = 1e-10


class UnboundedImpactError(ArithmeticError):
    """kappa^-1 is numerically singular, so the stealthy impact is unbounded."""


@dataclass(frozen=True)
class ProxyConstants:
    mu: float
    f: int
    eta: float
    c: float


@dataclass(frozen=True)
class ImpactReport:
    q_exact: float
    sigma_max_kappa: float
    q_proxy: float
    bound_value: float
    worst_attack: np.ndarray
    eps_r: float
    degenerate: bool = False

    @property
    def bound_lhs(self) -> float:
        """``eps_r * sigma_max(kappa)``, the quantity the proxy bound controls."""
        return self.eps_r * self.sigma_max_kappa

    @property
    def bound_satisfied(self) -> bool:
        return bool(self.bound_lhs <= self.bound_value * (1 + 1e-9))


def n_top(plant: PlantModel, hor: Horizon) -> int:
    """Number of singular values kept by the proxy: ``n_x N_h - 1``."""
    return plant.n_x * hor.N_h - 1


def proxy_bound_constants(plant: PlantModel, hor: Horizon, eta: float = 0.0) -> ProxyConstants:
    f = n_top(plant, hor)
    if f < 1:
        raise ModelError("the proxy bound needs n_x * N_h >= 2")
    c = abs(np.linalg.det(plant.C_J @ np.linalg.inv(plant.C))) ** hor.N_h
    # f**f overflows quickly; go through logs
    mu = math.exp(math.log(hor.eps_r) + math.log(c) - f * math.log(f))
    return ProxyConstants(mu=mu, f=f, eta=float(eta), c=c)


def _svd(plant, unc, delta, K, hor):
    aff = affine_decomposition(plant, unc, delta, hor)
    Kinv = aff(K)
    U, s, Vt = np.linalg.svd(Kinv)
    return aff, U, s, Vt


def topf_sum(s, f):
    return float(np.sum(np.sort(s)[::-1][:f]))


def impact_exact(plant: PlantModel, unc: UncertaintyModel, delta, K, hor: Horizon,
                 eta: float = 0.0) -> ImpactReport:
    """Exact worst-case impact ``eps_r * sigma_max(kappa)^2`` and the maximising attack."""
    n, Nh = plant.n_x, hor.N_h
    K = np.asarray(K, dtype=float).reshape(n, n)
    aff, U, s, Vt = _svd(plant, unc, delta, K, hor)
    s_min = s[-1]
    if not s_min > SINGULAR_RTOL * s[0]:
        raise UnboundedImpactError(f"sigma_min(kappa^-1) = {s_min:.3g} relative to {s[0]:.3g}")
    sig = 1.0 / s_min
    eps = hor.eps_r
    # residual direction w = sqrt(eps) u_min gives y_p = kappa w = sqrt(eps) v_min / s_min,
    # and a = F_xa^-1 (I (x) C_J)^-1 y_p
    y_p = math.sqrt(eps) * Vt[-1] / s_min
    A_x, _, _ = closed_loop_matrices(plant, unc, delta, K)
    x_p = np.linalg.solve(plant.C_J, y_p.reshape(Nh, n).T).T.ravel()
    a = xa_inverse(plant, A_x, Nh) @ x_p
    f = n * Nh - 1
    q_proxy = eta * float(np.sum(K * K)) + float(np.sum(s[:f]))
    if f >= 1:
        const = proxy_bound_constants(plant, hor, eta)
        bound = const.mu * q_proxy ** f
    else:
        bound = math.nan
    degenerate = f >= 1 and len(s) > f and (s[f - 1] - s[f]) <= TIE_RTOL * max(s[0], 1.0)
    return ImpactReport(q_exact=eps * sig ** 2, sigma_max_kappa=sig, q_proxy=q_proxy,
                        bound_value=bound, worst_attack=a, eps_r=eps, degenerate=bool(degenerate))


def impact_proxy(plant: PlantModel, unc: UncertaintyModel, delta, K, hor: Horizon, eta: float) -> float:
    """``eta |K|_F^2`` plus the sum of all but the smallest singular value of kappa^-1."""
    K = np.asarray(K, dtype=float).reshape(plant.n_x, plant.n_x)
    aff = affine_decomposition(plant, unc, delta, hor)
    s = np.linalg.svd(aff(K), compute_uv=False)
    return eta * float(np.sum(K * K)) + float(np.sum(s[:n_top(plant, hor)]))


def proxy_gradient(plant: PlantModel, unc: UncertaintyModel, delta, K, hor: Horizon, eta: float) -> np.ndarray:
    """Gradient (a subgradient at singular-value ties) of :func:`impact_proxy` in K."""
    n = plant.n_x
    K = np.asarray(K, dtype=float).reshape(n, n)
    aff = affine_decomposition(plant, unc, delta, hor)
    U, s, Vt = np.linalg.svd(aff(K))
    f = n_top(plant, hor)
    W = U[:, :f] @ Vt[:f]
    return 2.0 * eta * K - aff.adjoint(W)


def proxy_oracle(aff_stack, K, f, eta, with_grad=True):
    """Batched proxy values/gradients over stacked affine decompositions.

    ``aff_stack`` is a ``(G0, M, D)`` triple with ``G0`` and ``M`` of shape
    ``(S, n_x N_h, n_x N_h)``.
    """
    G0, M, D = aff_stack
    K = np.ascontiguousarray(K, dtype=float)
    return _kernels.proxy_oracle(G0, M, D, K, int(f), float(eta), bool(with_grad))
