"""Scenario sets, per-scenario proxy values, and empirical tail statistics."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .impact import n_top, proxy_oracle
from .lifted import affine_decomposition
from .model import Horizon, ModelError, PlantModel, UncertaintyModel


@dataclass(frozen=True)
class ScenarioSet:
    deltas: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        d = np.array(self.deltas, dtype=float)
        if d.ndim == 1:
            d = d[:, None]
        if d.shape[0] < 1:
            raise ValueError("a scenario set needs at least one scenario")
        d.setflags(write=False)
        object.__setattr__(self, "deltas", d)

    @property
    def N(self) -> int:
        return self.deltas.shape[0]

    def __len__(self):
        return self.N

    def to_csv(self, path):
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"delta_{k}" for k in range(self.deltas.shape[1])])
            for row in self.deltas:
                w.writerow([repr(float(x)) for x in row])

    @classmethod
    def from_csv(cls, path, seed=None):
        with Path(path).open(newline="") as fh:
            rows = list(csv.reader(fh))
        return cls(np.array([[float(x) for x in r] for r in rows[1:]]), seed=seed)


@dataclass(frozen=True)
class CvarParameters:
    alpha: float
    m: int

    @classmethod
    def from_alpha(cls, alpha, N, m=None):
        if not 0 < alpha < 1:
            raise ValueError(f"alpha must be in (0, 1), got {alpha}")
        if m is None:
            m = math.ceil(N * (1 - alpha) - 1e-12)
        if not 1 <= m <= N:
            raise ValueError(f"m must be in [1, {N}], got {m}")
        return cls(float(alpha), int(m))


def draw_scenarios(unc: UncertaintyModel, N: int, seed: Optional[int] = None) -> ScenarioSet:
    """N i.i.d. draws from the uncertainty box (uniform unless a sampler is set)."""
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    rng = np.random.default_rng(seed)
    if unc.sampler is not None:
        deltas = np.asarray(unc.sampler(rng, unc.lower, unc.upper, N), dtype=float)
    else:
        deltas = rng.uniform(unc.lower, unc.upper, size=(N, unc.v))
    return ScenarioSet(deltas, seed=seed)


class ScenarioBatch:
    """Stacked affine kappa^-1 decompositions for a scenario set.

    Built once per set; every proxy evaluation afterwards is one kernel call.
    """

    def __init__(self, plant: PlantModel, unc: UncertaintyModel, deltas, hor: Horizon):
        deltas = np.atleast_2d(np.asarray(deltas, dtype=float))
        affs = [affine_decomposition(plant, unc, d, hor) for d in deltas]
        self.G0 = np.ascontiguousarray(np.stack([a.G0 for a in affs]))
        self.M = np.ascontiguousarray(np.stack([a.M for a in affs]))
        self.D = np.ascontiguousarray(affs[0].D)
        self.f = n_top(plant, hor)
        self.n_x = plant.n_x
        self.N_h = hor.N_h

    def __len__(self):
        return self.G0.shape[0]

    def evaluate(self, K, eta, with_grad=True):
        return proxy_oracle((self.G0, self.M, self.D), K, self.f, eta, with_grad)


def proxy_values(plant: PlantModel, unc: UncertaintyModel, scenarios: ScenarioSet, K, hor: Horizon,
                 eta: float) -> np.ndarray:
    batch = ScenarioBatch(plant, unc, scenarios.deltas, hor)
    K = np.asarray(K, dtype=float).reshape(plant.n_x, plant.n_x)
    vals, _ = batch.evaluate(K, eta, with_grad=False)
    return vals


def topm_indices(values, m: int) -> np.ndarray:
    """Indices of the m largest values; equal values rank by lower index first."""
    values = np.asarray(values, dtype=float)
    if not 1 <= m <= values.size:
        raise ValueError(f"m must be in [1, {values.size}], got {m}")
    return np.argsort(-values, kind="stable")[:m]


def topm_average(values, m: int) -> float:
    values = np.asarray(values, dtype=float)
    return math.fsum(values[topm_indices(values, m)]) / m


def order_statistic(values, k: int) -> float:
    """k-th largest value (1-based)."""
    values = np.asarray(values, dtype=float)
    if not 1 <= k <= values.size:
        raise ValueError(f"k must be in [1, {values.size}], got {k}")
    return float(values[topm_indices(values, k)[-1]])


def empirical_var_cvar(values, alpha: float):
    """Empirical VaR and CVaR under the tail-probability convention.

    VaR is the smallest sample value x with empirical ``P[X >= x] <= alpha``;
    CVaR averages the samples strictly above it (the maximum when none are).
    """
    x = np.sort(np.asarray(values, dtype=float))
    if x.size == 0:
        raise ValueError("need at least one value")
    n = x.size
    # P[X >= x_i] for sorted x: count of entries >= x_i
    tail = (n - np.searchsorted(x, x, side="left")) / n
    ok = np.nonzero(tail <= alpha + 1e-15)[0]
    var = float(x[ok[0]]) if ok.size else float(x[-1])
    above = x[x > var]
    cvar = float(above.mean()) if above.size else float(x[-1])
    return var, cvar
