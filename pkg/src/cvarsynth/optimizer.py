"""Empirical-CVaR controller synthesis.

The objective is ``f(K) = (1/m) * (sum of the m largest q_i(K))`` with
``q_i`` the impact proxy of scenario i. ``f`` is ``2 eta``-strongly convex
and nonsmooth; it is minimised with first-order oracles only (values and
subgradients), either by a strongly convex cutting-plane method (default,
with a certified optimality gap) or by plain subgradient descent.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from ._master_qp import solve_master
from .impact import impact_exact
from .model import Horizon, PlantModel, UncertaintyModel
from .scenario import (ScenarioBatch, ScenarioSet, draw_scenarios, empirical_var_cvar, order_statistic,
                       topm_average, topm_indices)

log = logging.getLogger(__name__)

METHODS = ("bundle", "subgradient")
STEP_RULES = ("strongly-convex", "diminishing")


@dataclass
class SolverConfig:
    method: str = "bundle"
    max_iters: int = 5000
    tol_rel: float = 1e-8
    tol_gap: float = 1e-10
    window: int = 50
    step_rule: str = "strongly-convex"
    step_scale: float = 1.0
    init_K: Optional[list] = None
    restarts: int = 3
    restart_scale: float = 1.0
    seed: int = 0
    max_cuts: int = 400

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.step_rule not in STEP_RULES:
            raise ValueError(f"step_rule must be one of {STEP_RULES}, got {self.step_rule!r}")
        if not (self.tol_rel > 0 and self.tol_gap > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iters < 1 or self.restarts < 1:
            raise ValueError("max_iters and restarts must be >= 1")


@dataclass
class SynthesisResult:
    K_star: np.ndarray
    objective: float
    per_scenario_proxy: np.ndarray
    m: int
    d: int
    eta: float
    iterations: int
    converged: bool
    gap: float
    history: np.ndarray
    restart_solutions: list = field(default_factory=list)
    restart_objectives: list = field(default_factory=list)
    config: Optional[SolverConfig] = None

    @property
    def N(self) -> int:
        return len(self.per_scenario_proxy)

    @property
    def regularization(self) -> float:
        return self.eta * float(np.sum(self.K_star ** 2))

    @property
    def shortfall_threshold(self) -> Optional[float]:
        k = self.m + self.d
        return order_statistic(self.per_scenario_proxy, k) if k <= self.N else None

    @property
    def restart_spread(self) -> float:
        sols = self.restart_solutions
        return max((float(np.linalg.norm(a - b)) for a, b in itertools.combinations(sols, 2)), default=0.0)

    def to_dict(self) -> dict:
        return {
            "K_star": self.K_star.tolist(),
            "objective": self.objective,
            "objective_unregularized": self.objective - self.regularization,
            "regularization": self.regularization,
            "per_scenario_proxy": self.per_scenario_proxy.tolist(),
            "shortfall_threshold": self.shortfall_threshold,
            "m": self.m,
            "d": self.d,
            "eta": self.eta,
            "iterations": self.iterations,
            "converged": self.converged,
            "gap": self.gap,
            "restart_spread": self.restart_spread,
            "restart_objectives": list(self.restart_objectives),
            "config": asdict(self.config) if self.config else None,
        }


class _Objective:
    """Top-m average of scenario proxies; the eta term is kept separate."""

    def __init__(self, batch: ScenarioBatch, m: int, eta: float):
        if not 1 <= m <= len(batch):
            raise ValueError(f"m must be in [1, {len(batch)}], got {m}")
        self.batch, self.m, self.eta = batch, m, eta
        self.n = batch.n_x

    def nonsmooth(self, K):
        """``h(K)`` (objective minus eta|K|^2) and a subgradient of it."""
        vals, grads = self.batch.evaluate(K, 0.0, with_grad=True)
        idx = np.sort(topm_indices(vals, self.m))
        h = topm_average(vals, self.m)
        g = grads[idx].sum(axis=0) / self.m
        return h, g, vals

    def __call__(self, K):
        h, g, vals = self.nonsmooth(K)
        reg = self.eta * float(np.sum(K * K))
        return h + reg, g + 2.0 * self.eta * K, vals + reg


def _bundle(obj: _Objective, K0, cfg: SolverConfig):
    eta, n = obj.eta, obj.n
    K = K0.copy()
    cuts_g, cuts_c = [], []
    lam = None
    best, K_best, gap = math.inf, K.copy(), math.inf
    history = []
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        h, g, _ = obj.nonsmooth(K)
        fK = h + eta * float(np.sum(K * K))
        if fK < best:
            best, K_best = fK, K.copy()
        history.append(best)
        gv = g.ravel()
        cuts_g.append(gv)
        cuts_c.append(h - float(gv @ K.ravel()))
        if lam is not None:
            lam = np.append(lam, 0.0)
        if len(cuts_c) > cfg.max_cuts:
            drop = next((i for i in range(len(cuts_c) - 1) if lam is None or lam[i] == 0.0), 0)
            del cuts_g[drop], cuts_c[drop]
            lam = None if lam is None else np.delete(lam, drop)
        x, lam, model = solve_master(np.array(cuts_g), np.array(cuts_c), eta, lam0=lam)
        gap = best - model
        if gap <= cfg.tol_gap * (1.0 + abs(best)):
            converged = True
            break
        K = x.reshape(n, n)
    return K_best, best, it, converged, max(gap, 0.0), history


def _subgradient(obj: _Objective, K0, cfg: SolverConfig):
    K = K0.copy()
    best, K_best = math.inf, K.copy()
    history = []
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        fK, g, _ = obj(K)
        if fK < best:
            best, K_best = fK, K.copy()
        history.append(best)
        w = cfg.window
        if it > w and history[-w - 1] - best <= cfg.tol_rel * max(1.0, abs(best)):
            converged = True
            break
        if cfg.step_rule == "strongly-convex":
            step = cfg.step_scale / (obj.eta * (it + 1))
        else:
            step = cfg.step_scale / math.sqrt(it)
        K = K - step * g
    return K_best, best, it, converged, math.nan, history


def minimize_cvar(plant: PlantModel, unc: UncertaintyModel, scenarios: ScenarioSet, hor: Horizon,
                  eta: float, m: int, cfg: Optional[SolverConfig] = None) -> SynthesisResult:
    """Controller minimising the top-m average of scenario impact proxies.

    Runs ``cfg.restarts`` independent solves (the first from ``cfg.init_K``,
    default zero; the rest from seeded Gaussian starts) and keeps the best.
    """
    cfg = cfg or SolverConfig()
    if not eta > 0:
        raise ValueError("eta must be positive (strong convexity gives a unique minimiser)")
    n = plant.n_x
    batch = ScenarioBatch(plant, unc, scenarios.deltas, hor)
    obj = _Objective(batch, m, eta)
    rng = np.random.default_rng(cfg.seed)
    K_init = np.zeros((n, n)) if cfg.init_K is None else np.asarray(cfg.init_K, float).reshape(n, n)
    solve = _bundle if cfg.method == "bundle" else _subgradient

    sols, objs, trace = [], [], []
    best = None
    total_iters = 0
    for r in range(cfg.restarts):
        K0 = K_init if r == 0 else rng.normal(scale=cfg.restart_scale, size=(n, n))
        K, fK, iters, conv, gap, hist = solve(obj, K0, cfg)
        total_iters += iters
        sols.append(K)
        objs.append(fK)
        trace.extend(hist)
        log.debug("restart %d: f=%.12g iters=%d converged=%s gap=%.3g", r, fK, iters, conv, gap)
        if best is None or fK < best[1]:
            best = (K, fK, conv, gap)

    K_star, _, conv, gap = best
    _, _, vals = obj(K_star)
    return SynthesisResult(
        K_star=K_star, objective=topm_average(vals, m), per_scenario_proxy=vals, m=m, d=n * n,
        eta=float(eta), iterations=total_iters, converged=bool(conv), gap=float(gap),
        history=np.minimum.accumulate(np.asarray(trace)), restart_solutions=sols, restart_objectives=objs, config=cfg)


def nominal_controller(plant: PlantModel, unc: UncertaintyModel, hor: Horizon, eta: float,
                       cfg: Optional[SolverConfig] = None) -> SynthesisResult:
    """Minimiser of the proxy on the nominal system (``delta = 0``) alone."""
    return minimize_cvar(plant, unc, ScenarioSet(np.zeros((1, unc.v))), hor, eta, 1, cfg)


SUBSET_GUARD = 10 ** 6


def subset_form_objective(plant: PlantModel, unc: UncertaintyModel, scenarios: ScenarioSet, hor: Horizon,
                          eta: float, m: int, K) -> float:
    """Smallest y with every m-subset average of proxies <= y (explicit enumeration)."""
    batch = ScenarioBatch(plant, unc, scenarios.deltas, hor)
    vals, _ = batch.evaluate(np.asarray(K, float).reshape(plant.n_x, plant.n_x), eta, with_grad=False)
    return max_subset_average(vals, m)


def max_subset_average(values, m: int) -> float:
    values = np.asarray(values, dtype=float)
    N = values.size
    if not 1 <= m <= N:
        raise ValueError(f"m must be in [1, {N}], got {m}")
    if math.comb(N, m) > SUBSET_GUARD:
        raise ValueError(f"C({N},{m}) = {math.comb(N, m)} subsets exceeds the enumeration guard")
    return max(math.fsum(values[list(s)]) / m for s in itertools.combinations(range(N), m))


@dataclass
class RiskEvaluation:
    var: float
    cvar: float
    values: np.ndarray
    exact_values: Optional[np.ndarray]
    deltas: np.ndarray


def evaluate_risk(plant: PlantModel, K, unc: UncertaintyModel, hor: Horizon, eta: float, alpha: float,
                  n_eval: int, seed: Optional[int] = None, exact: bool = True) -> RiskEvaluation:
    """Empirical VaR/CVaR of the proxy for ``K`` on fresh uncertainty draws."""
    scen = draw_scenarios(unc, n_eval, seed)
    K = np.asarray(K, float).reshape(plant.n_x, plant.n_x)
    vals, _ = ScenarioBatch(plant, unc, scen.deltas, hor).evaluate(K, eta, with_grad=False)
    ex = None
    if exact:
        ex = np.array([impact_exact(plant, unc, d, K, hor, eta).q_exact for d in scen.deltas])
    var, cvar = empirical_var_cvar(vals, alpha)
    return RiskEvaluation(var=var, cvar=cvar, values=vals, exact_values=ex, deltas=scen.deltas)
