"""Out-of-sample certificates for the synthesised controller.

The probability of shortfall ``PS(K*)`` is the chance that a fresh
uncertainty's proxy meets or exceeds the ``(m+d)``-th largest training
value. Its sampling distribution is ``Beta(m+d, N+1-m-d)``, so the
confidence that ``PS <= eps`` is the regularised incomplete beta function
``I_eps(m+d, N+1-m-d)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .model import Horizon, PlantModel, UncertaintyModel
from .scenario import ScenarioBatch, draw_scenarios, order_statistic

_TINY = 1e-300
_EPS = 1e-16
_MAX_TERMS = 10_000


class CertificateError(ValueError):
    pass


def _betacf(a, b, x):
    """Continued fraction for I_x(a, b), modified Lentz evaluation."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > _TINY else _TINY)
    h = d
    for m in range(1, _MAX_TERMS + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float) -> float:
    """Regularised incomplete beta function ``I_x(a, b)``."""
    if not (a > 0 and b > 0):
        raise ValueError(f"betainc needs a, b > 0, got a={a}, b={b}")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"betainc needs 0 <= x <= 1, got {x}")
    if x == 0.0 or x == 1.0:
        return float(x)
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    # the fraction converges fast for x below the mean-ish split point
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _betacf(b, a, 1.0 - x) / b


def beta_pdf(p: float, a: float, b: float) -> float:
    if p <= 0.0 or p >= 1.0:
        if (p == 0.0 and a == 1.0) or (p == 1.0 and b == 1.0):
            return math.exp(math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b))
        return 0.0
    return math.exp(math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                    + (a - 1.0) * math.log(p) + (b - 1.0) * math.log1p(-p))


def _beta_params(N, m, d):
    a, b = m + d, N + 1 - m - d
    if m < 1 or d < 0:
        raise CertificateError(f"need m >= 1 and d >= 0, got m={m}, d={d}")
    if b < 1:
        raise CertificateError(f"need N >= m + d, got N={N}, m={m}, d={d}")
    return a, b


@dataclass(frozen=True)
class Certificate:
    a: int
    b: int
    epsilon: float
    confidence: float


def confidence(N: int, m: int, d: int, epsilon: float) -> float:
    """``P^N{PS(K*) <= epsilon}``."""
    a, b = _beta_params(N, m, d)
    if not 0.0 < epsilon < 1.0:
        raise CertificateError(f"epsilon must be in (0, 1), got {epsilon}")
    return betainc(a, b, epsilon)


def certify(N: int, m: int, d: int, epsilon: float) -> Certificate:
    a, b = _beta_params(N, m, d)
    return Certificate(a=a, b=b, epsilon=float(epsilon), confidence=confidence(N, m, d, epsilon))


def confidence_curve(N: int, m: int, d: int, eps_grid=None):
    if eps_grid is None:
        eps_grid = np.linspace(0.01, 0.99, 99)
    return [(float(e), confidence(N, m, d, float(e))) for e in eps_grid]


def write_confidence_csv(path, curve):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epsilon", "confidence"])
        for e, c in curve:
            w.writerow([repr(e), repr(c)])


def shortfall_threshold(per_scenario_proxy, m: int, d: int) -> float:
    """The (m+d)-th largest training proxy value at the optimum."""
    vals = np.asarray(getattr(per_scenario_proxy, "per_scenario_proxy", per_scenario_proxy), dtype=float)
    if vals.size < m + d:
        raise CertificateError(f"need N >= m + d, got N={vals.size}, m + d={m + d}")
    return order_statistic(vals, m + d)


def empirical_ps(plant: PlantModel, K, threshold: float, unc: UncertaintyModel, hor: Horizon, eta: float,
                 n_mc: int, seed: Optional[int] = None) -> float:
    """Monte-Carlo estimate of ``P{proxy(K, delta) >= threshold}`` on fresh draws."""
    if n_mc < 1:
        raise ValueError("n_mc must be >= 1")
    scen = draw_scenarios(unc, n_mc, seed)
    K = np.asarray(K, float).reshape(plant.n_x, plant.n_x)
    vals, _ = ScenarioBatch(plant, unc, scen.deltas, hor).evaluate(K, eta, with_grad=False)
    return float(np.mean(vals >= threshold))


def distinct_values(values, atol: float = 1e-12) -> bool:
    """True when no two proxy values coincide (the no-tie condition of the guarantee)."""
    v = np.sort(np.asarray(values, dtype=float))
    return bool(np.all(np.diff(v) > atol))
