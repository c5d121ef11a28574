"""Plant, detector, controller, uncertainty and horizon types.

All matrices are stored as read-only float arrays so instances can be
shared freely between threads.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

DEFAULT_COND_CAP = 1e12


class ModelError(ValueError):
    """Raised when a plant/uncertainty/horizon combination is unusable."""


def _frozen(a, ndim=2) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.ndim == 0 and ndim == 2:
        arr = arr.reshape(1, 1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PlantModel:
    """Square plant ``(A, B, C, C_J)`` with observer gain ``L``.

    ``A`` is the nominal dynamics; the true matrix is ``A + dA(delta)``.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    C_J: np.ndarray
    L: np.ndarray

    def __post_init__(self):
        for name in ("A", "B", "C", "C_J", "L"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def n_x(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class UncertaintyModel:
    """Box-bounded affine uncertainty ``dA(delta) = sum_k delta_k E_k``.

    ``sampler`` optionally replaces the uniform law; it is called as
    ``sampler(rng, lower, upper, n)`` and must return an ``(n, v)`` array
    inside the box.
    """

    basis: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    distribution: str = "uniform"
    sampler: Optional[Callable] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        basis = np.array(self.basis, dtype=float)
        if basis.ndim == 2:
            basis = basis[None]
        basis.setflags(write=False)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "lower", _frozen(np.atleast_1d(self.lower), 1))
        object.__setattr__(self, "upper", _frozen(np.atleast_1d(self.upper), 1))

    @property
    def v(self) -> int:
        return self.basis.shape[0]

    def delta_A(self, delta) -> np.ndarray:
        delta = np.asarray(delta, dtype=float)
        return np.tensordot(delta, self.basis, axes=1)

    def contains(self, delta, atol=1e-12) -> bool:
        delta = np.asarray(delta, dtype=float)
        return bool(np.all(delta >= self.lower - atol) and np.all(delta <= self.upper + atol))


@dataclass(frozen=True)
class Controller:
    """Static output feedback ``u = K y``."""

    K: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "K", _frozen(self.K))


@dataclass(frozen=True)
class Horizon:
    """Attack horizon length and the detector's energy threshold."""

    N_h: int
    eps_r: float = 1.0

    def __post_init__(self):
        if int(self.N_h) != self.N_h or self.N_h < 1:
            raise ModelError(f"N_h must be a positive integer, got {self.N_h}")
        if not self.eps_r > 0:
            raise ModelError(f"eps_r must be positive, got {self.eps_r}")
        object.__setattr__(self, "N_h", int(self.N_h))
        object.__setattr__(self, "eps_r", float(self.eps_r))


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list[Check] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def add(self, name, passed, detail=""):
        self.checks.append(Check(name, bool(passed), detail))

    def raise_for_failure(self):
        if not self.ok:
            msg = "; ".join(f"{c.name}: {c.detail}" for c in self.failures)
            raise ModelError(msg)

    def __str__(self):
        return "\n".join(f"[{'ok' if c.passed else 'FAIL'}] {c.name}"
                         + (f" ({c.detail})" if c.detail else "") for c in self.checks)


def validate_model(plant: PlantModel, unc: UncertaintyModel, hor: Optional[Horizon] = None,
                   cond_cap: float = DEFAULT_COND_CAP) -> ValidationReport:
    """Check the standing assumptions that can be checked numerically.

    Dimension problems short-circuit the remaining checks, since nothing
    downstream is well defined without square, matching matrices.
    """
    rep = ValidationReport()
    n = plant.A.shape[0] if plant.A.ndim == 2 else -1
    shapes_ok = True
    for name in ("A", "B", "C", "C_J", "L"):
        shape = getattr(plant, name).shape
        good = shape == (n, n) and n >= 1
        shapes_ok &= good
        rep.add(f"{name} is {n}x{n}", good, "" if good else f"got shape {shape}")
    basis_ok = unc.basis.ndim == 3 and unc.basis.shape[1:] == (n, n)
    rep.add("uncertainty basis matrices are n_x x n_x", basis_ok,
            "" if basis_ok else f"got basis shape {unc.basis.shape}")
    box_ok = unc.lower.shape == unc.upper.shape == (unc.basis.shape[0],)
    rep.add("box bounds match basis count", box_ok,
            "" if box_ok else f"lower {unc.lower.shape}, upper {unc.upper.shape}, v={unc.basis.shape[0]}")
    if not (shapes_ok and basis_ok and box_ok):
        return rep

    for name in ("B", "C", "C_J"):
        mat = getattr(plant, name)
        cond = np.linalg.cond(mat) if np.all(np.isfinite(mat)) else np.inf
        good = np.isfinite(cond) and cond <= cond_cap
        rep.add(f"{name} invertible", good, f"condition number {cond:.3g}")
    rep.add("(A + dA, B) controllable for all delta", rep.checks[-3].passed,
            "implied by invertible B")
    rep.add("lower <= upper", np.all(unc.lower <= unc.upper))
    zero_in = bool(np.all(unc.lower <= 0) and np.all(unc.upper >= 0))
    rep.add("zero uncertainty in box", zero_in,
            "" if zero_in else "zero uncertainty not in box: need lower <= 0 <= upper")
    rep.add("distribution supported", unc.distribution == "uniform" or unc.sampler is not None,
            unc.distribution)
    if hor is not None:
        rep.add("N_h >= 1", hor.N_h >= 1)
        rep.add("eps_r > 0", hor.eps_r > 0)
    return rep


def sample_A(plant: PlantModel, unc: UncertaintyModel, delta: Sequence[float]) -> np.ndarray:
    """Return ``A + dA(delta)``; ``delta`` must lie in the box."""
    delta = np.atleast_1d(np.asarray(delta, dtype=float))
    if delta.shape != (unc.v,):
        raise ModelError(f"delta must have length {unc.v}, got shape {delta.shape}")
    if not unc.contains(delta):
        raise ModelError(f"delta {delta.tolist()} outside box [{unc.lower.tolist()}, {unc.upper.tolist()}]")
    return plant.A + unc.delta_A(delta)


NOMINAL_POINTS = {"lower": (0.5, -0.5), "midpoint": (1.0, 0.0)}


def example_system(nominal: str = "lower"):
    """Three-state benchmark plant with two uncertain diagonal entries.

    The entries a in [0.5, 1.5] (A[1, 1]) and b in [-0.5, 0.5] (A[2, 2]) are
    written as deviations from a nominal point so that ``delta = 0`` is the
    nominal plant: ``nominal="lower"`` puts it at the interval lower ends
    (``delta`` in [0, 1]^2), ``nominal="midpoint"`` at the centres
    (``delta`` in [-0.5, 0.5]^2). Returns ``(plant, uncertainty, horizon)``
    with ``N_h = 5`` and ``eps_r = 1``.
    """
    try:
        a0, b0 = NOMINAL_POINTS[nominal]
    except KeyError:
        raise ValueError(f"nominal must be one of {sorted(NOMINAL_POINTS)}, got {nominal!r}") from None
    A = [[2.0, 0.0, 1.0], [1.0, a0, 0.0], [0.0, 1.0, b0]]
    B = [[1.0, 1.0, 0.0], [0.0, 0.3, 1.0], [0.0, 0.0, 1.0]]
    L = [[1.95, 0.0, 1.0], [1.0, 0.36, 1.0], [0.0, 1.0, -0.87]]
    E = np.zeros((2, 3, 3))
    E[0, 1, 1] = 1.0
    E[1, 2, 2] = 1.0
    plant = PlantModel(A=A, B=B, C=np.eye(3), C_J=np.eye(3), L=L)
    unc = UncertaintyModel(basis=E, lower=[0.5 - a0, -0.5 - b0], upper=[1.5 - a0, 0.5 - b0])
    return plant, unc, Horizon(N_h=5, eps_r=1.0)
