"""JSON experiment configuration: schema, loading, and line-anchored errors."""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from .model import Horizon, ModelError, PlantModel, UncertaintyModel, validate_model
from .optimizer import SolverConfig

_matrix = {"type": "array", "minItems": 1, "items": {"type": "array", "minItems": 1, "items": {"type": "number"}}}
_vector = {"type": "array", "minItems": 1, "items": {"type": "number"}}

SCHEMA = {
    "type": "object",
    "required": ["plant", "uncertainty", "horizon"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "plant": {
            "type": "object",
            "required": ["A", "B", "C", "C_J", "L"],
            "additionalProperties": False,
            "properties": {k: _matrix for k in ("A", "B", "C", "C_J", "L")},
        },
        "uncertainty": {
            "type": "object",
            "required": ["basis", "lower", "upper"],
            "additionalProperties": False,
            "properties": {
                "basis": {"type": "array", "minItems": 1, "items": _matrix},
                "lower": _vector,
                "upper": _vector,
                "distribution": {"enum": ["uniform"]},
            },
        },
        "horizon": {
            "type": "object",
            "required": ["N_h"],
            "additionalProperties": False,
            "properties": {
                "N_h": {"type": "integer", "minimum": 1},
                "eps_r": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "risk": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "m": {"type": "integer", "minimum": 1},
                "eta": {"type": "number", "exclusiveMinimum": 0},
                "certify": {"type": "boolean"},
                "epsilon": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0,
                                                        "exclusiveMaximum": 1}},
            },
        },
        "scenarios": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "N": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "file": {"type": "string"},
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "method": {"enum": ["bundle", "subgradient"]},
                "max_iters": {"type": "integer", "minimum": 1},
                "tol_rel": {"type": "number", "exclusiveMinimum": 0},
                "tol_gap": {"type": "number", "exclusiveMinimum": 0},
                "window": {"type": "integer", "minimum": 1},
                "step_rule": {"enum": ["strongly-convex", "diminishing"]},
                "step_scale": {"type": "number", "exclusiveMinimum": 0},
                "init_K": _matrix,
                "restarts": {"type": "integer", "minimum": 1},
                "restart_scale": {"type": "number", "minimum": 0},
                "seed": {"type": "integer", "minimum": 0},
                "max_cuts": {"type": "integer", "minimum": 2},
            },
        },
        "evaluation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_eval": {"type": "integer", "minimum": 1},
                "eval_seed": {"type": "integer", "minimum": 0},
                "nominal": {"type": "boolean"},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "directory": {"type": "string"},
                "formats": {"type": "array", "items": {"enum": ["json", "csv"]}},
            },
        },
    },
}

DEFAULT_EPSILON = [round(0.05 * k, 2) for k in range(1, 20)]


class ConfigError(ValueError):
    def __init__(self, message, line=None, source=None):
        self.line = line
        self.source = source
        where = f"{source or '<config>'}:{line}: " if line else (f"{source}: " if source else "")
        super().__init__(where + message)


def _locate(text: str, path) -> Optional[int]:
    """Best-effort line number of the deepest key along ``path`` in raw JSON text."""
    if text is None:
        return None
    pos, line = 0, None
    for key in path:
        if not isinstance(key, str):
            continue
        m = re.compile(r'"%s"\s*:' % re.escape(key)).search(text, pos)
        if m is None:
            break
        pos = m.end()
        line = text.count("\n", 0, m.start()) + 1
    return line


@dataclass
class ExperimentConfig:
    plant: PlantModel
    uncertainty: UncertaintyModel
    horizon: Horizon
    alpha: float = 0.8
    m: Optional[int] = None
    eta: float = 0.1
    certify: bool = True
    epsilon: list = field(default_factory=lambda: list(DEFAULT_EPSILON))
    N: int = 11
    seed: int = 0
    scenario_file: Optional[str] = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    n_eval: int = 100
    eval_seed: int = 1
    evaluate_nominal: bool = True
    out_dir: Optional[str] = None
    formats: list = field(default_factory=lambda: ["json", "csv"])
    name: str = "experiment"
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def d(self) -> int:
        return self.plant.n_x ** 2

    @property
    def m_effective(self) -> int:
        if self.m is not None:
            return self.m
        import math
        return max(1, math.ceil(self.N * (1 - self.alpha) - 1e-12))

    def digest(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


def parse_config(data: dict, text: Optional[str] = None, source: Optional[str] = None,
                 base_dir: Optional[Path] = None) -> ExperimentConfig:
    validator = jsonschema.Draft7Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = list(err.absolute_path)
        label = "/".join(str(p) for p in path) or "<root>"
        raise ConfigError(f"{label}: {err.message}", _locate(text, path), source)

    p, u, h = data["plant"], data["uncertainty"], data["horizon"]
    risk, sc = data.get("risk", {}), data.get("scenarios", {})
    ev, out = data.get("evaluation", {}), data.get("output", {})
    try:
        plant = PlantModel(**{k: np.array(p[k], dtype=float) for k in ("A", "B", "C", "C_J", "L")})
        unc = UncertaintyModel(basis=np.array(u["basis"], dtype=float), lower=u["lower"], upper=u["upper"],
                               distribution=u.get("distribution", "uniform"))
        hor = Horizon(N_h=h["N_h"], eps_r=h.get("eps_r", 1.0))
    except (ValueError, ModelError) as exc:  # ragged nested lists and the like
        raise ConfigError(str(exc), _locate(text, ["plant"]), source) from None

    rep = validate_model(plant, unc, hor)
    if not rep.ok:
        bad = rep.failures[0]
        key = bad.name.split()[0]
        anchor = ["plant", key] if key in ("A", "B", "C", "C_J", "L") else ["uncertainty"]
        raise ConfigError("; ".join(f"{c.name}: {c.detail}" for c in rep.failures), _locate(text, anchor), source)

    solver_kw = {f.name: data.get("solver", {})[f.name] for f in fields(SolverConfig)
                 if f.name in data.get("solver", {})}
    scen_file = sc.get("file")
    if scen_file and base_dir is not None and not Path(scen_file).is_absolute():
        scen_file = str(base_dir / scen_file)
    cfg = ExperimentConfig(
        plant=plant, uncertainty=unc, horizon=hor,
        alpha=risk.get("alpha", 0.8), m=risk.get("m"), eta=risk.get("eta", 0.1),
        certify=risk.get("certify", True), epsilon=list(risk.get("epsilon", DEFAULT_EPSILON)),
        N=sc.get("N", 11), seed=sc.get("seed", 0), scenario_file=scen_file,
        solver=SolverConfig(**solver_kw),
        n_eval=ev.get("n_eval", 100), eval_seed=ev.get("eval_seed", 1), evaluate_nominal=ev.get("nominal", True),
        out_dir=out.get("directory"), formats=list(out.get("formats", ["json", "csv"])),
        name=data.get("name", "experiment"), raw=data,
    )
    if cfg.m_effective > cfg.N:
        raise ConfigError(f"m = {cfg.m_effective} exceeds N = {cfg.N}", _locate(text, ["risk", "m"]), source)
    if cfg.certify and cfg.N < cfg.m_effective + cfg.d:
        raise ConfigError(f"certification needs N >= m + d = {cfg.m_effective} + {cfg.d}, got N = {cfg.N}",
                          _locate(text, ["scenarios", "N"]) or _locate(text, ["risk"]), source)
    return cfg


def apply_overrides(data: dict, seed=None, m=None, eta=None, out=None) -> dict:
    """Copy of ``data`` with command-line overrides folded in (so they enter the digest)."""
    data = json.loads(json.dumps(data))
    if seed is not None:
        data.setdefault("scenarios", {})["seed"] = int(seed)
    if m is not None:
        data.setdefault("risk", {})["m"] = int(m)
    if eta is not None:
        data.setdefault("risk", {})["eta"] = float(eta)
    if out is not None:
        data.setdefault("output", {})["directory"] = str(out)
    return data


def load_config(path, **overrides) -> ExperimentConfig:
    """Read, override, schema-check and validate a JSON config file.

    Keyword overrides are those of :func:`apply_overrides`.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", source=str(path)) from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} (column {exc.colno})", exc.lineno, str(path)) from None
    if isinstance(data, dict) and any(v is not None for v in overrides.values()):
        data = apply_overrides(data, **overrides)
    return parse_config(data, text, str(path), base_dir=path.parent)


def example_config_path() -> Path:
    return Path(str(resources.files("cvarsynth") / "data" / "example.json"))


def example_config_dict(nominal: str = "lower") -> dict:
    data = json.loads(example_config_path().read_text())
    if nominal != "lower":
        from .model import example_system
        plant, unc, _ = example_system(nominal)
        data["plant"]["A"] = plant.A.tolist()
        data["uncertainty"]["lower"] = unc.lower.tolist()
        data["uncertainty"]["upper"] = unc.upper.tolist()
        data["name"] = f"{data.get('name', 'example')} ({nominal} nominal)"
    return data
