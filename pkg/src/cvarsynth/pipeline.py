"""End-to-end risk-averse design runs and their reports."""
from __future__ import annotations

import csv
import json
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import _kernels
from .certificate import confidence, confidence_curve, distinct_values
from .config import ExperimentConfig
from .impact import impact_exact
from .optimizer import SynthesisResult, minimize_cvar, nominal_controller
from .scenario import ScenarioBatch, ScenarioSet, draw_scenarios

BOX_FIELDS = ["controller", "metric", "n", "whisker_low", "q25", "median", "q75", "whisker_high", "mean"]


def box_stats(values) -> dict:
    """Median, quartiles and whiskers at the extreme samples."""
    v = np.asarray(values, dtype=float)
    q25, med, q75 = np.percentile(v, [25, 50, 75])
    return {"n": int(v.size), "whisker_low": float(v.min()), "q25": float(q25), "median": float(med),
            "q75": float(q75), "whisker_high": float(v.max()), "mean": float(v.mean())}


@dataclass
class ControllerSamples:
    label: str
    K: np.ndarray
    proxy: np.ndarray
    exact: np.ndarray


@dataclass
class Evaluation:
    deltas: np.ndarray
    samples: list
    seed: Optional[int] = None

    def rows(self) -> list[dict]:
        out = []
        for s in self.samples:
            for metric, vals in (("q", s.exact), ("q_proxy", s.proxy)):
                out.append({"controller": s.label, "metric": metric, **box_stats(vals)})
        return out

    def median(self, label, metric) -> float:
        for r in self.rows():
            if r["controller"] == label and r["metric"] == metric:
                return r["median"]
        raise KeyError((label, metric))


def evaluate_controllers(cfg: ExperimentConfig, controllers: dict, n_eval: int, seed: Optional[int]) -> Evaluation:
    """Exact impact and proxy for each controller on the same fresh draws."""
    scen = draw_scenarios(cfg.uncertainty, n_eval, seed)
    batch = ScenarioBatch(cfg.plant, cfg.uncertainty, scen.deltas, cfg.horizon)
    samples = []
    for label, K in controllers.items():
        K = np.asarray(K, dtype=float).reshape(cfg.plant.n_x, cfg.plant.n_x)
        proxy, _ = batch.evaluate(K, cfg.eta, with_grad=False)
        exact = np.array([impact_exact(cfg.plant, cfg.uncertainty, d, K, cfg.horizon, cfg.eta).q_exact
                          for d in scen.deltas])
        samples.append(ControllerSamples(label, K, proxy, exact))
    return Evaluation(scen.deltas, samples, seed)


@dataclass
class RunReport:
    config: ExperimentConfig
    scenarios: ScenarioSet
    synthesis: SynthesisResult
    certificate: list = field(default_factory=list)
    evaluation: Optional[Evaluation] = None
    nominal: Optional[SynthesisResult] = None
    timing: dict = field(default_factory=dict)

    def payload(self) -> dict:
        """Everything numeric; reproducible from the config and seeds alone."""
        cfg, res = self.config, self.synthesis
        out = {
            "name": cfg.name,
            "config_sha256": cfg.digest(),
            "N": self.scenarios.N,
            "m": res.m,
            "d": res.d,
            "alpha": cfg.alpha,
            "eta": cfg.eta,
            "seeds": {"scenarios": cfg.seed, "solver": cfg.solver.seed, "evaluation": cfg.eval_seed},
            "scenarios": self.scenarios.deltas.tolist(),
            "synthesis": res.to_dict(),
            "proxy_values_distinct": distinct_values(res.per_scenario_proxy),
            "certificate": [{"epsilon": e, "confidence": c} for e, c in self.certificate],
        }
        if self.nominal is not None:
            out["nominal_controller"] = {"K": self.nominal.K_star.tolist(), "objective": self.nominal.objective}
        if self.evaluation is not None:
            out["evaluation"] = {"n_eval": len(self.evaluation.deltas), "seed": self.evaluation.seed,
                                 "box_stats": self.evaluation.rows()}
        return out

    def to_dict(self) -> dict:
        return {**self.payload(), "provenance": {
            "backend": _kernels.BACKEND, "python": platform.python_version(), "timing_s": self.timing}}

    def write(self, out_dir, formats=("json", "csv")) -> list[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        written = []
        if "json" in formats:
            p = out_dir / "report.json"
            p.write_text(json.dumps(self.to_dict(), indent=2))
            written.append(p)
        if "csv" in formats:
            p = out_dir / "scenarios.csv"
            self.scenarios.to_csv(p)
            written.append(p)
            p = out_dir / "proxy_values.csv"
            with p.open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["scenario"] + [f"delta_{k}" for k in range(self.scenarios.deltas.shape[1])] + ["proxy"])
                for i, (d, v) in enumerate(zip(self.scenarios.deltas, self.synthesis.per_scenario_proxy)):
                    w.writerow([i] + [repr(float(x)) for x in d] + [repr(float(v))])
            written.append(p)
            if self.certificate:
                p = out_dir / "confidence.csv"
                write_rows(p, ["epsilon", "confidence"],
                           [{"epsilon": e, "confidence": c} for e, c in self.certificate])
                written.append(p)
            if self.evaluation is not None:
                written += write_evaluation(out_dir, self.evaluation)
        return written


def write_rows(path, header, rows):
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=header, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def write_evaluation(out_dir, ev: Evaluation) -> list[Path]:
    out_dir = Path(out_dir)
    box = out_dir / "box_stats.csv"
    write_rows(box, BOX_FIELDS, ev.rows())
    raw = out_dir / "samples.csv"
    with raw.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample"] + [f"delta_{k}" for k in range(ev.deltas.shape[1])]
                   + [f"{s.label}_{m}" for s in ev.samples for m in ("q", "q_proxy")])
        for i, d in enumerate(ev.deltas):
            w.writerow([i] + [repr(float(x)) for x in d]
                       + [repr(float(v)) for s in ev.samples for v in (s.exact[i], s.proxy[i])])
    return [box, raw]


def run_synthesis(cfg: ExperimentConfig, m: Optional[int] = None, evaluate: bool = True) -> RunReport:
    """Sample, synthesise, certify and (optionally) evaluate against the nominal design."""
    timing = {}
    t0 = time.perf_counter()
    if cfg.scenario_file:
        scen = ScenarioSet.from_csv(cfg.scenario_file, seed=None)
    else:
        scen = draw_scenarios(cfg.uncertainty, cfg.N, cfg.seed)
    m = m or cfg.m_effective
    t1 = time.perf_counter()
    res = minimize_cvar(cfg.plant, cfg.uncertainty, scen, cfg.horizon, cfg.eta, m, cfg.solver)
    timing["synthesis"] = time.perf_counter() - t1
    cert = []
    if cfg.certify and scen.N >= m + res.d:
        cert = [(float(e), confidence(scen.N, m, res.d, float(e))) for e in cfg.epsilon]
    nominal = ev = None
    if evaluate and cfg.n_eval:
        t1 = time.perf_counter()
        controllers = {"optimal": res.K_star}
        if cfg.evaluate_nominal:
            nominal = nominal_controller(cfg.plant, cfg.uncertainty, cfg.horizon, cfg.eta, cfg.solver)
            controllers["nominal"] = nominal.K_star
        ev = evaluate_controllers(cfg, controllers, cfg.n_eval, cfg.eval_seed)
        timing["evaluation"] = time.perf_counter() - t1
    timing["total"] = time.perf_counter() - t0
    return RunReport(cfg, scen, res, cert, ev, nominal, timing)


__all__ = ["RunReport", "Evaluation", "box_stats", "evaluate_controllers", "run_synthesis", "confidence_curve"]
