"""Command-line interface: ``cvarsynth {synth,impact,evaluate,demo,certify}``.

Exit codes: 0 success, 2 configuration or validation error, 3 numerical
failure. Solver non-convergence is not an error; it is flagged in the
report and on stderr.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import _kernels
from .certificate import CertificateError, confidence_curve, certify, write_confidence_csv
from .config import ConfigError, ExperimentConfig, example_config_dict, load_config, parse_config
from .impact import UnboundedImpactError, impact_exact
from .model import NOMINAL_POINTS, ModelError
from .optimizer import nominal_controller
from .pipeline import BOX_FIELDS, evaluate_controllers, run_synthesis, write_evaluation, write_rows

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
DEMO_EPSILON = 0.9
DEFAULT_OUT = "cvarsynth-out"

log = logging.getLogger("cvarsynth")


class UsageError(ValueError):
    """Bad command-line values (matrices, deltas) rather than a bad config file."""


def _parse_matrix(text, n, what):
    """A matrix from inline JSON or a JSON file (bare list, or a report/object holding one)."""
    if text is None:
        return np.zeros((n, n))
    src = Path(text)
    try:
        obj = json.loads(src.read_text()) if src.is_file() else json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{what}: not valid JSON ({exc.msg})") from None
    if isinstance(obj, dict):
        obj = (obj.get("K") or obj.get("K_star") or obj.get("synthesis", {}).get("K_star"))
    arr = np.asarray(obj, dtype=float) if obj is not None else None
    if arr is None or arr.size != n * n:
        raise UsageError(f"{what}: expected a {n}x{n} matrix")
    return arr.reshape(n, n)


def _parse_delta(text, v):
    if text is None:
        return np.zeros(v)
    try:
        vals = json.loads(text) if text.strip().startswith("[") else [float(x) for x in text.split(",")]
    except ValueError:
        raise UsageError(f"--delta: cannot parse {text!r}") from None
    arr = np.atleast_1d(np.asarray(vals, dtype=float))
    if arr.shape != (v,):
        raise UsageError(f"--delta: expected {v} values, got {arr.size}")
    return arr


def _config(args, **extra) -> ExperimentConfig:
    overrides = dict(seed=args.seed, m=args.m, eta=args.eta, out=None)
    overrides.update(extra)
    if args.config:
        return load_config(args.config, **overrides)
    from .config import apply_overrides
    data = apply_overrides(example_config_dict(getattr(args, "nominal", "lower")), **overrides)
    return parse_config(data, source="<built-in example>")


def _formats(args, cfg=None):
    if args.format:
        return args.format
    return cfg.formats if cfg is not None else ["json", "csv"]


def _out_dir(args, cfg=None) -> Path:
    return Path(args.out or (cfg.out_dir if cfg is not None and cfg.out_dir else DEFAULT_OUT))


def cmd_synth(args) -> int:
    cfg = _config(args)
    report = run_synthesis(cfg)
    res = report.synthesis
    out = _out_dir(args, cfg)
    written = report.write(out, _formats(args, cfg))
    if not res.converged:
        print(f"warning: solver did not converge (gap {res.gap:.3g}); result flagged converged=false",
              file=sys.stderr)
    print(f"m={res.m} N={res.N} eta={res.eta:g}")
    print(f"CVaR objective        {res.objective:.6f}")
    print(f"  without eta|K|^2    {res.objective - res.regularization:.6f}")
    if res.shortfall_threshold is not None:
        print(f"shortfall threshold   {res.shortfall_threshold:.6f}")
    print(f"converged={res.converged} iterations={res.iterations}")
    for p in written:
        print(f"wrote {p}")
    return EXIT_OK


def cmd_impact(args) -> int:
    cfg = _config(args)
    n = cfg.plant.n_x
    K = _parse_matrix(args.K, n, "--K")
    delta = _parse_delta(args.delta, cfg.uncertainty.v)
    if not cfg.uncertainty.contains(delta):
        raise UsageError(f"--delta {delta.tolist()} lies outside the uncertainty box")
    eta = cfg.eta if args.eta is not None else 0.0
    rep = impact_exact(cfg.plant, cfg.uncertainty, delta, K, cfg.horizon, eta)
    row = {"q_exact": rep.q_exact, "sigma_max_kappa": rep.sigma_max_kappa, "q_proxy": rep.q_proxy,
           "bound": rep.bound_value, "bound_satisfied": rep.bound_satisfied, "eta": eta,
           "degenerate": rep.degenerate}
    fmt = _formats(args)
    if fmt == ["csv"]:
        w = csv.DictWriter(sys.stdout, fieldnames=list(row))
        w.writeheader()
        w.writerow(row)
    elif "json" in fmt and args.format:
        print(json.dumps({**row, "K": K.tolist(), "delta": delta.tolist(),
                          "worst_attack": rep.worst_attack.tolist()}, indent=2))
    else:
        for key, val in row.items():
            print(f"{key:<16}{val:.10g}" if isinstance(val, float) else f"{key:<16}{val}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    n = cfg.plant.n_x
    K_opt = _parse_matrix(args.k_optimal, n, "--k-optimal")
    K_nom = _parse_matrix(args.k_nominal, n, "--k-nominal")
    n_eval = args.n_eval or cfg.n_eval
    seed = args.seed if args.seed is not None else cfg.eval_seed
    ev = evaluate_controllers(cfg, {"optimal": K_opt, "nominal": K_nom}, n_eval, seed)
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    for p in write_evaluation(out, ev):
        print(f"wrote {p}", file=sys.stderr)
    w = csv.DictWriter(sys.stdout, fieldnames=BOX_FIELDS)
    w.writeheader()
    for r in ev.rows():
        w.writerow(r)
    return EXIT_OK


def demo_rows(reports) -> list[dict]:
    rows = []
    for rep in reports:
        res = rep.synthesis
        cert = certify(res.N, res.m, res.d, DEMO_EPSILON)
        rows.append({"m": res.m, "cvar": res.objective, "cvar_unregularized": res.objective - res.regularization,
                     "eta_K2": res.regularization, "threshold": res.shortfall_threshold,
                     "epsilon": DEMO_EPSILON, "confidence": cert.confidence, "converged": res.converged})
    return rows


def format_table(rows) -> str:
    head = f"{'m':>2}  {'CVaR (q+eta|K|^2)':>18}  {'CVaR (q only)':>14}  {'threshold':>10}  {'conf(eps=0.9)':>13}"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(f"{r['m']:>2}  {r['cvar']:>18.4f}  {r['cvar_unregularized']:>14.4f}  "
                     f"{r['threshold']:>10.4f}  {r['confidence']:>13.6f}")
    return "\n".join(lines)


def run_demo(nominal="lower", seed=None, eta=None, out=None, formats=("json", "csv"), ms=(1, 2)):
    """The benchmark experiment: N = 11 scenarios, designs for each m, box-plot evaluation.

    Returns ``(rows, reports, evaluation)``; the evaluation compares the
    last design against the nominal-plant design on fresh draws.
    """
    from .config import apply_overrides
    data = apply_overrides(example_config_dict(nominal), seed=seed, eta=eta)
    cfg = parse_config(data, source="<built-in example>")
    reports = [run_synthesis(cfg, m=m, evaluate=False) for m in ms]
    nom = nominal_controller(cfg.plant, cfg.uncertainty, cfg.horizon, cfg.eta, cfg.solver)
    ev = evaluate_controllers(cfg, {"optimal": reports[-1].synthesis.K_star, "nominal": nom.K_star},
                              cfg.n_eval, cfg.eval_seed)
    reports[-1].evaluation, reports[-1].nominal = ev, nom
    rows = demo_rows(reports)
    if out is not None:
        out = Path(out)
        for rep in reports:
            rep.write(out / f"m{rep.synthesis.m}", formats)
        out.mkdir(parents=True, exist_ok=True)
        if "csv" in formats:
            write_rows(out / "table.csv", list(rows[0]), rows)
            write_evaluation(out, ev)
        if "json" in formats:
            (out / "demo.json").write_text(json.dumps({
                "nominal": nominal, "config_sha256": cfg.digest(), "table": rows,
                "nominal_controller": nom.K_star.tolist(), "box_stats": ev.rows()}, indent=2))
    return rows, reports, ev


def cmd_demo(args) -> int:
    out = _out_dir(args)
    rows, reports, ev = run_demo(args.nominal, args.seed, args.eta, out, _formats(args))
    print(format_table(rows))
    print()
    print(f"fresh-uncertainty medians over {len(ev.deltas)} draws (m={reports[-1].synthesis.m} design):")
    for metric in ("q", "q_proxy"):
        print(f"  {metric:<8} optimal {ev.median('optimal', metric):10.4f}   "
              f"nominal {ev.median('nominal', metric):10.4f}")
    print(f"wrote reports under {out}")
    return EXIT_OK


def cmd_certify(args) -> int:
    eps = args.epsilon or [float(e) for e in np.round(np.linspace(0.01, 0.99, 99), 2)]
    curve = [(e, c) for e, c in confidence_curve(args.N, args.m, args.d, eps)]
    fmt = _formats(args)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if "csv" in fmt:
            write_confidence_csv(out / "confidence.csv", curve)
        if "json" in fmt:
            (out / "confidence.json").write_text(json.dumps(
                {"N": args.N, "m": args.m, "d": args.d,
                 "curve": [{"epsilon": e, "confidence": c} for e, c in curve]}, indent=2))
    print("epsilon,confidence")
    for e, c in curve:
        print(f"{e!r},{c!r}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config (default: bundled example)")
    common.add_argument("--seed", type=int, help="scenario seed (evaluation seed for 'evaluate')")
    common.add_argument("--m", type=int, help="number of tail scenarios averaged by the CVaR")
    common.add_argument("--eta", type=float, help="Frobenius regulariser weight")
    common.add_argument("--out", help=f"output directory (default {DEFAULT_OUT})")
    common.add_argument("--threads", type=int, help="worker threads for parallel kernels")
    common.add_argument("--format", action="append", choices=["json", "csv"],
                        help="output format; repeat for both")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="cvarsynth", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("synth", parents=[common], help="sample, synthesise, certify, evaluate")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("impact", parents=[common], help="exact impact, proxy and bound for one (K, delta)")
    s.add_argument("--K", help="controller gain: inline JSON or a JSON/report file (default zero)")
    s.add_argument("--delta", help="uncertainty: comma list or JSON array (default zero)")
    s.set_defaults(func=cmd_impact)

    s = sub.add_parser("evaluate", parents=[common], help="box statistics for two controllers")
    s.add_argument("--k-optimal", required=True)
    s.add_argument("--k-nominal", required=True)
    s.add_argument("--n-eval", type=int)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("demo", parents=[common], help="benchmark experiment for m = 1, 2")
    s.add_argument("--nominal", choices=sorted(NOMINAL_POINTS), default="lower",
                   help="where delta = 0 sits in the uncertain-entry intervals")
    s.set_defaults(func=cmd_demo)

    s = sub.add_parser("certify", parents=[common], help="confidence that PS <= epsilon")
    s.add_argument("--N", type=int, required=True)
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--epsilon", type=float, action="append")
    s.set_defaults(func=cmd_certify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads:
        _kernels.set_threads(args.threads)
    if args.command == "certify" and args.m is None:
        print("error: certify needs --m", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, ModelError, CertificateError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (UnboundedImpactError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
