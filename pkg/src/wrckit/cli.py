"""Command-line interface.

Subcommands: train, explain, wrc-test, eval, pac-study. Options may come
from flags or from a plain-text config file of `key = value` lines with
dotted keys (e.g. `wrc.tau = 1.8`); flags override the file. Every report
embeds the fully resolved configuration so any number is reproducible from
the report alone.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .cega import CegaConfig, generate
from .core import Metric, PhiFunction
from .errors import DataError, WrckitError
from .evalharness import EvalProtocol, ingest_csv, normalize, run_table
from .models import TrainConfig, load_model, save_model, train_logistic, train_mlp
from .pacstudy import (bayes_learner, gap_curve, logistic_learner, make_problem,
                       mlp_learner, write_gap_curve_csv)
from .rng import RngHandle
from .robustness import RobustnessConfig
from .synthdata import SYNTHETIC_NAMES, synthetic_dataset
from .wrctest import WrcTestConfig, find_robust_counterfactual

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def load_config_file(path) -> dict[str, str]:
    """Parse `key = value` lines; '#' starts a comment; blank lines ignored."""
    out: dict[str, str] = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise DataError(f"{path}:{lineno}: expected key = value")
                key, value = line.split("=", 1)
                out[key.strip()] = value.strip()
    except OSError as exc:
        raise DataError(f"cannot read config file {path}: {exc}") from exc
    return out


def _resolve(args, file_cfg: dict[str, str], key: str, default, cast):
    """Precedence: explicit flag > config file > default."""
    flag_val = getattr(args, key.split(".")[-1].replace("-", "_"), None)
    if flag_val is not None:
        return flag_val
    if key in file_cfg:
        raw = file_cfg[key]
        if cast is bool:
            return raw.lower() in ("1", "true", "yes", "on")
        return cast(raw)
    return default


def _load_dataset(args, file_cfg):
    data = _resolve(args, file_cfg, "data", None, str)
    if data is None:
        raise DataError("--data is required")
    if data.startswith("synthetic:"):
        name = data.split(":", 1)[1]
        if name not in SYNTHETIC_NAMES:
            raise DataError(f"unknown synthetic dataset {name!r}")
        ds = synthetic_dataset(name,
                               n=_resolve(args, file_cfg, "data.n", 600, int),
                               seed=_resolve(args, file_cfg, "seed", 0, int))
    else:
        label = _resolve(args, file_cfg, "data.label-column", "label", str)
        positive = _resolve(args, file_cfg, "data.positive-token", "1", str)
        drops = _resolve(args, file_cfg, "data.drop-columns", "", str)
        drop_cols = tuple(c for c in drops.split(",") if c)
        ds = ingest_csv(data, label, positive, drop_cols)
    ds, _ = normalize(ds)
    return ds


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(json.dumps(payload, sort_keys=True, indent=2) + "\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_train(args, file_cfg) -> int:
    ds = _load_dataset(args, file_cfg)
    cfg = TrainConfig(
        epochs=_resolve(args, file_cfg, "train.epochs", 250, int),
        batch_size=_resolve(args, file_cfg, "train.batch-size", 32, int),
        learning_rate=_resolve(args, file_cfg, "train.lr", 0.2, float),
        weight_decay=_resolve(args, file_cfg, "train.weight-decay", 0.0, float),
        seed=_resolve(args, file_cfg, "seed", 0, int),
        threshold=_resolve(args, file_cfg, "train.threshold", 0.70, float),
        val_fraction=_resolve(args, file_cfg, "train.val-fraction", 0.25, float),
        hidden1=_resolve(args, file_cfg, "train.hidden1", 32, int),
        hidden2=_resolve(args, file_cfg, "train.hidden2", 32, int),
    )
    kind = _resolve(args, file_cfg, "train.kind", "mlp", str)
    trainer = {"mlp": train_mlp, "logistic": train_logistic}.get(kind)
    if trainer is None:
        raise DataError(f"unknown model kind {kind!r}")
    model, report = trainer(ds, cfg)
    save_model(model, args.model_out)
    print(f"trained {kind} on {ds.name}: "
          f"val_accuracy={report.val_accuracy:.4f} "
          f"train_accuracy={report.train_accuracy:.4f} "
          f"(threshold {cfg.threshold})")
    if args.report_out:
        _write_json(args.report_out, {
            "fingerprint": {
                "kind": kind, "dataset": ds.name, "n": ds.n, "k": ds.k,
                "epochs": cfg.epochs, "batch_size": cfg.batch_size,
                "learning_rate": cfg.learning_rate,
                "weight_decay": cfg.weight_decay, "seed": cfg.seed,
                "threshold": cfg.threshold, "val_fraction": cfg.val_fraction,
                "hidden1": cfg.hidden1, "hidden2": cfg.hidden2,
            },
            "train_accuracy": report.train_accuracy,
            "val_accuracy": report.val_accuracy,
            "below_threshold": report.below_threshold,
            "degenerate": report.degenerate,
        })
    if report.below_threshold and not args.allow_below_threshold:
        print(f"accuracy {report.val_accuracy:.4f} below threshold "
              f"{cfg.threshold}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _cega_from_args(args, file_cfg, metric: Metric) -> CegaConfig:
    return CegaConfig(
        kind=_resolve(args, file_cfg, "cega.generator", "bisection", str),
        metric=metric,
        max_iter=_resolve(args, file_cfg, "cega.max-iter", 200, int),
        step_size=_resolve(args, file_cfg, "cega.step-size", 0.05, float),
        lam=_resolve(args, file_cfg, "cega.lam", 1.0, float),
        overshoot=_resolve(args, file_cfg, "cega.overshoot", 1e-6, float),
        n_directions=_resolve(args, file_cfg, "cega.directions", 20, int),
        n_prototypes=_resolve(args, file_cfg, "cega.prototypes", 5, int),
        refine_rounds=_resolve(args, file_cfg, "cega.refine-rounds", 3, int),
    )


def cmd_explain(args, file_cfg) -> int:
    ds = _load_dataset(args, file_cfg)
    model = load_model(args.model)
    metric = Metric.from_name(
        _resolve(args, file_cfg, "cega.metric", "l2", str), ds.k)
    cfg = _cega_from_args(args, file_cfg, metric)
    seed = _resolve(args, file_cfg, "seed", 0, int)
    indices = _resolve(args, file_cfg, "explain.indices", "", str)
    rows = [int(t) for t in indices.split(",") if t] or list(range(ds.n))
    root = RngHandle(seed)

    lines = ["index," + ",".join(f"x_{n}" for n in ds.feature_names) + ","
             + ",".join(f"cf_{n}" for n in ds.feature_names)
             + ",strength,valid,clipped"]
    for idx in rows:
        res = generate(cfg, model, ds.X[idx], root.child("explain", idx),
                       reference=ds.X)
        lines.append(",".join(
            [str(idx)]
            + [repr(float(v)) for v in res.x]
            + [repr(float(v)) for v in res.x_bar]
            + [repr(float(res.strength)), str(res.valid), str(res.clipped)]))
    with open(args.out, "w", encoding="ascii") as fh:
        fh.write("# fingerprint: " + json.dumps({
            "generator": cfg.kind, "metric": metric.kind, "seed": seed,
            "overshoot": cfg.overshoot, "model": args.model,
        }, sort_keys=True) + "\n")
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {len(rows)} counterfactual rows to {args.out}")
    return EXIT_OK


def cmd_wrc_test(args, file_cfg) -> int:
    ds = _load_dataset(args, file_cfg)
    model = load_model(args.model)
    metric = Metric.from_name(
        _resolve(args, file_cfg, "cega.metric", "l2", str), ds.k)
    gen_cfg = _cega_from_args(args, file_cfg, metric)
    seed = _resolve(args, file_cfg, "seed", 0, int)
    r = _resolve(args, file_cfg, "wrc.r", 1e-5 * ds.k, float)
    k = _resolve(args, file_cfg, "wrc.k", 100, int)
    tau = _resolve(args, file_cfg, "wrc.tau", None, float)
    if tau is None:
        raise DataError("--tau is required for wrc-test")
    rob = RobustnessConfig(
        r=r, k=k,
        phi=PhiFunction.inverse_shifted(
            _resolve(args, file_cfg, "wrc.phi-epsilon", 1e-6, float)),
        metric=metric)
    wcfg = WrcTestConfig(
        tau=tau, robustness=rob,
        max_steps=_resolve(args, file_cfg, "wrc.max-steps", 30, int),
        sigma=_resolve(args, file_cfg, "wrc.sigma", None, float),
        policy=_resolve(args, file_cfg, "wrc.policy", "anchor-fixed", str))
    indices = _resolve(args, file_cfg, "wrc.indices", "", str)
    rows = [int(t) for t in indices.split(",") if t] or list(range(ds.n))
    root = RngHandle(seed)

    records = []
    passed = 0
    for idx in rows:
        outcome = find_robust_counterfactual(
            wcfg, model, gen_cfg, ds.X[idx], root.child("wrc-test", idx),
            reference=ds.X)
        passed += outcome.passed
        rec = outcome.to_record()
        rec["index"] = idx
        records.append(rec)
    fingerprint = {
        "tau": tau, "r": r, "k": k, "sigma": wcfg.gaussian_sigma,
        "max_steps": wcfg.max_steps, "policy": wcfg.policy,
        "generator": gen_cfg.kind, "metric": metric.kind, "seed": seed,
        "model": args.model,
    }
    _write_json(args.out, {"fingerprint": fingerprint, "outcomes": records,
                           "pass_rate": 100.0 * passed / len(rows)})
    print(f"wrc-test: {passed}/{len(rows)} passed "
          f"({100.0 * passed / len(rows):.1f}%), outcomes in {args.out}")
    return EXIT_OK


def cmd_eval(args, file_cfg) -> int:
    ds = _load_dataset(args, file_cfg)
    model = load_model(args.model)
    gens = _resolve(args, file_cfg, "eval.generators", "gradient,bisection", str)
    variants = _resolve(args, file_cfg, "eval.metrics", "l1,l2", str)
    protocol = EvalProtocol(
        dataset=ds,
        classifier=model,
        generators=tuple(g for g in gens.split(",") if g),
        metric_variants=tuple(v for v in variants.split(",") if v),
        n_samples=_resolve(args, file_cfg, "eval.n-samples", 100, int),
        seed=_resolve(args, file_cfg, "seed", 0, int),
        wrc_k=_resolve(args, file_cfg, "wrc.k", 100, int),
        wrc_r=_resolve(args, file_cfg, "wrc.r", None, float),
        tau=_resolve(args, file_cfg, "wrc.tau", None, float),
        tau_quantile=_resolve(args, file_cfg, "wrc.tau-quantile", 0.6, float),
        max_steps=_resolve(args, file_cfg, "wrc.max-steps", 30, int),
        lof_k=_resolve(args, file_cfg, "lof.k", 10, int),
        lof_threshold=_resolve(args, file_cfg, "lof.threshold", 1.5, float),
        workers=_resolve(args, file_cfg, "workers", 1, int),
    )
    report = run_table(protocol)
    csv_path = args.out_prefix + ".csv"
    json_path = args.out_prefix + ".json"
    with open(csv_path, "w", encoding="ascii") as fh:
        fh.write(report.to_csv_text())
    with open(json_path, "w", encoding="ascii") as fh:
        fh.write(report.to_json_text())
    print(f"eval report: {len(report.rows)} rows -> {csv_path}, {json_path}")
    return EXIT_OK


def cmd_pac_study(args, file_cfg) -> int:
    seed = _resolve(args, file_cfg, "seed", 0, int)
    l = _resolve(args, file_cfg, "pac.l", 1, int)
    gamma = _resolve(args, file_cfg, "pac.gamma", 1.0, float)
    alpha = _resolve(args, file_cfg, "pac.alpha", 1.0, float)
    flat = _resolve(args, file_cfg, "pac.flat-boundary", False, bool)
    grid_text = _resolve(args, file_cfg, "pac.grid", "64,256,1024,4096", str)
    grid = [int(t) for t in grid_text.split(",") if t]
    repeats = _resolve(args, file_cfg, "pac.repeats", 10, int)
    n_eval = _resolve(args, file_cfg, "pac.n-eval", 48, int)
    learner_name = _resolve(args, file_cfg, "pac.learner", "logistic", str)

    rng = RngHandle(seed)
    problem = make_problem(l, gamma, alpha, rng.child("problem"), flat=flat)
    if args.inject_bayes:
        learner = bayes_learner(problem)
    elif learner_name == "logistic":
        learner = logistic_learner()
    elif learner_name == "mlp":
        learner = mlp_learner()
    else:
        raise DataError(f"unknown learner {learner_name!r}")
    metric = Metric.euclidean()
    gen = CegaConfig(
        kind=_resolve(args, file_cfg, "pac.generator", "bisection", str),
        metric=metric,
        n_directions=_resolve(args, file_cfg, "pac.directions", 3, int),
        refine_rounds=_resolve(args, file_cfg, "pac.refine-rounds", 0, int))
    rob = RobustnessConfig(
        r=_resolve(args, file_cfg, "pac.r", 0.05, float),
        k=_resolve(args, file_cfg, "pac.k", 48, int),
        metric=metric)
    curve = gap_curve(problem, learner, gen, rob, grid, repeats,
                      rng.child("curve"), n_eval_x=n_eval)
    write_gap_curve_csv(curve, args.out)
    summary = {
        "fingerprint": {
            "seed": seed, "l": l, "gamma": gamma, "alpha": alpha,
            "flat_boundary": flat, "grid": grid, "repeats": repeats,
            "n_eval": n_eval, "learner": learner_name,
            "inject_bayes": bool(args.inject_bayes),
            "generator": gen.kind, "wrc_r": rob.r, "wrc_k": rob.k,
            "wrc_variant": "normalized-integral",
        },
        "mean_gaps": [float(v) for v in curve.mean_gaps],
        "slope": curve.slope,
        "spearman": curve.spearman,
        "degenerate": curve.degenerate,
    }
    _write_json(args.out + ".summary.json", summary)
    print(f"pac-study: mean gaps {[round(float(v), 8) for v in curve.mean_gaps]} "
          f"spearman={curve.spearman} slope={curve.slope} -> {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# wiring


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wrckit",
        description="counterfactual explanations with robustness testing")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--data", default=None,
                       help="CSV path or synthetic:<%s>" % "|".join(SYNTHETIC_NAMES))
        p.add_argument("--label-column", default=None)
        p.add_argument("--positive-token", default=None)

    p = sub.add_parser("train", help="train a classifier")
    add_common(p)
    p.add_argument("--model-out", required=True)
    p.add_argument("--kind", default=None, choices=("mlp", "logistic"))
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--weight-decay", type=float, default=None)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--allow-below-threshold", action="store_true")
    p.add_argument("--report-out", default=None)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("explain", help="generate counterfactual rows")
    add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--generator", default=None,
                   choices=("gradient", "bisection", "prototype"))
    p.add_argument("--metric", default=None, choices=("l1", "l2"))
    p.add_argument("--directions", type=int, default=None)
    p.add_argument("--indices", default=None,
                   help="comma-separated row indices (default: all)")
    p.set_defaults(fn=cmd_explain)

    p = sub.add_parser("wrc-test", help="robust-counterfactual search")
    add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--r", type=float, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--policy", default=None,
                   choices=("anchor-fixed", "recentering"))
    p.add_argument("--generator", default=None,
                   choices=("gradient", "bisection", "prototype"))
    p.add_argument("--metric", default=None, choices=("l1", "l2"))
    p.add_argument("--indices", default=None)
    p.set_defaults(fn=cmd_wrc_test)

    p = sub.add_parser("eval", help="table-style report")
    add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--generators", default=None)
    p.add_argument("--metrics", default=None)
    p.add_argument("--n-samples", type=int, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("pac-study", help="WRC convergence-gap study")
    add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--grid", default=None)
    p.add_argument("--repeats", type=int, default=None)
    p.add_argument("--l", type=int, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--n-eval", type=int, default=None)
    p.add_argument("--learner", default=None, choices=("logistic", "mlp"))
    p.add_argument("--flat-boundary", action="store_true", default=None)
    p.add_argument("--inject-bayes", action="store_true")
    p.set_defaults(fn=cmd_pac_study)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        file_cfg = load_config_file(args.config) if args.config else {}
        return args.fn(args, file_cfg)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except WrckitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
