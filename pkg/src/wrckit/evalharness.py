"""Experimental protocol: data ingestion, the four report metrics, tables.

The report follows the usual counterfactual-benchmark shape: per generator,
per metric variant (l1 / l2), with and without the robustness-test search,
it aggregates

* COST  — mean/std distance between counterfactual and ORIGINAL instance,
* VAL   — percentage of counterfactuals whose decision actually flipped,
* LOF   — fraction of counterfactuals judged on-manifold (score <= threshold),
* WRC   — mean/std of the per-instance discrete WRC (verbatim k-sample sum)
          at the instance the counterfactual was generated from.

When the search fails for an instance, the row falls back to the bare
counterfactual for that instance (failures are visible in the pass rate).
Reports embed a full configuration fingerprint and are byte-reproducible
from (dataset, model, fingerprint).
"""

from __future__ import annotations

import csv as _csv
import hashlib
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .cega import CegaConfig, CounterfactualResult, generate
from .core import Metric, PhiFunction, distance
from .errors import DataError, EmptyDatasetError, EstimateUndefinedError, WrckitError
from .lof import lof_scores
from .models import Classifier, LinearModel, MlpModel
from .rng import RngHandle
from .robustness import RobustnessConfig, discrete_wrc
from .wrctest import WrcTestConfig, find_robust_counterfactual

_MISSING_TOKENS = {"", "na", "nan", "null", "?"}


@dataclass(frozen=True, eq=False)
class NormRecord:
    mins: np.ndarray
    maxs: np.ndarray
    constant: np.ndarray  # bool per feature

    def apply(self, X: np.ndarray) -> np.ndarray:
        span = np.where(self.constant, 1.0, self.maxs - self.mins)
        out = (np.asarray(X, dtype=np.float64) - self.mins) / span
        out[:, self.constant] = 0.0
        return np.clip(out, 0.0, 1.0)

    def invert(self, X: np.ndarray) -> np.ndarray:
        span = np.where(self.constant, 0.0, self.maxs - self.mins)
        return self.mins + np.asarray(X, dtype=np.float64) * span


@dataclass(frozen=True, eq=False)
class Dataset:
    name: str
    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    norm: NormRecord | None = None
    dropped_rows: int = 0

    def __post_init__(self):
        if self.X.ndim != 2 or self.X.shape[0] < 1:
            raise EmptyDatasetError(self.name)
        if not np.all(np.isfinite(self.X)):
            raise DataError("non-finite feature values")
        if not np.all(np.isin(self.y, (-1, 1))):
            raise DataError("labels must be in {-1, +1}")

    @property
    def n(self) -> int:
        return int(self.X.shape[0])

    @property
    def k(self) -> int:
        return int(self.X.shape[1])


def ingest_csv(path, label_column: str, positive_token: str,
               drop_columns: tuple[str, ...] = ()) -> Dataset:
    """Load a headered CSV into a Dataset.

    Rows with missing cells are dropped (counted in `dropped_rows`). The
    label column maps positive_token -> +1 and the single remaining token
    -> -1; a third distinct token is an error. A non-numeric value in a
    feature column raises a DataError naming the column.
    """
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = _csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDatasetError(str(path)) from None
        if label_column not in header:
            raise DataError(f"label column {label_column!r} not in header")
        drop = set(drop_columns) | {label_column}
        feat_cols = [(i, name) for i, name in enumerate(header)
                     if name not in drop]
        label_idx = header.index(label_column)

        rows, labels, dropped = [], [], 0
        for raw in reader:
            if len(raw) != len(header):
                dropped += 1
                continue
            cells = []
            missing = False
            for i, name in feat_cols:
                tok = raw[i].strip()
                if tok.lower() in _MISSING_TOKENS:
                    missing = True
                    break
                try:
                    cells.append(float(tok))
                except ValueError:
                    raise DataError(
                        f"non-numeric value {tok!r} in column {name!r}") from None
            label_tok = raw[label_idx].strip()
            if missing or label_tok.lower() in _MISSING_TOKENS:
                dropped += 1
                continue
            rows.append(cells)
            labels.append(label_tok)

    if not rows:
        raise EmptyDatasetError(str(path))
    negative = sorted(set(labels) - {positive_token})
    if len(negative) > 1:
        raise DataError(f"unknown label token {negative[1]!r} "
                        f"(expected {positive_token!r} and {negative[0]!r})")
    y = np.array([1 if tok == positive_token else -1 for tok in labels],
                 dtype=np.int64)
    return Dataset(name=str(path), X=np.array(rows, dtype=np.float64), y=y,
                   feature_names=tuple(name for _, name in feat_cols),
                   dropped_rows=dropped)


def normalize(ds: Dataset) -> tuple[Dataset, NormRecord]:
    """Min-max scale each feature into [0, 1]; constant features map to 0."""
    mins = ds.X.min(axis=0)
    maxs = ds.X.max(axis=0)
    record = NormRecord(mins=mins, maxs=maxs, constant=(maxs == mins))
    scaled = record.apply(ds.X)
    return replace(ds, X=scaled, norm=record), record


@dataclass(frozen=True)
class CostSummary:
    mean: float
    std: float
    n_included: int
    n_excluded: int


def cost(m: Metric, results) -> CostSummary:
    """Mean and sample std of d(x, x_bar) over valid results."""
    vals = [distance(m, r.x, r.x_bar) for r in results if r.valid]
    if not vals:
        raise WrckitError("no valid counterfactuals to cost")
    arr = np.asarray(vals)
    std = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
    return CostSummary(mean=float(np.mean(arr)), std=std,
                       n_included=arr.size, n_excluded=len(results) - arr.size)


def validity(c: Classifier, results) -> float:
    """Percentage of results whose decision actually flipped, re-checked."""
    if not results:
        raise WrckitError("no results")
    flips = sum(1 for r in results if c.decide(r.x_bar) != c.decide(r.x))
    return 100.0 * flips / len(results)


# ---------------------------------------------------------------------------
# table protocol


@dataclass(frozen=True, eq=False)
class EvalProtocol:
    dataset: Dataset
    classifier: Classifier
    generators: tuple[str, ...] = ("gradient", "bisection")
    metric_variants: tuple[str, ...] = ("l1", "l2")
    n_samples: int = 100
    seed: int = 0
    wrc_k: int = 100
    wrc_r: float | None = None          # default 1e-5 * n_features
    phi_epsilon: float = 1e-6
    tau: float | None = None            # None -> quantile calibration per row
    tau_quantile: float = 0.6
    max_steps: int = 30
    sigma: float | None = None          # default r/3
    ball_policy: str = "anchor-fixed"
    lof_k: int = 10
    lof_threshold: float = 1.5
    cega: CegaConfig | None = None      # template; kind and metric set per row
    with_wrc_test: bool = True
    train_accuracy: float | None = None
    accuracy_threshold: float = 0.70
    workers: int = 1

    @property
    def resolved_r(self) -> float:
        return self.wrc_r if self.wrc_r is not None else 1e-5 * self.dataset.k


@dataclass(frozen=True)
class EvalRow:
    method: str
    variant: str
    cost_mean: float | None
    cost_std: float | None
    lof_inlier: float | None
    wrc_mean: float | None
    wrc_std: float | None
    val_pct: float
    n: int
    n_invalid: int
    pass_rate: float | None
    tau: float | None


_CSV_COLUMNS = ("method", "variant", "cost_mean", "cost_std", "lof_inlier",
                "wrc_mean", "wrc_std", "val_pct", "n", "n_invalid",
                "pass_rate", "tau")


@dataclass(frozen=True, eq=False)
class EvalReport:
    rows: tuple[EvalRow, ...]
    fingerprint: dict
    warnings: tuple[str, ...] = ()

    def to_json_text(self) -> str:
        payload = {
            "fingerprint": self.fingerprint,
            "warnings": list(self.warnings),
            "rows": [{col: getattr(r, col) for col in _CSV_COLUMNS}
                     for r in self.rows],
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        buf.write("# wrckit-eval-report\n")
        buf.write("# fingerprint: "
                  + json.dumps(self.fingerprint, sort_keys=True) + "\n")
        for w in self.warnings:
            buf.write(f"# warning: {w}\n")
        buf.write(",".join(_CSV_COLUMNS) + "\n")
        for r in self.rows:
            cells = []
            for col in _CSV_COLUMNS:
                v = getattr(r, col)
                if v is None:
                    cells.append("")
                elif isinstance(v, float):
                    cells.append(repr(v))
                else:
                    cells.append(str(v))
            buf.write(",".join(cells) + "\n")
        return buf.getvalue()


def _classifier_fingerprint(c: Classifier) -> str:
    h = hashlib.blake2b(digest_size=12)
    if isinstance(c, MlpModel):
        for arr in (c.w1, c.b1, c.w2, c.b2, c.w3, np.array([c.b3])):
            h.update(np.ascontiguousarray(arr).tobytes())
        return f"mlp:{c.dim}:{h.hexdigest()}"
    if isinstance(c, LinearModel):
        h.update(np.ascontiguousarray(c.w).tobytes())
        h.update(np.array([c.b]).tobytes())
        return f"linear:{c.dim}:{h.hexdigest()}"
    return f"{type(c).__name__.lower()}:{c.dim}"


def _cega_fingerprint(cfg: CegaConfig) -> dict:
    return {
        "max_iter": cfg.max_iter, "step_size": cfg.step_size, "lam": cfg.lam,
        "proto_weight": cfg.proto_weight, "overshoot": cfg.overshoot,
        "n_directions": cfg.n_directions, "n_prototypes": cfg.n_prototypes,
        "refine_rounds": cfg.refine_rounds,
    }


@dataclass(frozen=True, eq=False)
class _InstanceEval:
    cf: CounterfactualResult
    wrc: float | None
    passed: bool | None = None


def _map_indexed(fn, count: int, workers: int):
    if workers <= 1:
        return [fn(j) for j in range(count)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(count)))


def run_table(protocol: EvalProtocol) -> EvalReport:
    """Run the full table protocol and return the report."""
    ds = protocol.dataset
    c = protocol.classifier
    r = protocol.resolved_r
    take = min(protocol.n_samples, ds.n)
    root = RngHandle(protocol.seed)
    sel = np.sort(root.child("select").generator().choice(
        ds.n, size=take, replace=False))
    reference = ds.X

    warnings = []
    if take < protocol.n_samples:
        warnings.append(f"dataset smaller than n_samples; using {take}")
    if protocol.train_accuracy is not None \
            and protocol.train_accuracy < protocol.accuracy_threshold:
        warnings.append("below-threshold")

    template = protocol.cega if protocol.cega is not None else CegaConfig()
    rows = []
    for gen_kind in protocol.generators:
        for variant in protocol.metric_variants:
            metric = Metric.from_name(variant, ds.k)
            gen_cfg = replace(template, kind=gen_kind, metric=metric)
            rob = RobustnessConfig(
                r=r, k=protocol.wrc_k,
                phi=PhiFunction.inverse_shifted(protocol.phi_epsilon),
                metric=metric)

            def base_rng(j):
                return root.child("eval", gen_kind, variant, j)

            def eval_bare(j):
                x = ds.X[sel[j]]
                handle = base_rng(j).child("wrc", 0)
                try:
                    est = discrete_wrc(rob, c, gen_cfg, x, handle,
                                       reference=reference)
                    return _InstanceEval(cf=est.cf_x, wrc=est.value)
                except EstimateUndefinedError:
                    cf = generate(gen_cfg, c, x, handle.child("cf", "x"),
                                  reference)
                    return _InstanceEval(cf=cf, wrc=None)

            bare = _map_indexed(eval_bare, take, protocol.workers)
            rows.append(_aggregate_row(
                protocol, c, metric, gen_kind, variant, bare, reference,
                tau=None))

            if not protocol.with_wrc_test:
                continue
            defined = [b.wrc for b in bare if b.wrc is not None]
            if protocol.tau is not None:
                tau = protocol.tau
            elif defined:
                tau = max(float(np.quantile(defined, protocol.tau_quantile)),
                          1e-12)
            else:
                tau = 1e-12
            wcfg = WrcTestConfig(tau=tau, robustness=rob,
                                 max_steps=protocol.max_steps,
                                 sigma=protocol.sigma,
                                 policy=protocol.ball_policy)

            def eval_search(j):
                x = ds.X[sel[j]]
                outcome = find_robust_counterfactual(
                    wcfg, c, gen_cfg, x, base_rng(j), reference)
                if outcome.passed:
                    return _InstanceEval(cf=outcome.counterfactual,
                                         wrc=outcome.trajectory[-1][1],
                                         passed=True)
                return _InstanceEval(cf=bare[j].cf, wrc=bare[j].wrc,
                                     passed=False)

            searched = _map_indexed(eval_search, take, protocol.workers)
            rows.append(_aggregate_row(
                protocol, c, metric, f"{gen_kind}+wrc-test", variant,
                searched, reference, tau=tau))

    fingerprint = {
        "dataset": {"name": ds.name, "n": ds.n, "k": ds.k},
        "classifier": _classifier_fingerprint(c),
        "generators": list(protocol.generators),
        "metric_variants": list(protocol.metric_variants),
        "n_samples": protocol.n_samples,
        "seed": protocol.seed,
        "wrc_k": protocol.wrc_k,
        "wrc_r": r,
        "phi_epsilon": protocol.phi_epsilon,
        "tau": protocol.tau,
        "tau_quantile": protocol.tau_quantile,
        "max_steps": protocol.max_steps,
        "sigma": protocol.sigma if protocol.sigma is not None else r / 3.0,
        "ball_policy": protocol.ball_policy,
        "lof_k": protocol.lof_k,
        "lof_threshold": protocol.lof_threshold,
        "cega": _cega_fingerprint(template),
        "with_wrc_test": protocol.with_wrc_test,
        "train_accuracy": protocol.train_accuracy,
        "accuracy_threshold": protocol.accuracy_threshold,
        "wrc_variant": "verbatim-sum",
    }
    return EvalReport(rows=tuple(rows), fingerprint=fingerprint,
                      warnings=tuple(warnings))


def _aggregate_row(protocol, c, metric, method, variant, evals, reference,
                   tau) -> EvalRow:
    results = [e.cf for e in evals]
    valid = [cf for cf in results if cf.valid]
    if valid:
        cs = cost(metric, results)
        cost_mean, cost_std = cs.mean, cs.std
        points = np.array([cf.x_bar for cf in valid])
        lof = lof_scores(reference, points, k_neighbors=protocol.lof_k,
                         inlier_threshold=protocol.lof_threshold)
        lof_inlier = lof.inlier_fraction
    else:
        cost_mean = cost_std = lof_inlier = None
    wrc_vals = np.array([e.wrc for e in evals if e.wrc is not None])
    if wrc_vals.size:
        wrc_mean = float(np.mean(wrc_vals))
        wrc_std = float(np.std(wrc_vals, ddof=1)) if wrc_vals.size > 1 else 0.0
    else:
        wrc_mean = wrc_std = None
    passed = [e.passed for e in evals if e.passed is not None]
    return EvalRow(
        method=method, variant=variant, cost_mean=cost_mean,
        cost_std=cost_std, lof_inlier=lof_inlier, wrc_mean=wrc_mean,
        wrc_std=wrc_std, val_pct=validity(c, results), n=len(evals),
        n_invalid=len(results) - len(valid),
        pass_rate=(100.0 * sum(passed) / len(passed)) if passed else None,
        tau=tau)
