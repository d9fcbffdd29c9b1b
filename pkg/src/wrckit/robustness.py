"""Robust-compatibility functionals over perturbation balls.

Two per-sample discrepancies are supported, both weighted by phi(d(x, y)):

* WRC uses |strength(x) - strength(y)|, the absolute difference of the
  explanatory strengths d(., C(.)) of the two counterfactuals.
* SRC uses d(C(x), C(y)), the distance between the counterfactual locations.

`discrete_wrc` / `discrete_src` realize the k-sample estimator verbatim as a
SUM over samples drawn uniform on B(x, r) ∩ [0,1]^K. The `normalized` flag
switches to mean-times-volume, which consistently estimates the underlying
ball integral (the volume of the ball-cube intersection is itself estimated
by hit-ratio Monte Carlo from the enclosing box); reports must state which
variant produced a number.

Samples whose counterfactual cannot be obtained are dropped and counted
instead of poisoning the estimate. The strength at x is computed once and
reused across all k terms. Everything is deterministic given the RngHandle:
ball draws, the per-sample generator streams, and the volume stream are all
children of the handle passed in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cega import CegaConfig, CounterfactualResult, generate
from .core import Metric, PhiFunction, as_instance, distance, sample_uniform_ball
from .errors import CfUnobtainableError, EstimateUndefinedError
from .models import Classifier
from .rng import RngHandle


@dataclass(frozen=True, eq=False)
class RobustnessConfig:
    """Ball radius, sample count, weighting and metric for one estimator."""

    r: float
    k: int = 100
    phi: PhiFunction = field(default_factory=PhiFunction.inverse_shifted)
    metric: Metric = field(default_factory=Metric.euclidean)
    seed: int = 0
    n_volume: int = 4096

    def __post_init__(self):
        if self.r <= 0:
            raise ValueError("r must be positive")
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass(frozen=True, eq=False)
class TraceRow:
    sample_idx: int
    y: np.ndarray
    d_xy: float
    strength_x: float
    strength_y: float
    contribution: float


@dataclass(frozen=True, eq=False)
class WrcEstimate:
    value: float
    kind: str                      # "WRC" or "SRC"
    k: int
    r: float
    invalid_count: int
    n_retained: int
    normalized: bool
    volume: float | None
    strength_x: float
    cf_x: CounterfactualResult
    contributions: np.ndarray
    trace: tuple[TraceRow, ...] | None = None


@dataclass(frozen=True)
class ExpectedWrc:
    mean: float
    stderr: float
    n_used: int
    n_dropped: int
    values: tuple[float, ...]


def delta_tilde(c: Classifier, gen: CegaConfig, m: Metric, x, y,
                rng: RngHandle, reference: np.ndarray | None = None) -> float:
    """|strength(x) - strength(y)| under metric m, shared generator config."""
    sx = _strength_at(c, gen, m, x, rng.child("cf", "x"), reference)
    sy = _strength_at(c, gen, m, y, rng.child("cf", "y"), reference)
    return abs(sx - sy)


def delta_src(c: Classifier, gen: CegaConfig, m: Metric, x, y,
              rng: RngHandle, reference: np.ndarray | None = None) -> float:
    """Distance between the two generated counterfactual points."""
    rx = generate(gen, c, x, rng.child("cf", "x"), reference)
    ry = generate(gen, c, y, rng.child("cf", "y"), reference)
    if not (rx.valid and ry.valid):
        raise CfUnobtainableError("x" if not rx.valid else "y")
    return distance(m, rx.x_bar, ry.x_bar)


def _strength_at(c, gen, m, x, rng, reference) -> float:
    res = generate(gen, c, x, rng, reference)
    if not res.valid:
        raise CfUnobtainableError(f"generator {gen.kind} failed")
    return distance(m, res.x, res.x_bar)


def ball_cube_volume(center, r: float, n: int, rng: RngHandle) -> float:
    """Hit-ratio Monte Carlo estimate of vol(B(center, r) ∩ [0,1]^K)."""
    c = as_instance(center)
    lo = np.maximum(c - r, 0.0)
    hi = np.minimum(c + r, 1.0)
    box_vol = float(np.prod(hi - lo))
    if box_vol == 0.0:
        return 0.0
    pts = lo + (hi - lo) * rng.generator().random((n, c.size))
    hits = np.sum((pts - c) ** 2, axis=1) <= r * r
    return box_vol * float(np.mean(hits))


def _discrete_estimate(kind: str, cfg: RobustnessConfig, c: Classifier,
                       gen: CegaConfig, x, rng: RngHandle,
                       samples: np.ndarray | None, normalized: bool,
                       trace: bool, reference: np.ndarray | None) -> WrcEstimate:
    x = as_instance(x, c.dim)
    if samples is None:
        samples = sample_uniform_ball(x, cfg.r, cfg.k, rng.child("balls"))
    else:
        samples = np.asarray(samples, dtype=np.float64)
    k_used = samples.shape[0]

    cf_x = generate(gen, c, x, rng.child("cf", "x"), reference)
    if not cf_x.valid:
        raise EstimateUndefinedError("counterfactual at x unobtainable")
    strength_x = distance(cfg.metric, x, cf_x.x_bar)

    contribs = []
    rows = [] if trace else None
    invalid = 0
    for i in range(k_used):
        y = samples[i]
        cf_y = generate(gen, c, y, rng.child("cf", i), reference)
        if not cf_y.valid:
            invalid += 1
            continue
        d_xy = distance(cfg.metric, x, y)
        strength_y = distance(cfg.metric, y, cf_y.x_bar)
        if kind == "WRC":
            disc = abs(strength_x - strength_y)
        else:
            disc = distance(cfg.metric, cf_x.x_bar, cf_y.x_bar)
        contrib = disc * cfg.phi(d_xy)
        contribs.append(contrib)
        if trace:
            rows.append(TraceRow(i, y.copy(), d_xy, strength_x,
                                 strength_y, contrib))
    if not contribs:
        raise EstimateUndefinedError(f"all {k_used} samples invalid")

    contribs = np.asarray(contribs)
    volume = None
    if normalized:
        volume = ball_cube_volume(x, cfg.r, cfg.n_volume, rng.child("vol"))
        value = float(np.mean(contribs)) * volume
    else:
        value = float(np.sum(contribs))
    return WrcEstimate(
        value=value, kind=kind, k=k_used, r=cfg.r, invalid_count=invalid,
        n_retained=len(contribs), normalized=normalized, volume=volume,
        strength_x=strength_x, cf_x=cf_x, contributions=contribs,
        trace=tuple(rows) if trace else None)


def discrete_wrc(cfg: RobustnessConfig, c: Classifier, gen: CegaConfig, x,
                 rng: RngHandle, samples: np.ndarray | None = None,
                 normalized: bool = False, trace: bool = False,
                 reference: np.ndarray | None = None) -> WrcEstimate:
    """k-sample weak-robust-compatibility estimate at x.

    Pass `samples` to inject an explicit perturbation set instead of drawing
    from the ball (the sample count then overrides cfg.k).
    """
    return _discrete_estimate("WRC", cfg, c, gen, x, rng, samples,
                              normalized, trace, reference)


def discrete_src(cfg: RobustnessConfig, c: Classifier, gen: CegaConfig, x,
                 rng: RngHandle, samples: np.ndarray | None = None,
                 normalized: bool = False, trace: bool = False,
                 reference: np.ndarray | None = None) -> WrcEstimate:
    """k-sample strong-robust-compatibility estimate at x."""
    return _discrete_estimate("SRC", cfg, c, gen, x, rng, samples,
                              normalized, trace, reference)


def expected_wrc(cfg: RobustnessConfig, c: Classifier, gen: CegaConfig,
                 xs: np.ndarray, rng: RngHandle, normalized: bool = False,
                 kind: str = "WRC",
                 reference: np.ndarray | None = None) -> ExpectedWrc:
    """Mean of the per-instance estimate over xs, with standard error.

    Instances whose estimate is undefined are dropped and counted. Instance
    i always consumes the stream rng.child("x", i), so two calls sharing a
    handle see identical ball samples (common random numbers).
    """
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[0] == 0:
        raise ValueError("xs must be a non-empty (n, K) array")
    values = []
    dropped = 0
    for i in range(xs.shape[0]):
        try:
            est = _discrete_estimate(kind, cfg, c, gen, xs[i],
                                     rng.child("x", i), None, normalized,
                                     False, reference)
        except EstimateUndefinedError:
            dropped += 1
            continue
        values.append(est.value)
    if not values:
        raise EstimateUndefinedError("every instance undefined")
    arr = np.asarray(values)
    stderr = float(np.std(arr, ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
    return ExpectedWrc(mean=float(np.mean(arr)), stderr=stderr,
                       n_used=arr.size, n_dropped=dropped,
                       values=tuple(float(v) for v in arr))


def trace_to_csv_lines(est: WrcEstimate) -> list[str]:
    """CSV rows: sample_idx, y coords, d_xy, strength_x, strength_y, contribution."""
    if est.trace is None:
        raise ValueError("estimate was computed without trace=True")
    lines = []
    for row in est.trace:
        coords = ",".join(repr(float(v)) for v in row.y)
        lines.append(f"{row.sample_idx},{coords},{row.d_xy!r},"
                     f"{row.strength_x!r},{row.strength_y!r},{row.contribution!r}")
    return lines
