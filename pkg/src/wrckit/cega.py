"""Counterfactual generators.

All generators search for a nearby point of the opposite class, then push the
candidate past the decision boundary by a small overshoot so validity is
decidable, and report the metric distance d(x, x_bar) as the explanatory
strength. The search is constrained to the unit hypercube; candidates whose
unconstrained optimum fell outside are flagged `clipped`.

Kinds
-----
* gradient      : projected-gradient descent on  lam * hinge(side * score)
                  + d(x, z), with geometric lam escalation on stall and a
                  final bisection refinement of the boundary crossing.
* bisection     : black-box line search. Opposite-class anchors come from a
                  reference dataset or random probes; each segment is
                  bisected to the class flip; optional refinement rounds
                  re-aim the segment along a finite-difference estimate of
                  the local score normal (score values only, no gradient
                  capability required).
* prototype     : the gradient objective plus a pull toward the centroid of
                  the nearest opposite-class reference points.
* linear-oracle : closed form for classifiers exposing hyperplane(); used as
                  the exactness baseline and for fast synthetic studies.

Results are deterministic given (config, classifier, x, rng). Candidate
ties are broken by lowest strength, then lexicographically smallest x_bar.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import Metric, as_instance, clip_to_cube, distance
from .errors import (
    DegenerateHyperplaneError,
    GradientNeedsDifferentiableError,
    NoPrototypesError,
)
from .models import Classifier, LinearModel
from .rng import RngHandle

GENERATOR_KINDS = ("gradient", "bisection", "prototype", "linear-oracle")

_BISECT_MAX_ITER = 80
_FD_NORMAL_STEP = 1e-6
_TIE_TOL = 1e-12
_STALL_PATIENCE = 8


@dataclass(frozen=True, eq=False)
class CounterfactualResult:
    """One generated counterfactual.

    `strength` is exactly distance(metric, x, x_bar) for valid results and
    +inf for failures (where x_bar is a copy of x).
    """

    x: np.ndarray
    x_bar: np.ndarray
    delta: np.ndarray
    valid: bool
    strength: float
    generator: str
    iterations: int
    clipped: bool = False


@dataclass(frozen=True, eq=False)
class CegaConfig:
    kind: str = "bisection"
    metric: Metric = field(default_factory=Metric.euclidean)
    max_iter: int = 200
    step_size: float = 0.05
    lam: float = 1.0
    proto_weight: float = 1.0
    overshoot: float = 1e-6
    n_directions: int = 20
    n_prototypes: int = 5
    refine_rounds: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.kind not in GENERATOR_KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}")
        if self.max_iter < 1 or self.n_directions < 1 or self.n_prototypes < 1:
            raise ValueError("iteration/direction/prototype counts must be >= 1")
        if self.overshoot <= 0 or self.step_size <= 0:
            raise ValueError("overshoot and step size must be positive")
        if self.lam < 0 or self.proto_weight < 0 or self.refine_rounds < 0:
            raise ValueError("lam, proto_weight and refine_rounds must be >= 0")


def _decide_value(s: float) -> int:
    return 1 if s >= 0.0 else -1


def _failure(cfg: CegaConfig, x: np.ndarray, iterations: int) -> CounterfactualResult:
    return CounterfactualResult(
        x=x.copy(), x_bar=x.copy(), delta=np.zeros_like(x), valid=False,
        strength=math.inf, generator=cfg.kind, iterations=iterations)


def _finish(cfg: CegaConfig, c: Classifier, x: np.ndarray, x_bar_raw: np.ndarray,
            iterations: int) -> CounterfactualResult:
    x_bar = clip_to_cube(x_bar_raw)
    clipped = bool(np.any(x_bar != x_bar_raw))
    valid = _decide_value(c.score(x_bar)) != _decide_value(c.score(x))
    if not valid:
        res = _failure(cfg, x, iterations)
        return replace(res, clipped=clipped)
    return CounterfactualResult(
        x=x.copy(), x_bar=x_bar, delta=x_bar - x, valid=True,
        strength=distance(cfg.metric, x, x_bar), generator=cfg.kind,
        iterations=iterations, clipped=clipped)


def generate(cfg: CegaConfig, c: Classifier, x, rng: RngHandle,
             reference: np.ndarray | None = None) -> CounterfactualResult:
    """Run the configured generator at instance x.

    `reference` is an optional (n, K) array of dataset points used to seed
    bisection anchors and prototype centroids. Failure to find any
    opposite-class point yields valid=False with a +inf strength sentinel
    (no exception).
    """
    x = as_instance(x, c.dim)
    if cfg.kind == "gradient":
        return _generate_descent(cfg, c, x, rng, prototype=None)
    if cfg.kind == "bisection":
        return _generate_bisection(cfg, c, x, rng, reference)
    if cfg.kind == "prototype":
        proto = _prototype_point(cfg, c, x, reference)
        return _generate_descent(cfg, c, x, rng, prototype=proto)
    w, b = c.hyperplane()
    return linear_oracle(w, b, cfg.metric, x, overshoot=cfg.overshoot)


# ---------------------------------------------------------------------------
# bisection


def _segment_bisect(c: Classifier, x: np.ndarray, anchors: np.ndarray,
                    side: int, tol: float = 1e-9):
    """Bisect segments x -> anchor to the class flip.

    Anchors must already be opposite class. Returns (t_hi, crossing points),
    where each crossing point has verified opposite class and the bracket
    width times the segment extent is <= tol per coordinate.
    """
    n = anchors.shape[0]
    lo = np.zeros(n)
    hi = np.ones(n)
    seg = anchors - x[None, :]
    extent = np.max(np.abs(seg), axis=1)
    extent[extent == 0.0] = 1.0
    for _ in range(_BISECT_MAX_ITER):
        if np.all((hi - lo) * extent <= tol):
            break
        mid = 0.5 * (lo + hi)
        pts = x[None, :] + mid[:, None] * seg
        opp = np.where(c.scores(pts) >= 0.0, 1, -1) != side
        hi = np.where(opp, mid, hi)
        lo = np.where(opp, lo, mid)
    return hi, x[None, :] + hi[:, None] * seg


def _pick_best(metric: Metric, x: np.ndarray, candidates: np.ndarray):
    """Lowest strength, ties (within 1e-12) broken lexicographically."""
    strengths = metric.pairwise_to(x, candidates)
    best = 0
    for i in range(1, candidates.shape[0]):
        if strengths[i] < strengths[best] - _TIE_TOL:
            best = i
        elif abs(strengths[i] - strengths[best]) <= _TIE_TOL:
            for a, b in zip(candidates[i], candidates[best]):
                if a < b:
                    best = i
                    break
                if a > b:
                    break
    return best, float(strengths[best])


def _opposite_anchors(cfg: CegaConfig, c: Classifier, x: np.ndarray, side: int,
                      rng: RngHandle, reference: np.ndarray | None) -> np.ndarray:
    pools = []
    if reference is not None and len(reference):
        ref = np.asarray(reference, dtype=np.float64)
        pools.append(ref[c.decides(ref) != side])
    if not pools or pools[0].shape[0] == 0:
        budget = max(128, 8 * cfg.n_directions)
        probes = rng.generator().random((budget, x.size))
        pools.append(probes[c.decides(probes) != side])
    pool = np.concatenate(pools, axis=0) if len(pools) > 1 else pools[0]
    if pool.shape[0] == 0:
        return pool
    order = np.argsort(cfg.metric.pairwise_to(x, pool), kind="stable")
    return pool[order[:cfg.n_directions]]


def _fd_normal(c: Classifier, z: np.ndarray, step: float) -> np.ndarray:
    k = z.size
    probes = np.repeat(z[None, :], 2 * k, axis=0)
    probes[np.arange(k), np.arange(k)] += step
    probes[k + np.arange(k), np.arange(k)] -= step
    s = c.scores(probes)
    return (s[:k] - s[k:]) / (2.0 * step)


def _generate_bisection(cfg: CegaConfig, c: Classifier, x: np.ndarray,
                        rng: RngHandle,
                        reference: np.ndarray | None) -> CounterfactualResult:
    side = _decide_value(c.score(x))
    anchors = _opposite_anchors(cfg, c, x, side, rng.child("probes"), reference)
    if anchors.shape[0] == 0:
        return _failure(cfg, x, 0)
    iterations = anchors.shape[0]
    _, crossings = _segment_bisect(c, x, anchors, side)
    best, _ = _pick_best(cfg.metric, x, crossings)
    z = crossings[best]
    seg_dir = _unit(anchors[best] - x)

    for _ in range(cfg.refine_rounds):
        normal = _fd_normal(c, z, _FD_NORMAL_STEP)
        nrm = float(np.linalg.norm(normal))
        if nrm < 1e-12:
            break
        u = -side * normal / nrm
        reach = 1.05 * float(np.linalg.norm(z - x)) + 4.0 * cfg.overshoot
        anchor = None
        for _try in range(3):
            cand = clip_to_cube(x + reach * u)
            if _decide_value(c.score(cand)) != side:
                anchor = cand
                break
            reach *= 2.0
        if anchor is None:
            break
        iterations += 1
        _, crossing = _segment_bisect(c, x, anchor[None, :], side)
        stacked = np.vstack([z[None, :], crossing])
        pick, _ = _pick_best(cfg.metric, x, stacked)
        if pick == 1:
            z = crossing[0]
            seg_dir = _unit(anchor - x)
        else:
            break

    return _finish(cfg, c, x, z + cfg.overshoot * seg_dir, iterations)


def _unit(v: np.ndarray) -> np.ndarray:
    nrm = float(np.linalg.norm(v))
    return v / nrm if nrm > 0 else v


# ---------------------------------------------------------------------------
# gradient / prototype descent


def _prototype_point(cfg: CegaConfig, c: Classifier, x: np.ndarray,
                     reference: np.ndarray | None) -> np.ndarray:
    if reference is None or len(reference) == 0:
        raise NoPrototypesError("prototype generator needs a reference dataset")
    ref = np.asarray(reference, dtype=np.float64)
    side = _decide_value(c.score(x))
    opposite = ref[c.decides(ref) != side]
    if opposite.shape[0] == 0:
        raise NoPrototypesError("no opposite-class reference points")
    order = np.argsort(cfg.metric.pairwise_to(x, opposite), kind="stable")
    return opposite[order[:cfg.n_prototypes]].mean(axis=0)


def _generate_descent(cfg: CegaConfig, c: Classifier, x: np.ndarray,
                      rng: RngHandle,
                      prototype: np.ndarray | None) -> CounterfactualResult:
    if not c.differentiable:
        raise GradientNeedsDifferentiableError(type(c).__name__)
    side = _decide_value(c.score(x))
    gen = rng.child("nudge").generator()
    m = cfg.metric
    lam = cfg.lam
    ramps = 0
    z = x.copy()
    last_inside = x.copy()
    best_margin = side * c.score(x)
    no_progress = 0
    iterations = 0
    flipped = None

    for _ in range(cfg.max_iter):
        iterations += 1
        s = c.score(z)
        if _decide_value(s) != side:
            flipped = z
            break
        last_inside = z
        g = lam * side * c.gradient(z) + m.gradient(x, z)
        if prototype is not None and cfg.proto_weight > 0.0:
            g = g + cfg.proto_weight * distance(m, prototype, z) \
                * m.gradient(prototype, z)
        if float(np.linalg.norm(g)) < 1e-12:
            u = gen.standard_normal(x.size)
            z_new = clip_to_cube(z + cfg.step_size * _unit(u))
        else:
            z_new = clip_to_cube(z - cfg.step_size * g)
        margin = side * c.score(z_new)
        # stall = margin creeping (progress below 1% of what remains) or the
        # iterate barely moving; either means the pull terms balance the flip
        # pressure short of the boundary, so escalate lam
        creeping = best_margin - margin < 0.01 * max(margin, 1e-9)
        pinned = float(np.max(np.abs(z_new - z))) < 0.1 * cfg.step_size
        best_margin = min(best_margin, margin)
        if creeping or pinned:
            no_progress += 1
            if no_progress >= _STALL_PATIENCE:
                if ramps >= 10:
                    return _failure(cfg, x, iterations)
                lam = lam * 2.0
                ramps += 1
                no_progress = 0
        else:
            no_progress = 0
        z = z_new

    if flipped is None:
        return _failure(cfg, x, iterations)
    _, crossing = _segment_bisect(c, last_inside, flipped[None, :], side)
    direction = _unit(flipped - last_inside)
    return _finish(cfg, c, x, crossing[0] + cfg.overshoot * direction, iterations)


# ---------------------------------------------------------------------------
# closed form


def linear_oracle(w, b: float, m: Metric, x,
                  overshoot: float = 1e-6) -> CounterfactualResult:
    """Exact nearest opposite-class point for the hyperplane w.x + b = 0.

    Euclidean metric only. The projection is pushed past the plane by
    `overshoot` against x's class; if that point leaves the hypercube the
    result is clipped (and may lose validity, reported honestly).
    """
    w = np.asarray(w, dtype=np.float64)
    if float(np.linalg.norm(w)) == 0.0:
        raise DegenerateHyperplaneError("w = 0")
    if m.kind != "euclidean":
        raise ValueError("linear_oracle requires the euclidean metric")
    model = LinearModel(w, b)
    x = as_instance(x, model.dim)
    s = model.score(x)
    side = _decide_value(s)
    u = w / float(np.linalg.norm(w))
    projection = x - (s / float(np.linalg.norm(w))) * u
    raw = projection - side * overshoot * u
    cfg = CegaConfig(kind="linear-oracle", metric=m, overshoot=overshoot)
    return _finish(cfg, model, x, raw, iterations=0)
