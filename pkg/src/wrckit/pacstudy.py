"""Synthetic smooth-boundary problems and the WRC convergence-gap probe.

A problem lives on [0,1]^(l+1): the ground-truth boundary is the graph of a
smooth function f(u) of the first l coordinates, built as a sum of cosine
modes with polynomially decaying amplitudes (higher smoothness target gamma
means faster decay); labels are drawn from a margin-noise profile eta that
crosses 1/2 exactly on the boundary with a power ramp of exponent 1/alpha.
The mass near the boundary then satisfies Pr(|eta - 1/2| <= t) <= c * t^alpha
for t <= t0 with c = 2^(alpha+1) * t0, which `certify_margin_condition`
checks by Monte Carlo.

`wrc_gap` measures |E_x WRC(C, h_T) - E_x WRC(C, h*)| for a learner trained
on T samples, using the normalized (mean-times-volume) WRC variant over
shared evaluation points and shared ball-sample streams (common random
numbers), so the gap of an injected Bayes classifier is exactly zero and
paired standard errors stay tight. `gap_curve` sweeps a T grid, fits a
log-log slope to the mean gaps and reports a Spearman monotonicity statistic
over all (T, gap) cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .cega import CegaConfig
from .errors import EstimateUndefinedError
from .evalharness import Dataset
from .models import BayesOracle, Classifier, TrainConfig, train_logistic, train_mlp
from .rng import RngHandle
from .robustness import RobustnessConfig, discrete_wrc


@dataclass(frozen=True, eq=False)
class SmoothBoundary:
    """f(u) = base + sum_j a_j cos(pi * j * <d_j, u>) with |range - base| <= 0.4."""

    dim: int                  # l
    gamma: float
    amplitudes: np.ndarray    # (J,)
    directions: np.ndarray    # (J, l), unit rows
    norm_bound: float
    base: float = 0.5

    @property
    def flat_level(self) -> float | None:
        if self.amplitudes.size == 0 or not np.any(self.amplitudes):
            return self.base
        return None

    def heights(self, U: np.ndarray) -> np.ndarray:
        U = np.asarray(U, dtype=np.float64)
        if self.amplitudes.size == 0:
            return np.full(U.shape[0], self.base)
        j = np.arange(1, self.amplitudes.size + 1)
        args = math.pi * j[None, :] * (U @ self.directions.T)
        return self.base + np.cos(args) @ self.amplitudes

    def height_gradient(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        if self.amplitudes.size == 0:
            return np.zeros(self.dim)
        j = np.arange(1, self.amplitudes.size + 1)
        args = math.pi * j * (self.directions @ u)
        coef = -self.amplitudes * math.pi * j * np.sin(args)
        return coef @ self.directions

    def holder_proxy(self, grid_n: int = 256) -> float:
        """Max finite-difference directional derivative up to order floor(gamma).

        Probes along each mode direction and each coordinate axis; an
        empirical lower bound on the smoothness norm, to be compared with
        `norm_bound`.
        """
        orders = max(int(math.floor(self.gamma)), 1)
        dirs = [np.eye(self.dim)[i] for i in range(self.dim)]
        dirs += [d for d in np.atleast_2d(self.directions)] \
            if self.amplitudes.size else []
        worst = 0.0
        h = 1.0 / grid_n
        ts = np.linspace(0.0, 1.0, grid_n)
        for d in dirs:
            base_pt = np.full(self.dim, 0.5) - 0.5 * d
            pts = base_pt[None, :] + ts[:, None] * d[None, :]
            vals = self.heights(np.clip(pts, 0.0, 1.0))
            for _ in range(orders):
                vals = np.diff(vals) / h
                worst = max(worst, float(np.max(np.abs(vals))))
        return worst


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """eta(x) = 1/2 + 1/2 * sign(g) * min(1, |g|/t0)^(1/alpha), g the boundary gap."""

    alpha: float
    scale: float              # c in the margin condition
    t0: float
    boundary: SmoothBoundary

    def eta(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        g = X[:, -1] - self.boundary.heights(X[:, :-1])
        ramp = np.minimum(1.0, np.abs(g) / self.t0) ** (1.0 / self.alpha)
        return 0.5 + 0.5 * np.sign(g) * ramp


@dataclass(frozen=True, eq=False)
class Problem:
    boundary: SmoothBoundary
    noise: NoiseModel
    oracle: BayesOracle
    l: int

    @property
    def k(self) -> int:
        return self.l + 1


def make_problem(l: int, gamma: float, alpha: float, rng: RngHandle,
                 n_modes: int = 8, amp_scale: float = 0.25,
                 decay_margin: float = 1.0, t0: float = 0.2,
                 flat: bool = False, max_retries: int = 50) -> Problem:
    """Draw a smooth-boundary problem with a certified margin-noise profile.

    Amplitude envelopes are amp_scale * j^(-gamma - l/2 - decay_margin);
    draws are rejected until the boundary stays inside [0.1, 0.9] (the sum
    of |a_j| must not exceed 0.4).
    """
    if l < 1 or gamma <= 0 or alpha <= 0:
        raise ValueError("need l >= 1, gamma > 0, alpha > 0")
    gen = rng.child("boundary").generator()
    j = np.arange(1, n_modes + 1, dtype=np.float64)
    envelope = amp_scale * j ** (-(gamma + l / 2.0 + decay_margin))
    for _ in range(max_retries):
        if flat:
            amplitudes = np.zeros(0)
            directions = np.zeros((0, l))
        else:
            amplitudes = envelope * gen.uniform(-1.0, 1.0, size=n_modes)
            if l == 1:
                directions = np.ones((n_modes, 1))
            else:
                raw = gen.standard_normal((n_modes, l))
                directions = raw / np.linalg.norm(raw, axis=1, keepdims=True)
        if float(np.sum(np.abs(amplitudes))) <= 0.4:
            break
    else:
        raise ValueError("could not draw an interior boundary; "
                         "lower amp_scale or raise decay_margin")

    total = float(np.sum(np.abs(amplitudes)))
    floor_g = max(int(math.floor(gamma)), 1)
    if amplitudes.size:
        deriv = max(float(np.sum(np.abs(amplitudes) * (math.pi * j) ** m))
                    for m in range(floor_g + 1))
        holder = 2.0 * float(np.sum(np.abs(amplitudes) * (math.pi * j) ** gamma))
    else:
        deriv, holder = 0.5 + total, 0.0
    boundary = SmoothBoundary(dim=l, gamma=gamma, amplitudes=amplitudes,
                              directions=directions,
                              norm_bound=0.5 + total + deriv + holder)
    noise = NoiseModel(alpha=alpha, scale=2.0 ** (alpha + 1.0) * t0, t0=t0,
                       boundary=boundary)
    return Problem(boundary=boundary, noise=noise,
                   oracle=BayesOracle(boundary), l=l)


def sample_labeled(problem: Problem, T: int, rng: RngHandle) -> Dataset:
    """T instances uniform on the cube, labels +1 with probability eta(x)."""
    if T < 1:
        raise ValueError("T must be >= 1")
    gen = rng.generator()
    X = gen.random((T, problem.k))
    eta = problem.noise.eta(X)
    y = np.where(gen.random(T) < eta, 1, -1).astype(np.int64)
    return Dataset(name="synthetic-smooth-boundary", X=X, y=y,
                   feature_names=tuple(f"x{i}" for i in range(problem.k)))


@dataclass(frozen=True)
class MarginCheck:
    t: float
    estimate: float
    bound: float
    ok: bool


def certify_margin_condition(problem: Problem, rng: RngHandle,
                             ts: tuple[float, ...] | None = None,
                             n_mc: int = 50_000,
                             headroom: float = 1.1) -> list[MarginCheck]:
    """Monte-Carlo check of Pr(|eta - 1/2| <= t) <= headroom * c * t^alpha."""
    noise = problem.noise
    if ts is None:
        ts = (noise.t0 / 4.0, noise.t0 / 2.0, noise.t0)
    X = rng.generator().random((n_mc, problem.k))
    margin = np.abs(noise.eta(X) - 0.5)
    out = []
    for t in ts:
        est = float(np.mean(margin <= t))
        bound = headroom * noise.scale * t ** noise.alpha
        out.append(MarginCheck(t=t, estimate=est, bound=bound, ok=est <= bound))
    return out


# ---------------------------------------------------------------------------
# learners


def logistic_learner(base: TrainConfig | None = None):
    """Callable (dataset, rng) -> LinearModel for the gap study."""
    cfg = base if base is not None else TrainConfig(
        epochs=80, batch_size=64, learning_rate=0.5, val_fraction=0.0)

    def learn(ds: Dataset, rng: RngHandle) -> Classifier:
        model, _ = train_logistic(ds, replace(cfg, seed=rng.child("fit").stream))
        return model

    return learn


def mlp_learner(base: TrainConfig | None = None):
    cfg = base if base is not None else TrainConfig(val_fraction=0.0)

    def learn(ds: Dataset, rng: RngHandle) -> Classifier:
        model, _ = train_mlp(ds, replace(cfg, seed=rng.child("fit").stream))
        return model

    return learn


def bayes_learner(problem: Problem):
    """Injects the ground-truth classifier; the gap must then be exactly 0."""

    def learn(ds: Dataset, rng: RngHandle) -> Classifier:
        return problem.oracle

    return learn


# ---------------------------------------------------------------------------
# the gap and its curve


@dataclass(frozen=True)
class GapResult:
    gap: float
    stderr: float
    mean_trained: float
    mean_bayes: float
    n_used: int
    n_dropped: int


def wrc_gap(problem: Problem, learner, gen: CegaConfig,
            rob: RobustnessConfig, T: int, n_eval_x: int,
            rng: RngHandle) -> GapResult:
    """|E_x WRC(C, h_T) - E_x WRC(C, h*)| with paired standard error."""
    if T < 1 or n_eval_x < 1:
        raise ValueError("T and n_eval_x must be >= 1")
    ds = sample_labeled(problem, T, rng.child("data"))
    h_t = learner(ds, rng.child("learn"))
    xs = rng.child("eval").generator().random((n_eval_x, problem.k))

    vals_t, vals_s = [], []
    dropped = 0
    for i in range(n_eval_x):
        handle = rng.child("est", i)
        try:
            et = discrete_wrc(rob, h_t, gen, xs[i], handle, normalized=True)
            es = discrete_wrc(rob, problem.oracle, gen, xs[i], handle,
                              normalized=True)
        except EstimateUndefinedError:
            dropped += 1
            continue
        vals_t.append(et.value)
        vals_s.append(es.value)
    if not vals_t:
        raise EstimateUndefinedError("every evaluation instance undefined")
    diffs = np.asarray(vals_t) - np.asarray(vals_s)
    stderr = float(np.std(diffs, ddof=1) / math.sqrt(diffs.size)) \
        if diffs.size > 1 else 0.0
    return GapResult(gap=abs(float(np.mean(diffs))), stderr=stderr,
                     mean_trained=float(np.mean(vals_t)),
                     mean_bayes=float(np.mean(vals_s)),
                     n_used=diffs.size, n_dropped=dropped)


@dataclass(frozen=True, eq=False)
class GapCurve:
    t_grid: tuple[int, ...]
    gaps: np.ndarray          # (len(grid), repeats)
    stderrs: np.ndarray       # per-cell paired stderr
    mean_gaps: np.ndarray
    mean_stderrs: np.ndarray  # std over repeats / sqrt(repeats)
    slope: float | None
    spearman: float | None
    degenerate: bool
    repeats: int
    seed: int


def _average_ranks(v: np.ndarray) -> np.ndarray:
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.size, dtype=np.float64)
    ranks[order] = np.arange(1, v.size + 1)
    for val in np.unique(v):
        mask = v == val
        if np.sum(mask) > 1:
            ranks[mask] = np.mean(ranks[mask])
    return ranks


def spearman_rho(x: np.ndarray, y: np.ndarray) -> float | None:
    """Rank correlation with average ranks for ties; None if degenerate."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    rx, ry = _average_ranks(x), _average_ranks(y)
    sx, sy = np.std(rx), np.std(ry)
    if sx == 0.0 or sy == 0.0:
        return None
    return float(np.mean((rx - np.mean(rx)) * (ry - np.mean(ry))) / (sx * sy))


def gap_curve(problem: Problem, learner, gen: CegaConfig,
              rob: RobustnessConfig, t_grid, repeats: int,
              rng: RngHandle, n_eval_x: int = 64) -> GapCurve:
    """Sweep T over the grid with `repeats` independent cells per T."""
    t_grid = tuple(int(t) for t in t_grid)
    if len(t_grid) < 3 or any(b <= a for a, b in zip(t_grid, t_grid[1:])):
        raise ValueError("T grid must be strictly increasing with >= 3 points")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    gaps = np.zeros((len(t_grid), repeats))
    errs = np.zeros_like(gaps)
    for gi, T in enumerate(t_grid):
        for rep in range(repeats):
            res = wrc_gap(problem, learner, gen, rob, T, n_eval_x,
                          rng.child("cell", T, rep))
            gaps[gi, rep] = res.gap
            errs[gi, rep] = res.stderr
    mean_gaps = gaps.mean(axis=1)
    mean_stderrs = gaps.std(axis=1, ddof=1) / math.sqrt(repeats) \
        if repeats > 1 else np.zeros(len(t_grid))

    degenerate = bool(np.any(mean_gaps <= 0.0)) or float(np.ptp(gaps)) == 0.0
    slope = None
    if not np.any(mean_gaps <= 0.0):
        slope = float(np.polyfit(np.log(np.asarray(t_grid, dtype=float)),
                                 np.log(mean_gaps), 1)[0])
    t_cells = np.repeat(np.asarray(t_grid, dtype=float), repeats)
    rho = spearman_rho(t_cells, gaps.ravel())
    return GapCurve(t_grid=t_grid, gaps=gaps, stderrs=errs,
                    mean_gaps=mean_gaps, mean_stderrs=mean_stderrs,
                    slope=slope, spearman=rho,
                    degenerate=degenerate or rho is None,
                    repeats=repeats, seed=rng.seed)


def write_gap_curve_csv(curve: GapCurve, path) -> None:
    """Rows `T,repeat,gap,stderr` plus a final `summary` row carrying the
    fitted slope (gap column) and Spearman statistic (stderr column)."""
    lines = ["T,repeat,gap,stderr"]
    for gi, T in enumerate(curve.t_grid):
        for rep in range(curve.repeats):
            lines.append(f"{T},{rep},{curve.gaps[gi, rep]!r},"
                         f"{curve.stderrs[gi, rep]!r}")
    slope = "" if curve.slope is None else repr(curve.slope)
    rho = "" if curve.spearman is None else repr(curve.spearman)
    lines.append(f"summary,,{slope},{rho}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
