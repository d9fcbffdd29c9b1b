"""Domain primitives: instances, metrics, weighting functions, samplers.

Instances are plain 1-D float64 numpy arrays living in the unit hypercube
[0, 1]^K; :func:`as_instance` validates and coerces. Balls are Euclidean.

Metric equivalence constants (C_L * d <= d_E <= C_U * d, d_E Euclidean) are
derived analytically per metric kind and stored at construction:

* euclidean:   d = d_E, so C_L = C_U = 1.
* l1:          d_E <= d_1 <= sqrt(K) * d_E, hence C_L = 1/sqrt(K), C_U = 1.
* weighted-l2: sqrt(min w) * d_E <= d_w <= sqrt(max w) * d_E, hence
               C_L = 1/sqrt(max w), C_U = 1/sqrt(min w).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatchError,
    InvalidRadiusError,
    NegativeDistanceError,
    RejectionBudgetError,
)
from .rng import RngHandle

METRIC_KINDS = ("euclidean", "weighted-l2", "l1")
PHI_KINDS = ("inverse-shifted", "exponential-decay")

_CUBE_TOL = 1e-9


def as_instance(features, k: int | None = None) -> np.ndarray:
    """Coerce to a 1-D float64 array and validate the instance contract.

    Raises
    ------
    DimensionMismatchError
        If `k` is given and the length differs.
    ValueError
        On non-finite values or coordinates outside [0, 1].
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"instance must be 1-D, got shape {x.shape}")
    if k is not None and x.shape[0] != k:
        raise DimensionMismatchError(f"expected K={k}, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("instance has non-finite coordinates")
    if np.any(x < -_CUBE_TOL) or np.any(x > 1.0 + _CUBE_TOL):
        raise ValueError("instance coordinates must lie in [0, 1]")
    return np.clip(x, 0.0, 1.0)


def clip_to_cube(x: np.ndarray) -> np.ndarray:
    return np.clip(x, 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class Metric:
    """A distance on [0,1]^K with stored Euclidean-equivalence constants."""

    kind: str
    weights: np.ndarray | None = None
    dim: int | None = None
    c_lower: float = 1.0
    c_upper: float = 1.0

    @classmethod
    def euclidean(cls, dim: int | None = None) -> "Metric":
        return cls(kind="euclidean", dim=dim, c_lower=1.0, c_upper=1.0)

    @classmethod
    def l1(cls, dim: int) -> "Metric":
        if dim < 1:
            raise ValueError("l1 metric needs a positive dimension")
        return cls(kind="l1", dim=dim, c_lower=1.0 / math.sqrt(dim), c_upper=1.0)

    @classmethod
    def weighted_l2(cls, weights) -> "Metric":
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a non-empty 1-D sequence")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be positive finite reals")
        return cls(
            kind="weighted-l2",
            weights=w,
            dim=int(w.size),
            c_lower=1.0 / math.sqrt(float(w.max())),
            c_upper=1.0 / math.sqrt(float(w.min())),
        )

    @classmethod
    def from_name(cls, name: str, dim: int) -> "Metric":
        """Build a metric from the report-facing names 'l1' / 'l2'."""
        if name in ("l2", "euclidean"):
            return cls.euclidean(dim)
        if name == "l1":
            return cls.l1(dim)
        raise ValueError(f"unknown metric name: {name!r}")

    def _check_dims(self, x: np.ndarray, y: np.ndarray) -> None:
        if x.shape != y.shape or x.ndim != 1:
            raise DimensionMismatchError(f"{x.shape} vs {y.shape}")
        if self.dim is not None and x.shape[0] != self.dim:
            raise DimensionMismatchError(
                f"metric dim {self.dim}, instance dim {x.shape[0]}")
        if self.kind == "weighted-l2" and self.weights.shape[0] != x.shape[0]:
            raise DimensionMismatchError(
                f"weight length {self.weights.shape[0]}, instance dim {x.shape[0]}")

    def __call__(self, x, y) -> float:
        return distance(self, x, y)

    def pairwise_to(self, x: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Distances from one point `x` to each row of `ys`."""
        x = np.asarray(x, dtype=np.float64)
        ys = np.asarray(ys, dtype=np.float64)
        if ys.ndim != 2 or ys.shape[1] != x.shape[0]:
            raise DimensionMismatchError(f"{x.shape} vs rows of {ys.shape}")
        diff = ys - x[None, :]
        if self.kind == "euclidean":
            return np.sqrt(np.sum(diff * diff, axis=1))
        if self.kind == "l1":
            return np.sum(np.abs(diff), axis=1)
        return np.sqrt(np.sum(self.weights[None, :] * diff * diff, axis=1))

    def gradient(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        """(Sub)gradient of d(x, z) with respect to z; zero at z == x."""
        self._check_dims(np.asarray(x, float), np.asarray(z, float))
        diff = np.asarray(z, float) - np.asarray(x, float)
        if self.kind == "l1":
            return np.sign(diff)
        if self.kind == "euclidean":
            nrm = float(np.sqrt(np.sum(diff * diff)))
            return diff / nrm if nrm > 0 else np.zeros_like(diff)
        wdiff = self.weights * diff
        nrm = float(np.sqrt(np.sum(wdiff * diff)))
        return wdiff / nrm if nrm > 0 else np.zeros_like(diff)


def distance(m: Metric, x, y) -> float:
    """Evaluate the metric; raises DimensionMismatchError on shape conflicts."""
    xv = np.asarray(x, dtype=np.float64)
    yv = np.asarray(y, dtype=np.float64)
    m._check_dims(xv, yv)
    diff = xv - yv
    if m.kind == "euclidean":
        return float(np.sqrt(np.sum(diff * diff)))
    if m.kind == "l1":
        return float(np.sum(np.abs(diff)))
    return float(np.sqrt(np.sum(m.weights * diff * diff)))


@dataclass(frozen=True)
class PhiFunction:
    """Strictly decreasing positive weight applied to perturbation distances."""

    kind: str
    epsilon: float = 1e-6
    rate: float = 1.0

    @classmethod
    def inverse_shifted(cls, epsilon: float = 1e-6) -> "PhiFunction":
        if epsilon <= 0:
            raise ValueError("epsilon must be positive")
        return cls(kind="inverse-shifted", epsilon=epsilon)

    @classmethod
    def exponential_decay(cls, rate: float = 1.0) -> "PhiFunction":
        if rate <= 0:
            raise ValueError("rate must be positive")
        return cls(kind="exponential-decay", rate=rate)

    def __call__(self, t) -> float:
        return phi_eval(self, t)

    def eval_many(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        if np.any(t < 0):
            raise NegativeDistanceError(f"min t = {t.min()}")
        if self.kind == "inverse-shifted":
            return 1.0 / (t + self.epsilon)
        return np.exp(-self.rate * t)


def phi_eval(p: PhiFunction, t: float) -> float:
    """Evaluate phi at a non-negative distance t."""
    t = float(t)
    if t < 0:
        raise NegativeDistanceError(f"t = {t}")
    if p.kind == "inverse-shifted":
        return 1.0 / (t + p.epsilon)
    if p.kind == "exponential-decay":
        return math.exp(-p.rate * t)
    raise ValueError(f"unknown phi kind: {p.kind!r}")


def _uniform_in_ball(center: np.ndarray, r: float, n: int,
                     gen: np.random.Generator) -> np.ndarray:
    """Exact uniform draws in the Euclidean ball B(center, r) (no cube clip)."""
    k = center.shape[0]
    g = gen.standard_normal((n, k))
    norms = np.sqrt(np.sum(g * g, axis=1))
    norms[norms == 0.0] = 1.0
    radii = r * gen.random(n) ** (1.0 / k)
    return center[None, :] + g * (radii / norms)[:, None]


def sample_uniform_ball(center, r: float, k: int, rng: RngHandle,
                        max_batches: int = 1000) -> np.ndarray:
    """Draw k points uniform on B(center, r) ∩ [0,1]^K.

    Uses the normalized-Gaussian-times-radius^(1/K) construction for exact
    uniformity in the ball, then rejects points outside the hypercube, which
    leaves the law uniform on the intersection.

    Parameters
    ----------
    center : array-like in [0,1]^K
    r : float
        Ball radius, must be positive.
    k : int
        Number of samples.
    rng : RngHandle

    Returns
    -------
    (k, K) float64 array.
    """
    if r <= 0:
        raise InvalidRadiusError(f"r = {r}")
    if k < 1:
        raise ValueError("k must be >= 1")
    c = as_instance(center)
    gen = rng.generator()
    out = np.empty((k, c.shape[0]), dtype=np.float64)
    got = 0
    batch = max(2 * k, 256)
    for _ in range(max_batches):
        pts = _uniform_in_ball(c, r, batch, gen)
        ok = np.all((pts >= 0.0) & (pts <= 1.0), axis=1)
        pts = pts[ok]
        take = min(k - got, pts.shape[0])
        out[got:got + take] = pts[:take]
        got += take
        if got == k:
            return out
    raise RejectionBudgetError(
        f"uniform-ball rejection stalled after {max_batches} batches")


def sample_gaussian_in_ball(anchor, mean, sigma: float, r: float,
                            max_rejects: int, rng: RngHandle) -> np.ndarray:
    """One draw from N(mean, sigma^2 I) conditioned on B(anchor, r) ∩ [0,1]^K.

    Pure rejection: propose from the Gaussian, accept the first point inside
    both the ball and the cube. After `max_rejects` consecutive rejections a
    RejectionBudgetError is raised, which usually signals sigma >> r.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if r <= 0:
        raise InvalidRadiusError(f"r = {r}")
    a = as_instance(anchor)
    m = as_instance(mean)
    if a.shape != m.shape:
        raise DimensionMismatchError(f"{a.shape} vs {m.shape}")
    gen = rng.generator()
    for _ in range(max_rejects):
        x = m + sigma * gen.standard_normal(a.shape[0])
        if np.all(x >= 0.0) and np.all(x <= 1.0) and \
                float(np.sqrt(np.sum((x - a) ** 2))) <= r:
            return x
    raise RejectionBudgetError(f"{max_rejects} consecutive rejections")
