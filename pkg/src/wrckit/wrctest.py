"""WRC-Test predicate and the robust-counterfactual substitute search.

The search evaluates the discrete WRC at the current point; while it is
>= tau and steps remain, it draws a substitute from a Gaussian centered at
the current point, rejected into B(anchor, r) ∩ [0,1]^K, and moves there.
One substitute draw counts as one step (the printed loop never advances its
own step counter, which would make the budget unreachable). A pass requires
both WRC < tau and steps < max_steps; exhausting the budget fails even if
the last substitute would have passed.

Under the default `anchor-fixed` policy the rejection ball stays centered on
the ORIGINAL instance, so the final point is guaranteed within r of the
user's input. The literal reading, re-centering the ball on every accepted
substitute (which permits unbounded drift), is available as `recentering`.

Determinism: the WRC estimate at trajectory point j consumes the stream
rng.child("wrc", j) and the draw leaving point j consumes rng.child("draw", j),
so any prefix of the search is reproducible from the handle alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cega import CegaConfig, CounterfactualResult
from .core import as_instance, sample_gaussian_in_ball
from .errors import EstimateUndefinedError, RejectionBudgetError
from .models import Classifier
from .rng import RngHandle
from .robustness import RobustnessConfig, WrcEstimate, discrete_wrc

BALL_POLICIES = ("anchor-fixed", "recentering")


@dataclass(frozen=True, eq=False)
class WrcTestConfig:
    tau: float
    robustness: RobustnessConfig
    max_steps: int = 30
    sigma: float | None = None      # defaults to r / 3
    r: float | None = None          # defaults to robustness.r
    policy: str = "anchor-fixed"
    max_rejects: int = 10_000

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.sigma is not None and self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.r is not None and self.r <= 0:
            raise ValueError("r must be positive")
        if self.policy not in BALL_POLICIES:
            raise ValueError(f"unknown ball policy {self.policy!r}")

    @property
    def ball_radius(self) -> float:
        return self.r if self.r is not None else self.robustness.r

    @property
    def gaussian_sigma(self) -> float:
        return self.sigma if self.sigma is not None else self.ball_radius / 3.0


@dataclass(frozen=True, eq=False)
class WrcTestOutcome:
    passed: bool
    x_final: np.ndarray
    steps: int
    trajectory: tuple[tuple[np.ndarray, float], ...]
    counterfactual: CounterfactualResult | None = None
    failure_reason: str | None = None

    def to_record(self) -> dict:
        """JSON-serializable summary of the outcome."""
        rec = {
            "passed": self.passed,
            "steps": self.steps,
            "x_final": [float(v) for v in self.x_final],
            "wrc_trace": [float(w) for _, w in self.trajectory],
        }
        if self.counterfactual is not None:
            cf = self.counterfactual
            rec["counterfactual"] = {
                "x_bar": [float(v) for v in cf.x_bar],
                "strength": float(cf.strength),
                "valid": cf.valid,
                "clipped": cf.clipped,
            }
        if self.failure_reason is not None:
            rec["failure_reason"] = self.failure_reason
        return rec


def wrc_test(cfg: WrcTestConfig, c: Classifier, gen: CegaConfig, x,
             rng: RngHandle,
             reference: np.ndarray | None = None) -> tuple[bool, WrcEstimate]:
    """Pure predicate: does the discrete WRC at x stay within tau?

    Propagates EstimateUndefinedError.
    """
    est = discrete_wrc(cfg.robustness, c, gen, x, rng, reference=reference)
    return est.value <= cfg.tau, est


def find_robust_counterfactual(cfg: WrcTestConfig, c: Classifier,
                               gen: CegaConfig, x, rng: RngHandle,
                               reference: np.ndarray | None = None
                               ) -> WrcTestOutcome:
    """Gaussian-resampling search for a substitute instance passing the test."""
    anchor = as_instance(x, c.dim)
    current = anchor
    radius = cfg.ball_radius
    sigma = cfg.gaussian_sigma
    steps = 0
    trajectory: list[tuple[np.ndarray, float]] = []

    while True:
        try:
            est = discrete_wrc(cfg.robustness, c, gen, current,
                               rng.child("wrc", steps), reference=reference)
        except EstimateUndefinedError:
            return WrcTestOutcome(
                passed=False, x_final=current, steps=steps,
                trajectory=tuple(trajectory),
                failure_reason="estimate-undefined")
        trajectory.append((current.copy(), est.value))

        if est.value < cfg.tau:
            if steps < cfg.max_steps and est.cf_x.valid:
                return WrcTestOutcome(
                    passed=True, x_final=current, steps=steps,
                    trajectory=tuple(trajectory), counterfactual=est.cf_x)
            reason = "max-steps-reached" if steps >= cfg.max_steps \
                else "counterfactual-invalid"
            return WrcTestOutcome(
                passed=False, x_final=current, steps=steps,
                trajectory=tuple(trajectory), failure_reason=reason)

        if steps >= cfg.max_steps:
            return WrcTestOutcome(
                passed=False, x_final=current, steps=steps,
                trajectory=tuple(trajectory),
                failure_reason="max-steps-reached")

        ball_anchor = anchor if cfg.policy == "anchor-fixed" else current
        try:
            current = sample_gaussian_in_ball(
                ball_anchor, current, sigma, radius, cfg.max_rejects,
                rng.child("draw", steps))
        except RejectionBudgetError:
            return WrcTestOutcome(
                passed=False, x_final=current, steps=steps,
                trajectory=tuple(trajectory),
                failure_reason="rejection-budget-exhausted")
        steps += 1
