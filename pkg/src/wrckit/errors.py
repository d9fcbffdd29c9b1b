"""Exception hierarchy for wrckit.

Every error carries a stable machine-readable token as the first part of its
message so callers (and the CLI exit-code mapping) can dispatch without string
matching on prose.
"""


class WrckitError(Exception):
    """Base class for all wrckit errors."""

    token = "wrckit-error"

    def __init__(self, detail: str = ""):
        msg = self.token if not detail else f"{self.token}: {detail}"
        super().__init__(msg)


class DimensionMismatchError(WrckitError):
    token = "dimension-mismatch"


class InvalidRadiusError(WrckitError):
    token = "invalid-radius"


class NegativeDistanceError(WrckitError):
    token = "negative-distance"


class RejectionBudgetError(WrckitError):
    token = "rejection-budget-exhausted"


class TrainingDivergedError(WrckitError):
    token = "training-diverged"

    def __init__(self, epoch: int, detail: str = ""):
        self.epoch = epoch
        super().__init__(f"epoch={epoch}" + (f" {detail}" if detail else ""))


class NotDifferentiableError(WrckitError):
    token = "not-differentiable"


class GradientNeedsDifferentiableError(WrckitError):
    token = "gradient-generator-needs-differentiable"


class NoPrototypesError(WrckitError):
    token = "no-prototypes"


class DegenerateHyperplaneError(WrckitError):
    token = "degenerate-hyperplane"


class CfUnobtainableError(WrckitError):
    token = "cf-unobtainable"


class EstimateUndefinedError(WrckitError):
    token = "estimate-undefined"


class DataError(WrckitError):
    token = "data-error"


class EmptyDatasetError(DataError):
    token = "empty-dataset"
