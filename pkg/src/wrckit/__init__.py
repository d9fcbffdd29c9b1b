"""wrckit: counterfactual explanations with explanatory-strength robustness.

Generates counterfactuals for tabular binary classifiers, measures how
stable their explanatory strength is under input perturbation (the WRC/SRC
functionals), searches for substitute instances whose counterfactuals pass a
robustness threshold, and probes how the population WRC of a trained model
converges to that of the ground-truth classifier as training data grows.
"""

from .cega import CegaConfig, CounterfactualResult, generate, linear_oracle
from .core import (Metric, PhiFunction, as_instance, distance, phi_eval,
                   sample_gaussian_in_ball, sample_uniform_ball)
from .errors import WrckitError
from .evalharness import (Dataset, EvalProtocol, EvalReport, cost, ingest_csv,
                          normalize, run_table, validity)
from .lof import lof_scores, lof_scores_bruteforce
from .models import (BayesOracle, Classifier, LinearModel, MlpModel,
                     TrainConfig, finite_diff_check, load_model, save_model,
                     train_logistic, train_mlp)
from .pacstudy import (GapCurve, certify_margin_condition, gap_curve,
                       make_problem, sample_labeled, wrc_gap)
from .rng import RngHandle
from .robustness import (RobustnessConfig, WrcEstimate, delta_src, delta_tilde,
                         discrete_src, discrete_wrc, expected_wrc)
from .synthdata import SYNTHETIC_NAMES, synthetic_dataset
from .wrctest import WrcTestConfig, WrcTestOutcome, find_robust_counterfactual, wrc_test

__version__ = "0.1.0"

__all__ = [
    "BayesOracle", "CegaConfig", "Classifier", "CounterfactualResult",
    "Dataset", "EvalProtocol", "EvalReport", "GapCurve", "LinearModel",
    "Metric", "MlpModel", "PhiFunction", "RngHandle", "RobustnessConfig",
    "SYNTHETIC_NAMES", "TrainConfig", "WrcEstimate", "WrcTestConfig",
    "WrcTestOutcome", "WrckitError", "as_instance", "certify_margin_condition",
    "cost", "delta_src", "delta_tilde", "discrete_src", "discrete_wrc",
    "distance", "expected_wrc", "find_robust_counterfactual",
    "finite_diff_check", "gap_curve", "generate", "ingest_csv",
    "linear_oracle", "load_model", "lof_scores", "lof_scores_bruteforce",
    "make_problem", "normalize", "phi_eval", "run_table",
    "sample_gaussian_in_ball", "sample_labeled", "sample_uniform_ball",
    "save_model", "synthetic_dataset", "train_logistic", "train_mlp",
    "validity", "wrc_gap", "wrc_test",
]
