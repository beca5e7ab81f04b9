"""Test input prioritization by certified movement cost in feature space."""

__version__ = "0.1.0"

from .centers import center_gap, class_center, regression_center
from .data import Dataset, load_dataset, save_dataset
from .gevt import WeibullFit, fit_reverse_weibull, gev_cdf, lipschitz_estimate
from .metrics import deepgini_score, genrew, rauc_classification, rauc_regression, robr, welch_t_test
from .model import Layer, Model, ModelSignature, load_model, save_model
from .prioritizer import CertPriConfig, PrioritizationResult, movement_cost, prioritize, soundness_probe
from .sampling import BallSpec, sample, sample_batch

__all__ = [
    "BallSpec", "CertPriConfig", "Dataset", "Layer", "Model", "ModelSignature", "PrioritizationResult",
    "WeibullFit", "center_gap", "class_center", "deepgini_score", "fit_reverse_weibull", "genrew",
    "gev_cdf", "lipschitz_estimate", "load_dataset", "load_model", "movement_cost", "prioritize",
    "rauc_classification", "rauc_regression", "regression_center", "robr", "sample", "sample_batch",
    "save_dataset", "save_model", "soundness_probe", "welch_t_test",
]
