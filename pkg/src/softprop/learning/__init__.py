"""Regression stack: MLP, normaliser, training, baselines and metrics."""

from .baselines import KNNRegressor, LinearRegressor, baseline_fit, fit_linear
from .dataset import FEATURE_SETS, Dataset, check_leakage, read_dataset_csv, write_dataset_csv
from .metrics import EvalMetrics, evaluate, loop_area, loop_area_gap
from .mlp import GradientCheckError, MLPModel, gradient_check, mlp_forward
from .models import TrainedModel, positional_error, train_kinesthesia, train_wrench
from .normalizer import Normalizer, Scaler
from .train import TrainConfig, TrainResult, mlp_train

__all__ = [
    "KNNRegressor", "LinearRegressor", "baseline_fit", "fit_linear",
    "FEATURE_SETS", "Dataset", "check_leakage", "read_dataset_csv", "write_dataset_csv",
    "EvalMetrics", "evaluate", "loop_area", "loop_area_gap",
    "GradientCheckError", "MLPModel", "gradient_check", "mlp_forward",
    "TrainedModel", "positional_error", "train_kinesthesia", "train_wrench",
    "Normalizer", "Scaler", "TrainConfig", "TrainResult", "mlp_train",
]
