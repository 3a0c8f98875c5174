from .base import ConstantModel, DifferentiableModel, LinearModel
from .gru import GruClassifier, gru_param_gradients
from .training import Adam, TrainConfig, TrainReport, evaluate_classifier, train_gru
from .whitebox import WhiteBoxRegressor

__all__ = [
    "Adam",
    "ConstantModel",
    "DifferentiableModel",
    "GruClassifier",
    "LinearModel",
    "TrainConfig",
    "TrainReport",
    "WhiteBoxRegressor",
    "evaluate_classifier",
    "gru_param_gradients",
    "train_gru",
]
