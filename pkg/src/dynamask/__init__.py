"""Dynamic perturbation masks for explaining time-series models."""
from .kernels import BACKEND
from .masks import (ExtremalConfig, FitResult, MaskFitConfig, fit_extremal_mask, fit_mask,
                    fit_mask_deletion, fit_masks)
from .perturbations import FadeMovingAverage, FadePastAverage, GaussianBlur, StaticHadamard

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ExtremalConfig",
    "FadeMovingAverage",
    "FadePastAverage",
    "FitResult",
    "GaussianBlur",
    "MaskFitConfig",
    "StaticHadamard",
    "fit_extremal_mask",
    "fit_mask",
    "fit_mask_deletion",
    "fit_masks",
]
