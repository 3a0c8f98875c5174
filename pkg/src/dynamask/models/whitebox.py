from __future__ import annotations

import numpy as np

from ..datagen import SaliencyTarget
from .base import DifferentiableModel, check_input


class WhiteBoxRegressor(DifferentiableModel):
    """Regressor that only looks at a known set of salient inputs.

    ``f(X)_t = sum_{i : (t, i) salient} x[t, i]^2``, which for a product set
    ``A_T x A_X`` is the sum of squares over ``A_X`` at salient times and zero
    at every other time.
    """

    output_kind = "regression"

    def __init__(self, target: SaliencyTarget):
        self.target = target
        self.mask = target.indicator().astype(float)

    def forward(self, X):
        X, single = check_input(X)
        if X.shape[1:] != self.mask.shape:
            raise ValueError(f"dimension mismatch: input {X.shape[1:]} vs target {self.mask.shape}")
        Y = (self.mask * X * X).sum(-1, keepdims=True)
        return Y[0] if single else Y

    def input_vjp(self, X, upstream):
        X, single = check_input(X)
        if X.shape[1:] != self.mask.shape:
            raise ValueError(f"dimension mismatch: input {X.shape[1:]} vs target {self.mask.shape}")
        up = np.asarray(upstream, dtype=float).reshape(X.shape[:2] + (1,))
        G = 2.0 * self.mask * X * up
        return G[0] if single else G
