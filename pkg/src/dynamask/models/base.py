from __future__ import annotations

from typing import Callable

import numpy as np

Pullback = Callable[[np.ndarray], np.ndarray]


class DifferentiableModel:
    """A time-series model ``f: (T, d_X) -> (T + 1 - t_y, d_Y)`` with input gradients.

    Subclasses implement :meth:`forward` and :meth:`input_vjp`. Both accept
    either one series ``(T, d_X)`` or a stack ``(B, T, d_X)`` and return
    outputs with the matching leading dimension.

    ``output_kind`` is ``"regression"`` or ``"binary"`` (one probability of
    the positive class per output entry).
    """

    output_kind = "regression"
    t_y = 1

    def forward(self, X) -> np.ndarray:
        raise NotImplementedError

    def input_vjp(self, X, upstream) -> np.ndarray:
        """Gradient of ``sum(upstream * forward(X))`` with respect to ``X``."""
        raise NotImplementedError

    def forward_with_pullback(self, X) -> tuple[np.ndarray, Pullback]:
        """Return ``forward(X)`` and a function mapping upstream to the input gradient."""
        Y = self.forward(X)
        return Y, lambda upstream: self.input_vjp(X, upstream)

    def __call__(self, X):
        return self.forward(X)


class ConstantModel(DifferentiableModel):
    """Ignores its input entirely; handy as a degenerate reference."""

    def __init__(self, value=0.0, n_outputs: int = 1, output_kind: str = "regression"):
        self.value = float(value)
        self.n_outputs = n_outputs
        self.output_kind = output_kind

    def forward(self, X):
        X = np.asarray(X, dtype=float)
        return np.full(X.shape[:-1] + (self.n_outputs,), self.value)

    def input_vjp(self, X, upstream):
        return np.zeros_like(np.asarray(X, dtype=float))


class LinearModel(DifferentiableModel):
    """``f(X)_t = sum_i w[t, i] x[t, i]``, one output per time step."""

    def __init__(self, weights):
        self.weights = np.asarray(weights, dtype=float)

    def forward(self, X):
        X = np.asarray(X, dtype=float)
        return (X * self.weights).sum(-1, keepdims=True)

    def input_vjp(self, X, upstream):
        X = np.asarray(X, dtype=float)
        return np.broadcast_to(np.asarray(upstream, dtype=float) * self.weights, X.shape).copy()


def check_input(X, d: int | None = None, T: int | None = None) -> tuple[np.ndarray, bool]:
    """Return ``X`` as a (B, T, d) float array and whether it was a single series."""
    X = np.asarray(X, dtype=float)
    single = X.ndim == 2
    if single:
        X = X[None]
    if X.ndim != 3:
        raise ValueError(f"expected (T, d) or (B, T, d) input, got shape {X.shape}")
    if d is not None and X.shape[2] != d:
        raise ValueError(f"dimension mismatch: model expects {d} features, got {X.shape[2]}")
    if T is not None and X.shape[1] != T:
        raise ValueError(f"dimension mismatch: model expects {T} time steps, got {X.shape[1]}")
    return X, single
