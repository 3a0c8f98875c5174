"""Fitting dynamic masks.

The objective for a mask ``M`` of area ``a`` is::

    L_e(M) + lambda_a * ||sort(vec M) - r_a||^2 + lambda_c * sum |m[t+1, i] - m[t, i]|

``L_e`` compares the model's prediction on ``Pi_M(X)`` with its prediction
on ``X`` (squared error for regression, cross-entropy for probabilities).
``lambda_a`` grows geometrically from ``lambda_0`` to ``dilation * lambda_0``
over the epochs, pulling the mask towards a binary map with ``a * T * d``
ones. Descent uses heavy-ball momentum followed by a clamp to ``[0, 1]``.

In deletion mode the error term becomes ``-L_e(1 - M)``: the mask now marks
the entries whose removal shifts the prediction most.

All fitting routines run a stack of masks (one per area) through the model
together; each mask follows exactly the trajectory it would follow alone.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .models.base import DifferentiableModel
from .perturbations import PerturbationOperator

PROB_FLOOR = 1e-8


class MaskFitError(FloatingPointError):
    def __init__(self, epoch: int, message: str):
        super().__init__(f"epoch {epoch}: {message}")
        self.epoch = epoch


@dataclass(frozen=True)
class MaskFitConfig:
    area: float = 0.1
    learning_rate: float = 1.0
    momentum: float = 1.0
    lambda_0: float = 1.0
    dilation: float = 1000.0
    lambda_c: float = 0.0
    epochs: int = 1000
    mode: str = "preserve"
    loss_kind: str | None = None  # None: follow the model's output kind
    reduction: str = "mean"
    class_target: str = "soft"  # "hard": compare against the one-hot predicted class

    def __post_init__(self):
        if not 0.0 <= self.area <= 1.0:
            raise ValueError(f"area must lie in [0, 1], got {self.area}")
        if self.learning_rate <= 0 or self.momentum < 0 or self.lambda_0 <= 0:
            raise ValueError("need learning_rate > 0, momentum >= 0, lambda_0 > 0")
        if self.dilation < 1 or self.lambda_c < 0 or self.epochs < 0:
            raise ValueError("need dilation >= 1, lambda_c >= 0, epochs >= 0")
        if self.mode not in ("preserve", "delete"):
            raise ValueError(f"mode must be 'preserve' or 'delete', got {self.mode!r}")
        if self.loss_kind not in (None, "regression", "classification"):
            raise ValueError(f"unknown loss_kind {self.loss_kind!r}")
        if self.class_target not in ("soft", "hard"):
            raise ValueError(f"class_target must be 'soft' or 'hard', got {self.class_target!r}")
        if self.reduction not in ("mean", "sum"):
            raise ValueError(f"reduction must be 'mean' or 'sum', got {self.reduction!r}")

    def lambda_at(self, epoch: int) -> float:
        """Area-regulariser weight used during (0-based) ``epoch``; ``epoch == epochs`` is the final value."""
        if self.epochs == 0:
            return self.lambda_0
        return self.lambda_0 * math.exp(epoch * math.log(self.dilation) / self.epochs)


@dataclass(frozen=True)
class ExtremalConfig:
    area_grid: tuple[float, ...]
    epsilon: float

    def __post_init__(self):
        grid = tuple(float(a) for a in self.area_grid)
        if not grid:
            raise ValueError("area_grid must not be empty")
        if any(not 0 < a <= 1 for a in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("area_grid must be strictly ascending within (0, 1]")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        object.__setattr__(self, "area_grid", grid)


@dataclass
class FitResult:
    mask: np.ndarray
    final_error: float
    loss_history: np.ndarray  # (epochs, 3): L_e, L_a, L_c before each update
    area: float
    config: MaskFitConfig
    runtime_s: float = 0.0
    converged: bool = True

    def to_dict(self) -> dict:
        return {
            "mask": self.mask.tolist(),
            "final_error": self.final_error,
            "area": self.area,
            "converged": self.converged,
            "runtime_s": self.runtime_s,
            "config": asdict(self.config),
            "loss_history": {
                "error": self.loss_history[:, 0].tolist(),
                "area": self.loss_history[:, 1].tolist(),
                "connectedness": self.loss_history[:, 2].tolist(),
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict) -> "FitResult":
        hist = doc["loss_history"]
        history = np.column_stack([hist["error"], hist["area"], hist["connectedness"]]) \
            if hist["error"] else np.zeros((0, 3))
        return cls(np.array(doc["mask"], dtype=float), doc["final_error"], history, doc["area"],
                   MaskFitConfig(**doc["config"]), doc.get("runtime_s", 0.0), doc.get("converged", True))


@dataclass
class ExtremalResult:
    best: FitResult
    area: float
    converged: bool
    errors: dict[float, float] = field(default_factory=dict)


# -- regularisers ----------------------------------------------------------

def n_ones(area: float, n: int) -> int:
    """Number of ones in the reference vector (``round(area * n)``, halves up)."""
    return int(min(n, max(0, math.floor(area * n + 0.5 + 1e-9))))


def reference_vector(area: float, n: int) -> np.ndarray:
    r = np.zeros(n)
    k = n_ones(area, n)
    if k:
        r[n - k:] = 1.0
    return r


def _as_stack(M):
    M = np.asarray(M, dtype=float)
    return (M, False) if M.ndim == 3 else (M[None], True)


def area_loss_and_grad(M, area):
    """``||sort(vec M) - r_a||^2`` and its gradient routed through the stable sort.

    ``area`` may be a scalar or one value per mask in the stack.
    """
    S, single = _as_stack(M)
    K = S.shape[0]
    flat = S.reshape(K, -1)
    n = flat.shape[1]
    areas = np.broadcast_to(np.asarray(area, dtype=float), (K,))
    R = np.stack([reference_vector(a, n) for a in areas])
    perm = np.argsort(flat, axis=1, kind="stable")
    diff = np.take_along_axis(flat, perm, axis=1) - R
    loss = np.sum(diff * diff, axis=1)
    grad = np.empty_like(flat)
    np.put_along_axis(grad, perm, 2.0 * diff, axis=1)
    grad = grad.reshape(S.shape)
    return (loss[0], grad[0]) if single else (loss, grad)


def area_loss(M, area):
    return area_loss_and_grad(M, area)[0]


def connectedness_loss_and_grad(M):
    """Total variation in time, summed over features, and a subgradient (sign(0) = 0)."""
    S, single = _as_stack(M)
    diff = S[:, 1:] - S[:, :-1]
    loss = np.abs(diff).sum(axis=(1, 2))
    s = np.sign(diff)
    grad = np.zeros_like(S)
    grad[:, 1:] += s
    grad[:, :-1] -= s
    return (loss[0], grad[0]) if single else (loss, grad)


def connectedness_loss(M):
    return connectedness_loss_and_grad(M)[0]


# -- error term ------------------------------------------------------------

def _loss_kind(model: DifferentiableModel, kind: str | None) -> str:
    if kind is not None:
        return kind
    return "regression" if model.output_kind == "regression" else "classification"


def _class_probs(Y, output_kind):
    # a single positive-class probability expands to the two-class vector (p, 1 - p)
    if output_kind == "binary":
        return np.concatenate([Y, 1.0 - Y], axis=-1), True
    return Y, False


def error_from_outputs(Y, Y0, kind: str, output_kind: str = "binary"):
    """Error and its gradient w.r.t. ``Y`` for perturbed outputs ``Y`` (K, T', dY)."""
    if kind == "regression":
        diff = Y - Y0
        return np.sum(diff * diff, axis=(-2, -1)), 2.0 * diff
    P, binary = _class_probs(Y0, output_kind)
    Q, _ = _class_probs(Y, output_kind)
    Qf = np.maximum(Q, PROB_FLOOR)
    loss = -np.sum(P * np.log(Qf), axis=(-2, -1))
    gQ = np.where(Q > PROB_FLOOR, -P / Qf, 0.0)
    if binary:
        d = Y0.shape[-1]
        gY = gQ[..., :d] - gQ[..., d:]
    else:
        gY = gQ
    return loss, gY


def reference_outputs(model, X, kind: str, class_target: str = "soft"):
    """Unperturbed outputs the error term compares against."""
    Y0 = model.forward(X)
    if kind == "classification" and class_target == "hard":
        if model.output_kind != "binary":
            raise ValueError("hard class targets need a binary model")
        Y0 = (Y0 >= 0.5).astype(float)
    return Y0


def error_loss(model, op, X, M, kind: str | None = None, Y0=None, class_target: str = "soft"):
    kind = _loss_kind(model, kind)
    Y0 = reference_outputs(model, X, kind, class_target) if Y0 is None else Y0
    Y = model.forward(op.apply(X, M))
    return error_from_outputs(Y, Y0, kind, model.output_kind)[0]


def error_loss_regression(model, op, X, M):
    return error_loss(model, op, X, M, "regression")


def error_loss_classification(model, op, X, M):
    return error_loss(model, op, X, M, "classification")


def identity_error(model, op, X, kind: str | None = None, class_target: str = "soft") -> float:
    """Error at ``M = 1`` (zero for regression, the prediction entropy for soft classification)."""
    return float(error_loss(model, op, X, np.ones(np.shape(X)), kind, class_target=class_target))


def _error_value_and_grad(model, op, X, S, kind, Y0):
    Xp, dP = op.apply_with_derivative(X, S)
    Y, pullback = model.forward_with_pullback(Xp)
    loss, gY = error_from_outputs(Y, Y0, kind, model.output_kind)
    return loss, pullback(gY) * dP


def term_weights(cfg: MaskFitConfig, X_shape, Y_shape) -> tuple[float, float, float]:
    """Factors applied to (L_e, L_a, L_c) inside the optimised objective.

    With ``reduction="mean"`` each term is divided by its number of summands,
    which keeps the default step sizes meaningful whatever the input size.
    """
    if cfg.reduction == "sum":
        return 1.0, 1.0, 1.0
    T, d = X_shape[-2:]
    return 1.0 / int(np.prod(Y_shape[-2:])), 1.0 / (T * d), 1.0 / max(1, (T - 1) * d)


def _objective_stack(model, op, X, S, cfg, areas, lam, Y0, kind):
    """Raw (L_e, L_a, L_c) per mask and the gradient of the weighted objective."""
    we, wa, wc = term_weights(cfg, X.shape, Y0.shape)
    if cfg.mode == "preserve":
        le, ge = _error_value_and_grad(model, op, X, S, kind, Y0)
    else:
        # d/dM [-L_e(1 - M)] = +L_e'(1 - M)
        le, ge = _error_value_and_grad(model, op, X, 1.0 - S, kind, Y0)
    la, ga = area_loss_and_grad(S, areas)
    grad = we * ge + (lam * wa) * ga
    if cfg.lambda_c:
        lc, gc = connectedness_loss_and_grad(S)
        grad = grad + (cfg.lambda_c * wc) * gc
    else:
        lc = connectedness_loss(S)
    return np.column_stack([le, la, lc]), grad


def objective_terms(model, op, X, M, cfg: MaskFitConfig, lambda_a: float, Y0=None):
    """Per-mask (L_e, L_a, L_c) and the gradient of the full objective at ``lambda_a``."""
    S, single = _as_stack(M)
    X = np.asarray(X, dtype=float)
    kind = _loss_kind(model, cfg.loss_kind)
    Y0 = reference_outputs(model, X, kind, cfg.class_target) if Y0 is None else Y0
    terms, grad = _objective_stack(model, op, X, S, cfg, cfg.area, lambda_a, Y0, kind)
    return (terms[0], grad[0]) if single else (terms, grad)


def total_gradient(model, op, X, M, cfg: MaskFitConfig, lambda_a: float | None = None):
    lam = cfg.lambda_0 if lambda_a is None else lambda_a
    return objective_terms(model, op, X, M, cfg, lam)[1]


def objective_value(model, op, X, M, cfg: MaskFitConfig, lambda_a: float | None = None):
    """Scalar objective whose gradient is :func:`total_gradient` (error sign flipped when deleting)."""
    lam = cfg.lambda_0 if lambda_a is None else lambda_a
    X = np.asarray(X, dtype=float)
    Y0 = reference_outputs(model, X, _loss_kind(model, cfg.loss_kind), cfg.class_target)
    le, la, lc = objective_terms(model, op, X, M, cfg, lam, Y0)[0]
    we, wa, wc = term_weights(cfg, X.shape, Y0.shape)
    sign = 1.0 if cfg.mode == "preserve" else -1.0
    return sign * we * le + lam * wa * la + cfg.lambda_c * wc * lc


# -- optimisation ----------------------------------------------------------

def fit_masks(model: DifferentiableModel, op: PerturbationOperator, X, cfg: MaskFitConfig,
              areas=None) -> list[FitResult]:
    """Fit one mask per area in ``areas`` (default ``[cfg.area]``) on the same input."""
    X = np.ascontiguousarray(X, dtype=float)
    areas = [cfg.area] if areas is None else [float(a) for a in areas]
    cfgs = [replace(cfg, area=a) for a in areas]
    K = len(areas)
    start = time.perf_counter()
    M = np.full((K,) + X.shape, 0.5)
    velocity = np.zeros_like(M)
    kind = _loss_kind(model, cfg.loss_kind)
    Y0 = reference_outputs(model, X, kind, cfg.class_target)
    area_vec = np.array(areas)
    history = np.empty((K, cfg.epochs, 3))
    for epoch in range(cfg.epochs):
        terms, grad = _objective_stack(model, op, X, M, cfg, area_vec, cfg.lambda_at(epoch), Y0, kind)
        if not np.all(np.isfinite(terms)) or not np.all(np.isfinite(grad)):
            raise MaskFitError(epoch, "non-finite loss or gradient")
        history[:, epoch] = terms
        velocity = cfg.learning_rate * grad + cfg.momentum * velocity
        M = np.clip(M - velocity, 0.0, 1.0)
    arg = M if cfg.mode == "preserve" else 1.0 - M
    Y = model.forward(op.apply(X, arg))
    final = error_from_outputs(Y, Y0, kind, model.output_kind)[0]
    elapsed = (time.perf_counter() - start) / K
    return [FitResult(M[k], float(final[k]), history[k], areas[k], cfgs[k], elapsed) for k in range(K)]


def fit_mask(model, op, X, cfg: MaskFitConfig) -> FitResult:
    return fit_masks(model, op, X, cfg)[0]


def fit_mask_deletion(model, op, X, cfg: MaskFitConfig) -> FitResult:
    if cfg.mode != "delete":
        cfg = replace(cfg, mode="delete")
    return fit_mask(model, op, X, cfg)


def select_lowest_error(results: list[FitResult]) -> FitResult:
    """The fit with the smallest final error (first one on ties)."""
    return min(results, key=lambda r: r.final_error)


def fit_extremal_mask(model, op, X, base_cfg: MaskFitConfig, ext: ExtremalConfig,
                      chunk: int | None = None) -> ExtremalResult:
    """Smallest grid area whose fitted mask keeps the error below ``ext.epsilon``.

    Areas are fitted in ascending order, ``chunk`` at a time (default: the
    whole grid at once). If no area qualifies, the largest-area mask is
    returned with ``converged=False``.
    """
    grid = list(ext.area_grid)
    chunk = chunk or len(grid)
    errors = {}
    last = None
    for i in range(0, len(grid), chunk):
        results = fit_masks(model, op, X, base_cfg, grid[i:i + chunk])
        for r in results:
            errors[r.area] = r.final_error
            last = r
            if r.final_error < ext.epsilon:
                return ExtremalResult(r, r.area, True, errors)
    last.converged = False
    return ExtremalResult(last, last.area, False, errors)


def fit_lowest_error_mask(model, op, X, base_cfg: MaskFitConfig, areas) -> tuple[FitResult, list[FitResult]]:
    results = fit_masks(model, op, X, base_cfg, areas)
    return select_lowest_error(results), results
