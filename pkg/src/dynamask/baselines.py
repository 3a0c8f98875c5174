"""Reference attribution methods returning (T, d) score matrices.

Prediction shifts are aggregated with the L1 norm over all outputs; the
path and sampling methods scalarise the model as the sum of its outputs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import Rng

BASELINE_KINDS = ("zero", "feature-mean")
# number of perturbed copies pushed through the model at once
_CHUNK = 512


@dataclass(frozen=True)
class AttributionConfig:
    ig_steps: int = 50
    ig_baseline: str = "zero"
    svs_samples: int = 25
    svs_baseline: str = "feature-mean"
    occlusion_baseline: str = "zero"
    afo_draws: int = 10

    def __post_init__(self):
        if min(self.ig_steps, self.svs_samples, self.afo_draws) < 1:
            raise ValueError("ig_steps, svs_samples and afo_draws must be >= 1")
        for name in ("ig_baseline", "svs_baseline", "occlusion_baseline"):
            if getattr(self, name) not in BASELINE_KINDS:
                raise ValueError(f"{name} must be one of {BASELINE_KINDS}")


def baseline_matrix(X, kind: str) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if kind == "zero":
        return np.zeros_like(X)
    if kind == "feature-mean":
        return np.broadcast_to(X.mean(axis=0), X.shape).copy()
    raise ValueError(f"unknown baseline {kind!r}")


def _forward_batched(model, Z):
    return np.concatenate([model.forward(Z[s:s + _CHUNK]) for s in range(0, len(Z), _CHUNK)])


def _single_entry_variants(X, values):
    """Copies of ``X`` where entry ``k`` (row-major) takes ``values[..., k]``.

    ``values`` has shape ``(n,)`` or ``(draws, n)``; the result stacks every
    copy along the first axis, entry-major.
    """
    T, d = X.shape
    values = np.atleast_2d(values)
    draws, n = values.shape
    Z = np.broadcast_to(X, (n, draws, T, d)).copy()
    k = np.arange(n)
    Z[k, :, k // d, k % d] = values.T
    return Z.reshape(n * draws, T, d)


def _l1_shift(model, X, Z):
    Y0 = model.forward(X)
    Y = _forward_batched(model, Z)
    return np.abs(Y - Y0).sum(axis=(-2, -1))


def feature_occlusion(model, X, cfg: AttributionConfig = AttributionConfig()) -> np.ndarray:
    """L1 prediction shift when each entry alone is set to the baseline."""
    X = np.asarray(X, dtype=float)
    b = baseline_matrix(X, cfg.occlusion_baseline)
    return _l1_shift(model, X, _single_entry_variants(X, b.ravel())).reshape(X.shape)


def augmented_feature_occlusion(model, X, reference_set, cfg: AttributionConfig = AttributionConfig(),
                                rng: Rng | None = None) -> np.ndarray:
    """Mean L1 shift when each entry is replaced by draws from its feature's empirical distribution."""
    if not len(reference_set):
        raise ValueError("invalid request: empty reference set")
    X = np.asarray(X, dtype=float)
    rng = rng or np.random.default_rng(0)
    T, d = X.shape
    pools = np.concatenate([np.asarray(R, dtype=float).reshape(-1, d) for R in reference_set])
    # draws[k, j] replaces entry j = t * d + i with a value of feature i
    rows = rng.integers(0, len(pools), size=(cfg.afo_draws, T * d))
    draws = pools[rows, np.tile(np.arange(d), T)]
    shift = _l1_shift(model, X, _single_entry_variants(X, draws))
    return shift.reshape(T * d, cfg.afo_draws).mean(axis=1).reshape(T, d)


def feature_permutation(model, batch, cfg: AttributionConfig = AttributionConfig(),
                        rng: Rng | None = None) -> list[np.ndarray]:
    """Per-instance L1 shift when entry (t, i) is shuffled across the batch.

    One permutation per entry, shared by all members of the batch.
    """
    if len(batch) < 2:
        raise ValueError("invalid request: feature permutation needs a batch of at least 2")
    rng = rng or np.random.default_rng(0)
    B_ = np.stack([np.asarray(x, dtype=float) for x in batch])
    B, T, d = B_.shape
    Y0 = model.forward(B_)
    scores = np.zeros((B, T, d))
    for t in range(T):
        for i in range(d):
            perm = rng.permutation(B)
            Z = B_.copy()
            Z[:, t, i] = B_[perm, t, i]
            scores[:, t, i] = np.abs(model.forward(Z) - Y0).sum(axis=(-2, -1))
    return list(scores)


def integrated_gradients(model, X, cfg: AttributionConfig = AttributionConfig(),
                         signed: bool = False) -> np.ndarray:
    """Right-Riemann integrated gradients of the summed outputs along the straight path from the baseline."""
    X = np.asarray(X, dtype=float)
    b = baseline_matrix(X, cfg.ig_baseline)
    S = cfg.ig_steps
    alphas = np.arange(1, S + 1) / S
    total = np.zeros_like(X)
    for s in range(0, S, _CHUNK):
        a = alphas[s:s + _CHUNK, None, None]
        Z = b + a * (X - b)
        Y, pullback = model.forward_with_pullback(Z)
        total += pullback(np.ones_like(Y)).sum(axis=0)
    attr = (X - b) * total / S
    return attr if signed else np.abs(attr)


def shapley_value_sampling(model, X, cfg: AttributionConfig = AttributionConfig(),
                           rng: Rng | None = None, signed: bool = False) -> np.ndarray:
    """Monte-Carlo Shapley values over random orderings of all T*d entries.

    Along each ordering the entries switch from the baseline to their true
    value one at a time; the marginal change of the summed output is
    credited to the entry just switched.
    """
    X = np.asarray(X, dtype=float)
    rng = rng or np.random.default_rng(0)
    b = baseline_matrix(X, cfg.svs_baseline).ravel()
    x = X.ravel()
    n = x.size
    total = np.zeros(n)
    for _ in range(cfg.svs_samples):
        order = rng.permutation(n)
        g = np.empty(n + 1)
        for s in range(0, n + 1, _CHUNK):
            k = np.arange(s, min(n + 1, s + _CHUNK))
            # row k holds the true values at order[:k]
            on = np.zeros((len(k), n), dtype=bool)
            on[:, order] = np.arange(n)[None, :] < k[:, None]
            Z = np.where(on, x, b).reshape(len(k), *X.shape)
            g[k] = model.forward(Z).sum(axis=(-2, -1))
        total[order] += np.diff(g)
    attr = (total / cfg.svs_samples).reshape(X.shape)
    return attr if signed else np.abs(attr)


METHODS = {
    "FO": "feature-occlusion",
    "AFO": "augmented-feature-occlusion",
    "FP": "feature-permutation",
    "IG": "integrated-gradients",
    "SVS": "shapley-value-sampling",
}
