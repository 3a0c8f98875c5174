"""Metrics for masks and score matrices.

Index sets are given as a :class:`~dynamask.datagen.SaliencyTarget`, a
boolean indicator matrix, or an iterable of 1-based ``(t, i)`` pairs.
"""
from __future__ import annotations

import numpy as np

from .datagen import SaliencyTarget
from .masks import n_ones

LOG_CLAMP = 1e-6
DEFAULT_THRESHOLDS = np.round(np.arange(1, 100) / 100.0, 2)


def index_indicator(A, shape) -> np.ndarray:
    """Boolean ``shape`` matrix marking the entries of ``A``."""
    if isinstance(A, SaliencyTarget):
        if A.shape != tuple(shape):
            raise IndexError(f"target shape {A.shape} does not match {tuple(shape)}")
        return A.indicator()
    if isinstance(A, np.ndarray) and A.dtype == bool:
        if A.shape != tuple(shape):
            raise IndexError(f"indicator shape {A.shape} does not match {tuple(shape)}")
        return A
    out = np.zeros(shape, dtype=bool)
    for t, i in A:
        if not (1 <= t <= shape[0] and 1 <= i <= shape[1]):
            raise IndexError(f"index ({t}, {i}) outside [1:{shape[0]}] x [1:{shape[1]}]")
        out[t - 1, i - 1] = True
    return out


def _entries(M, A):
    M = np.asarray(M, dtype=float)
    return M[index_indicator(A, M.shape)]


def information_terms(m):
    return -np.log1p(-np.minimum(m, 1.0 - LOG_CLAMP))


def entropy_terms(m):
    out = np.zeros_like(m)
    inner = (m > 0) & (m < 1)
    p = m[inner]
    out[inner] = -(p * np.log(p) + (1.0 - p) * np.log1p(-p))
    return out


def mask_information(M, A) -> float:
    """``-sum ln(1 - m)`` over ``A``; coefficients are capped at ``1 - 1e-6``."""
    return float(information_terms(_entries(M, A)).sum())


def mask_entropy(M, A) -> float:
    """Binary entropy of the coefficients in ``A``, summed (``0 ln 0 = 0``)."""
    return float(entropy_terms(_entries(M, A)).sum())


def _ratio(num, den):
    if den <= 0:
        raise ValueError("undefined ratio: the mask carries no information/entropy at all")
    return num / den


def normalized_information(M, A) -> float:
    M = np.asarray(M, dtype=float)
    return _ratio(mask_information(M, A), mask_information(M, np.ones(M.shape, bool)))


def normalized_entropy(M, A) -> float:
    M = np.asarray(M, dtype=float)
    return _ratio(mask_entropy(M, A), mask_entropy(M, np.ones(M.shape, bool)))


def scores_to_mask(R) -> np.ndarray:
    """Min-max normalise a score matrix into ``[0, 1]``; a constant matrix becomes 0.5."""
    R = np.asarray(R, dtype=float)
    if not np.all(np.isfinite(R)):
        raise ValueError("score matrix has non-finite entries")
    lo, hi = R.min(), R.max()
    if hi == lo:
        return np.full(R.shape, 0.5)
    return (R - lo) / (hi - lo)


def _trapezoid_mean(x, y):
    if len(x) == 0:
        return 0.0
    if len(x) == 1:
        return float(y[0])
    return float(np.trapezoid(y, x) / (x[-1] - x[0]))


def precision_recall_curves(M, target, thresholds=DEFAULT_THRESHOLDS):
    """Precision and recall of ``{m >= tau}`` for every threshold; precision is NaN for empty selections."""
    M = np.asarray(M, dtype=float)
    Q = index_indicator(target, M.shape)
    if not Q.any():
        raise ValueError("invalid target: the salient set is empty")
    tau = np.asarray(thresholds, dtype=float)
    if np.any((tau <= 0) | (tau >= 1)) or np.any(np.diff(tau) <= 0):
        raise ValueError("thresholds must be ascending and strictly inside (0, 1)")
    sel = M.reshape(1, -1) >= tau[:, None]
    hits = (sel & Q.reshape(1, -1)).sum(1)
    size = sel.sum(1)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(size > 0, hits / np.maximum(size, 1), np.nan)
    recall = hits / Q.sum()
    return tau, precision, recall


def aup_aur(M, target, thresholds=DEFAULT_THRESHOLDS) -> tuple[float, float]:
    tau, precision, recall = precision_recall_curves(M, target, thresholds)
    keep = ~np.isnan(precision)
    return _trapezoid_mean(tau[keep], precision[keep]), _trapezoid_mean(tau, recall)


def _midranks(v):
    order = np.argsort(v, kind="stable")
    sv = v[order]
    ranks = np.empty(len(v))
    # group boundaries of equal values
    edges = np.flatnonzero(np.diff(sv)) + 1
    starts = np.concatenate([[0], edges])
    ends = np.concatenate([edges, [len(v)]])
    for s, e in zip(starts, ends):
        ranks[order[s:e]] = 0.5 * (s + e - 1) + 1.0
    return ranks


def auroc_auprc(M, target) -> tuple[float, float]:
    """ROC area (ties count one half) and average precision of ``M`` as a saliency ranking."""
    M = np.asarray(M, dtype=float)
    y = index_indicator(target, M.shape).ravel()
    s = M.ravel()
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("invalid target: need both salient and non-salient entries")
    ranks = _midranks(s)
    auroc = (ranks[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
    # average precision, stepping through distinct scores from the top
    order = np.argsort(-s, kind="stable")
    ss, yy = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(ss)), ss.size - 1]
    tp = np.cumsum(yy)[last]
    fp = (last + 1) - tp
    precision = tp / (tp + fp)
    recall = tp / n_pos
    auprc = float(np.sum(np.diff(np.r_[0.0, recall]) * precision))
    return float(auroc), auprc


def replace_top_fraction_by_time_average(X, M, fraction: float) -> np.ndarray:
    """Replace the highest-mask entries (ties in index order) by their feature's mean over time."""
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    X = np.asarray(X, dtype=float)
    M = np.asarray(M, dtype=float)
    if M.shape != X.shape:
        raise ValueError(f"dimension mismatch: mask {M.shape} vs input {X.shape}")
    k = n_ones(fraction, X.size)
    top = np.argsort(-M.ravel(), kind="stable")[:k]
    out = X.copy()
    means = np.broadcast_to(X.mean(axis=0), X.shape)
    out.ravel()[top] = means.ravel()[top]
    return out


def shift_from_probabilities(p, p_tilde) -> tuple[float, bool]:
    """Log-loss of ``p_tilde`` against the class predicted by ``p``, and whether that class flips."""
    p, q = float(p), float(p_tilde)
    if not (0 <= p <= 1 and 0 <= q <= 1):
        raise ValueError("prediction shift needs probabilities in [0, 1]")
    c = 1 if p >= 0.5 else 0
    q = min(max(q, 1e-12), 1 - 1e-12)
    ce = -(c * np.log(q) + (1 - c) * np.log(1 - q))
    return float(ce), c != (1 if p_tilde >= 0.5 else 0)


def prediction_shift(model, X, X_tilde, time_index: int = -1) -> tuple[float, bool]:
    """Shift of the binary prediction at ``time_index`` (default: the last output)."""
    if getattr(model, "output_kind", None) != "binary":
        raise TypeError("prediction_shift requires a model that outputs probabilities")
    p = model.forward(X)[time_index, 0]
    q = model.forward(X_tilde)[time_index, 0]
    return shift_from_probabilities(p, q)


def dataset_prediction_shift(model, inputs, perturbed, time_index: int = -1) -> dict:
    """Mean CE and ACC (fraction of unflipped predictions) over paired series."""
    if len(inputs) != len(perturbed) or not inputs:
        raise ValueError("need the same, nonzero number of original and perturbed series")
    rows = [prediction_shift(model, x, xt, time_index) for x, xt in zip(inputs, perturbed)]
    return {"CE": float(np.mean([r[0] for r in rows])), "ACC": float(np.mean([not r[1] for r in rows]))}


def pairwise_mask_accuracy(M1, M2, threshold: float = 0.5) -> float:
    """Fraction of entries on which the two masks, binarised at ``threshold``, agree."""
    M1, M2 = np.asarray(M1, dtype=float), np.asarray(M2, dtype=float)
    if M1.shape != M2.shape:
        raise ValueError(f"dimension mismatch: {M1.shape} vs {M2.shape}")
    return float(np.mean((M1 >= threshold) == (M2 >= threshold)))


def salient_fraction(M, threshold: float = 0.5) -> float:
    return float(np.mean(np.asarray(M) >= threshold))


def mask_report(M, target) -> dict:
    """Every target-based metric for one mask (or normalised score matrix)."""
    aup, aur = aup_aur(M, target)
    out = {"AUP": aup, "AUR": aur,
           "information": mask_information(M, target), "entropy": mask_entropy(M, target)}
    Q = index_indicator(target, np.shape(M))
    if 0 < Q.sum() < Q.size:
        out["AUROC"], out["AUPRC"] = auroc_auprc(M, target)
    return out
