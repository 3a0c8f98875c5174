"""Mask-driven perturbation operators.

Every operator maps ``(X, M) -> X_tilde`` entrywise: entry ``(t, i)`` of the
output depends on the mask only through ``m[t, i]``, and ``m = 1`` returns
``x[t, i]`` exactly. ``apply`` and ``mask_derivative`` accept a single mask
``(T, d)`` or a stack ``(K, T, d)`` for the same ``X``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import impl

KINDS = ("gaussian-blur", "fade-moving-average", "fade-past-average", "static-hadamard")


def _prepare(X, M):
    X = np.ascontiguousarray(X, dtype=float)
    M = np.asarray(M, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"X must be (T, d), got {X.shape}")
    if M.shape[-2:] != X.shape or M.ndim not in (2, 3):
        raise ValueError(f"dimension mismatch: mask {M.shape} vs input {X.shape}")
    return X, M


def windowed_mean(X, before: int, after: int) -> np.ndarray:
    """Per-feature mean of ``x[t-before : t+after]``, truncated at the sequence edges.

    The divisor is the number of terms actually inside the sequence.
    """
    X = np.asarray(X, dtype=float)
    T = X.shape[0]
    csum = np.vstack([np.zeros((1, X.shape[1])), np.cumsum(X, axis=0)])
    t = np.arange(T)
    lo = np.clip(t - before, 0, T)
    hi = np.clip(t + after + 1, 0, T)
    return (csum[hi] - csum[lo]) / (hi - lo)[:, None]


@dataclass(frozen=True)
class PerturbationOperator:
    kind: str = field(init=False, default="")

    def apply(self, X, M) -> np.ndarray:
        raise NotImplementedError

    def mask_derivative(self, X, M) -> np.ndarray:
        raise NotImplementedError

    def apply_with_derivative(self, X, M):
        return self.apply(X, M), self.mask_derivative(X, M)

    def declared_window(self, T: int) -> tuple[int, int]:
        """(past, future) reach of the substitute value, in time steps."""
        raise NotImplementedError

    def to_config(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class GaussianBlur(PerturbationOperator):
    """Replace ``x[t, i]`` by a Gaussian-weighted time average of feature ``i``.

    The kernel width is ``sigma_max * (1 - m)``; the full O(d T^2) sum is used.
    """

    sigma_max: float = 1.0
    kind: str = field(init=False, default="gaussian-blur")

    def __post_init__(self):
        if not self.sigma_max > 0:
            raise ValueError("sigma_max must be > 0")

    def _run(self, X, M, with_derivative):
        X, M = _prepare(X, M)
        stack = M if M.ndim == 3 else M[None]
        out, dout = impl.blur(X, np.ascontiguousarray(stack), float(self.sigma_max), with_derivative)
        if M.ndim == 2:
            out = out[0]
            dout = None if dout is None else dout[0]
        return out, dout

    def apply(self, X, M):
        return self._run(X, M, False)[0]

    def mask_derivative(self, X, M):
        return self._run(X, M, True)[1]

    def apply_with_derivative(self, X, M):
        return self._run(X, M, True)

    def declared_window(self, T):
        return (T - 1, T - 1)

    def to_config(self):
        return {"kind": self.kind, "sigma_max": self.sigma_max}


@dataclass(frozen=True)
class _FadeToMean(PerturbationOperator):
    window: int = 1

    def __post_init__(self):
        if int(self.window) != self.window or self.window < 1:
            # window 0 makes the substitute equal x itself: the mask would have no effect
            raise ValueError(f"window must be a positive integer, got {self.window}")

    def substitute(self, X) -> np.ndarray:
        raise NotImplementedError

    def apply(self, X, M):
        X, M = _prepare(X, M)
        mu = self.substitute(X)
        return M * X + (1.0 - M) * mu

    def mask_derivative(self, X, M):
        X, M = _prepare(X, M)
        return np.broadcast_to(X - self.substitute(X), M.shape).copy()

    def to_config(self):
        return {"kind": self.kind, "window": int(self.window)}


@dataclass(frozen=True)
class FadeMovingAverage(_FadeToMean):
    """Fade towards the centred moving average over ``[t - W, t + W]``."""

    kind: str = field(init=False, default="fade-moving-average")

    def substitute(self, X):
        return windowed_mean(X, self.window, self.window)

    def declared_window(self, T):
        return (self.window, self.window)


@dataclass(frozen=True)
class FadePastAverage(_FadeToMean):
    """Fade towards the trailing average over ``[t - W, t]`` (no look-ahead)."""

    kind: str = field(init=False, default="fade-past-average")

    def substitute(self, X):
        return windowed_mean(X, self.window, 0)

    def declared_window(self, T):
        return (self.window, 0)


@dataclass(frozen=True)
class StaticHadamard(PerturbationOperator):
    """``m * x``: fades to zero, no temporal context."""

    kind: str = field(init=False, default="static-hadamard")

    def apply(self, X, M):
        X, M = _prepare(X, M)
        return M * X

    def mask_derivative(self, X, M):
        X, M = _prepare(X, M)
        return np.broadcast_to(X, M.shape).copy()

    def declared_window(self, T):
        return (0, 0)

    def to_config(self):
        return {"kind": self.kind}


def from_config(cfg: dict) -> PerturbationOperator:
    kind = cfg.get("kind")
    if kind == "gaussian-blur":
        return GaussianBlur(float(cfg.get("sigma_max", 1.0)))
    if kind == "fade-moving-average":
        return FadeMovingAverage(int(cfg["window"]))
    if kind == "fade-past-average":
        return FadePastAverage(int(cfg["window"]))
    if kind == "static-hadamard":
        return StaticHadamard()
    raise ValueError(f"unknown perturbation kind {kind!r}; expected one of {KINDS}")


@dataclass
class DynamicityReport:
    t: int
    i: int
    declared: tuple[int, int]
    sensitivities: dict[int, float]
    nonzero_offsets: list[int]

    @property
    def is_dynamic(self) -> bool:
        return any(o != 0 for o in self.nonzero_offsets)

    @property
    def within_declared(self) -> bool:
        past, future = self.declared
        return all(-past <= o <= future for o in self.nonzero_offsets)


def check_dynamicity(op: PerturbationOperator, X, t: int, i: int, m: float = 0.5,
                     step: float = 1e-4, tol: float = 1e-9) -> DynamicityReport:
    """Which time offsets of feature ``i`` move the perturbed value at ``(t, i)``?

    ``t`` and ``i`` are 1-based. Central finite differences in every
    ``x[t', i]``, with the mask held at ``m``; offsets are ``t' - t``.
    Offsets whose sensitivity underflows are reported as zero.
    """
    X = np.array(X, dtype=float)
    T = X.shape[0]
    t0, i0 = t - 1, i - 1
    M = np.full(X.shape, m)
    sens = {}
    for s in range(T):
        Xp, Xm = X.copy(), X.copy()
        Xp[s, i0] += step
        Xm[s, i0] -= step
        sens[s - t0] = float((op.apply(Xp, M)[t0, i0] - op.apply(Xm, M)[t0, i0]) / (2 * step))
    nonzero = sorted(o for o, v in sens.items() if abs(v) > tol)
    return DynamicityReport(t, i, op.declared_window(T), sens, nonzero)
