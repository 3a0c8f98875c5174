"""Synthetic inputs with known saliency.

* order-3 autoregressive feature sequences for the white-box experiments,
  with rare-feature and rare-time salient sets;
* a two-state hidden Markov model emitting 3-d Gaussian features and
  Bernoulli labels whose probability is driven by one state-dependent feature.

Index sets are stored 0-based in memory. Anything written to disk or shown
to a user is 1-based, i.e. ``(t, i)`` with ``t`` in ``[1:T]``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numerics import (
    Rng,
    logistic,
    read_matrix_csv,
    sample_multivariate_normal_many,
    write_matrix_csv,
)

AR_COEFFS = (0.25, 0.1, 0.05)

# 1-based inclusive block used for the fixed axis of the rare experiments.
# 13..37 gives 25 entries so that 25 * 5 / 2500 = 0.05 salient.
RARE_BLOCK = (13, 37)

HMM_START = np.array([0.5, 0.5])
HMM_TRANSITION = np.array([[0.1, 0.9], [0.1, 0.9]])
HMM_MEANS = (np.array([0.1, 1.6, 0.5]), np.array([-0.1, -0.4, -1.5]))
HMM_COVS = (
    np.array([[0.8, 0.0, 0.0], [0.0, 0.8, 0.01], [0.0, 0.01, 0.8]]),
    np.array([[0.8, 0.01, 0.0], [0.01, 0.8, 0.0], [0.0, 0.0, 0.8]]),
)


@dataclass(frozen=True)
class SaliencyTarget:
    """Ground-truth salient entries of a (T, d) input."""

    shape: tuple[int, int]
    salient: frozenset[tuple[int, int]]

    def __post_init__(self):
        T, d = self.shape
        for t, i in self.salient:
            if not (0 <= t < T and 0 <= i < d):
                raise ValueError(f"salient index {(t + 1, i + 1)} outside shape {self.shape}")

    @classmethod
    def from_indicator(cls, q) -> "SaliencyTarget":
        q = np.asarray(q, dtype=bool)
        return cls(q.shape, frozenset(zip(*(a.tolist() for a in np.nonzero(q)))))

    @classmethod
    def from_pairs(cls, shape, pairs_one_based) -> "SaliencyTarget":
        return cls(tuple(shape), frozenset((int(t) - 1, int(i) - 1) for t, i in pairs_one_based))

    def indicator(self) -> np.ndarray:
        q = np.zeros(self.shape, dtype=bool)
        for t, i in self.salient:
            q[t, i] = True
        return q

    def pairs_one_based(self) -> list[list[int]]:
        return [[t + 1, i + 1] for t, i in sorted(self.salient)]

    @property
    def times(self) -> list[int]:
        """Salient times, 1-based."""
        return sorted({t + 1 for t, _ in self.salient})

    @property
    def features(self) -> list[int]:
        """Salient features, 1-based."""
        return sorted({i + 1 for _, i in self.salient})

    def __len__(self):
        return len(self.salient)


@dataclass
class HmmDataset:
    inputs: list[np.ndarray]
    labels: list[np.ndarray]
    states: list[np.ndarray]
    targets: list[SaliencyTarget] = field(default_factory=list)

    def __len__(self):
        return len(self.inputs)

    def subset(self, idx) -> "HmmDataset":
        idx = list(idx)
        return HmmDataset(
            [self.inputs[k] for k in idx],
            [self.labels[k] for k in idx],
            [self.states[k] for k in idx],
            [self.targets[k] for k in idx],
        )

    def label_probabilities(self, k: int) -> np.ndarray:
        return hmm_label_probability(self.inputs[k], self.states[k])


def ar3_filter(eps: np.ndarray, coeffs=AR_COEFFS) -> np.ndarray:
    """Run the AR(3) recursion column-wise over the innovations ``eps`` (T, d).

    History before the first step is zero, so ``x_1 = eps_1``.
    """
    eps = np.asarray(eps, dtype=float)
    x = np.zeros_like(eps)
    p1, p2, p3 = coeffs
    for t in range(eps.shape[0]):
        acc = eps[t].copy()
        if t >= 1:
            acc += p1 * x[t - 1]
        if t >= 2:
            acc += p2 * x[t - 2]
        if t >= 3:
            acc += p3 * x[t - 3]
        x[t] = acc
    return x


def generate_arma(rng: Rng, T: int, d: int) -> np.ndarray:
    if T < 1 or d < 1:
        raise ValueError("T and d must be >= 1")
    return ar3_filter(rng.standard_normal((T, d)))


def _block(lo_hi) -> list[int]:
    """0-based indices of the 1-based inclusive range ``lo_hi``."""
    lo, hi = lo_hi
    return list(range(lo - 1, hi))


def make_rare_feature_target(rng: Rng, T: int = 50, d: int = 50, n_feat: int = 5,
                             salient_times=RARE_BLOCK) -> SaliencyTarget:
    """A few randomly chosen features are salient over a fixed block of times."""
    if n_feat > d or n_feat < 1:
        raise ValueError(f"invalid request: n_feat={n_feat} must be in [1, d={d}]")
    times = _block(salient_times)
    if times[-1] >= T:
        raise ValueError(f"T={T} too short for salient times {salient_times}")
    feats = rng.choice(d, size=n_feat, replace=False)
    return SaliencyTarget((T, d), frozenset((t, int(i)) for t in times for i in feats))


def make_rare_time_target(rng: Rng, T: int = 50, d: int = 50, n_time: int = 5,
                          salient_features=RARE_BLOCK, start: int | None = None) -> SaliencyTarget:
    """A contiguous run of ``n_time`` steps is salient over a fixed block of features.

    ``start`` is the 1-based first salient time; drawn uniformly from
    ``[1 : T - n_time + 1]`` when omitted.
    """
    if n_time < 1 or n_time > T:
        raise ValueError(f"invalid request: n_time={n_time} must be in [1, T={T}]")
    feats = _block(salient_features)
    if feats[-1] >= d:
        raise ValueError(f"d={d} too small for salient features {salient_features}")
    if start is None:
        start = int(rng.integers(1, T - n_time + 2))
    if not 1 <= start <= T - n_time + 1:
        raise ValueError(f"start={start} leaves the sequence")
    times = range(start - 1, start - 1 + n_time)
    return SaliencyTarget((T, d), frozenset((t, i) for t in times for i in feats))


def hmm_label_probability(x: np.ndarray, states: np.ndarray) -> np.ndarray:
    """p_t = logistic(feature 2) in state 0, logistic(feature 3) in state 1."""
    driver = np.where(np.asarray(states) == 0, x[:, 1], x[:, 2])
    return logistic(driver)


def sample_hmm_states(rng: Rng, T: int, start=HMM_START, transition=HMM_TRANSITION) -> np.ndarray:
    states = np.empty(T, dtype=np.int64)
    states[0] = rng.choice(2, p=start)
    u = rng.random(T)
    for t in range(1, T):
        states[t] = int(u[t] >= transition[states[t - 1], 0])
    return states


def generate_hmm_series(rng: Rng, T: int):
    states = sample_hmm_states(rng, T)
    x = np.empty((T, 3))
    for s in (0, 1):
        rows = np.nonzero(states == s)[0]
        if rows.size:
            x[rows] = sample_multivariate_normal_many(rng, HMM_MEANS[s], HMM_COVS[s], rows.size)
    p = hmm_label_probability(x, states)
    labels = (rng.random(T) < p).astype(np.int64)
    target = SaliencyTarget((T, 3), frozenset((t, 1 + int(s)) for t, s in enumerate(states)))
    return x, labels, states, target


def generate_hmm_dataset(rng: Rng, n_series: int, T: int) -> HmmDataset:
    if n_series < 1 or T < 1:
        raise ValueError("n_series and T must be >= 1")
    ds = HmmDataset([], [], [], [])
    for _ in range(n_series):
        x, y, s, tgt = generate_hmm_series(rng, T)
        ds.inputs.append(x)
        ds.labels.append(y)
        ds.states.append(s)
        ds.targets.append(tgt)
    return ds


# -- serialization ---------------------------------------------------------

def _write_int_rows(path: Path, rows) -> None:
    lines = [",".join(str(int(v)) for v in r) for r in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _read_int_rows(path: Path) -> list[np.ndarray]:
    text = path.read_text(encoding="utf-8").strip()
    if not text:
        return []
    return [np.array([int(v) for v in line.split(",")], dtype=np.int64) for line in text.splitlines()]


def save_instances(directory, inputs, targets, meta: dict, labels=None, states=None) -> Path:
    """Write ``inputs/series_<k>.csv``, ``targets.json``, ``meta.json`` (and labels/states)."""
    directory = Path(directory)
    (directory / "inputs").mkdir(parents=True, exist_ok=True)
    for k, x in enumerate(inputs):
        write_matrix_csv(directory / "inputs" / f"series_{k}.csv", x)
    (directory / "targets.json").write_text(
        json.dumps([tgt.pairs_one_based() for tgt in targets]), encoding="utf-8")
    if labels is not None:
        _write_int_rows(directory / "labels.csv", labels)
    if states is not None:
        _write_int_rows(directory / "states.csv", states)
    meta = dict(meta)
    meta["n_series"] = len(inputs)
    (directory / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True), encoding="utf-8")
    return directory


def load_instances(directory):
    """Inverse of :func:`save_instances`; returns (inputs, targets, meta, labels, states)."""
    directory = Path(directory)
    meta = json.loads((directory / "meta.json").read_text(encoding="utf-8"))
    inputs = [read_matrix_csv(directory / "inputs" / f"series_{k}.csv") for k in range(meta["n_series"])]
    pairs = json.loads((directory / "targets.json").read_text(encoding="utf-8"))
    targets = [SaliencyTarget.from_pairs(x.shape, p) for x, p in zip(inputs, pairs)]
    labels = _read_int_rows(directory / "labels.csv") if (directory / "labels.csv").exists() else None
    states = _read_int_rows(directory / "states.csv") if (directory / "states.csv").exists() else None
    return inputs, targets, meta, labels, states


def save_hmm_dataset(directory, ds: HmmDataset, meta: dict) -> Path:
    return save_instances(directory, ds.inputs, ds.targets, meta, ds.labels, ds.states)


def load_hmm_dataset(directory) -> tuple[HmmDataset, dict]:
    inputs, targets, meta, labels, states = load_instances(directory)
    if labels is None or states is None:
        raise FileNotFoundError(f"{directory} has no labels.csv/states.csv")
    return HmmDataset(inputs, labels, states, targets), meta
