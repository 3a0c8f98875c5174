"""Dense matrices, seeded random streams and sorting helpers.

Every stochastic routine in the package takes a ``numpy.random.Generator``
obtained from :func:`make_rng`. Streams are derived from a root seed plus an
optional integer key path, so repetition ``k`` of an experiment gets the same
numbers no matter in which order repetitions run.
"""
from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

Rng = np.random.Generator


def make_rng(seed: int, *key: int) -> Rng:
    """Return a PCG64 generator for ``seed`` and sub-stream ``key``.

    ``make_rng(s, 3)`` and ``make_rng(s, 4)`` are statistically independent
    and do not depend on each other's consumption.
    """
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def split_rng(rng: Rng, n: int) -> list[Rng]:
    """Spawn ``n`` child generators from ``rng`` (advances ``rng``'s seed sequence)."""
    return list(rng.spawn(n))


def sample_standard_normal(rng: Rng, n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("empty request: n must be >= 1")
    return rng.standard_normal(n)


def sample_multivariate_normal(rng: Rng, mean, cov) -> np.ndarray:
    """Draw one vector from N(mean, cov) through a Cholesky factor.

    Raises ``numpy.linalg.LinAlgError`` when ``cov`` is not positive definite.
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if cov.shape != (mean.size, mean.size):
        raise ValueError(f"covariance shape {cov.shape} does not match mean of size {mean.size}")
    if not np.allclose(cov, cov.T):
        raise ValueError("covariance must be symmetric")
    chol = np.linalg.cholesky(cov)
    return mean + chol @ rng.standard_normal(mean.size)


def sample_multivariate_normal_many(rng: Rng, mean, cov, size: int) -> np.ndarray:
    """``size`` draws from N(mean, cov), one per row."""
    mean = np.asarray(mean, dtype=float)
    chol = np.linalg.cholesky(np.atleast_2d(np.asarray(cov, dtype=float)))
    return mean + rng.standard_normal((size, mean.size)) @ chol.T


def argsort_ascending(v) -> np.ndarray:
    """Stable ascending argsort; equal values keep their original order."""
    return np.argsort(np.asarray(v), axis=-1, kind="stable")


def as_time_matrix(x, name: str = "X") -> np.ndarray:
    """Validate and return ``x`` as a finite float64 (rows, cols) array."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D (time, features), got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must have at least one row and one column")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def logistic(x):
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


# CSV matrix format: header ``t,f1,...,fd``, one row per time step (t is 1-based).

def matrix_to_csv(x: np.ndarray) -> str:
    x = as_time_matrix(x)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t"] + [f"f{i + 1}" for i in range(x.shape[1])])
    for t, row in enumerate(x, start=1):
        writer.writerow([t] + [repr(float(v)) for v in row])
    return buf.getvalue()


def matrix_from_csv(text: str) -> np.ndarray:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or not rows[0] or rows[0][0] != "t":
        raise ValueError("matrix CSV must start with a 't,f1,...' header")
    data = [[float(v) for v in r[1:]] for r in rows[1:] if r]
    return as_time_matrix(np.array(data, dtype=float))


def write_matrix_csv(path, x: np.ndarray) -> None:
    Path(path).write_text(matrix_to_csv(x), encoding="utf-8")


def read_matrix_csv(path) -> np.ndarray:
    return matrix_from_csv(Path(path).read_text(encoding="utf-8"))
