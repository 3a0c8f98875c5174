"""Pure numpy versions of the compiled kernels (same signatures and outputs).

Temporal Gaussian blur of entry (t, i) with width ``s = sigma_max * (1 - m)``::

    out = sum_t' x[t', i] g(t - t') / sum_t' g(t - t'),   g(u) = exp(-u^2 / (2 s^2))

and its derivative in ``m`` through ``dg/ds = g u^2 / s^3``. Widths below
``SNAP_SIGMA`` return ``x[t, i]`` unchanged with zero derivative.
"""
from __future__ import annotations

import numpy as np

SNAP_SIGMA = 1e-6
# bounds the (chunk, T, d, T) weight tensor to ~32 MB
_BLUR_BUDGET = 4_000_000


def blur(X, M, sigma_max, with_derivative):
    X = np.asarray(X, dtype=float)
    M = np.asarray(M, dtype=float)
    K, T, d = M.shape
    out = np.empty((K, T, d))
    dout = np.zeros((K, T, d)) if with_derivative else None
    tt = np.arange(T)
    dsq = ((tt[:, None] - tt[None, :]) ** 2).astype(float)  # (t, t')
    xcol = X.T  # (d, t')
    chunk = max(1, _BLUR_BUDGET // (T * d * T))
    for k0 in range(0, K, chunk):
        m = M[k0:k0 + chunk]
        sigma = sigma_max * (1.0 - m)
        snap = sigma < SNAP_SIGMA
        s = np.where(snap, 1.0, sigma)
        # w[k, t, i, t']
        w = np.exp(-dsq[None, :, None, :] / (2.0 * s[..., None] ** 2))
        s0 = w.sum(-1)
        s1 = np.einsum("ktiu,iu->kti", w, xcol)
        out[k0:k0 + chunk] = np.where(snap, X[None], s1 / s0)
        if with_derivative:
            wd = w * dsq[None, :, None, :]
            s2 = wd.sum(-1)
            s3 = np.einsum("ktiu,iu->kti", wd, xcol)
            dpi = -sigma_max * (s3 * s0 - s1 * s2) / (s ** 3 * s0 ** 2)
            dout[k0:k0 + chunk] = np.where(snap, 0.0, dpi)
    return out, dout


def _sigmoid(v):
    return 0.5 * (1.0 + np.tanh(0.5 * v))


def gru_forward(X, W, U, b, w_out, b_out, keep_cache):
    X = np.asarray(X, dtype=float)
    B, T, _ = X.shape
    h = U.shape[0]
    A = X @ W + b  # (B, T, 3h)
    H = np.zeros((B, T + 1, h))
    G = np.empty((B, T, 3 * h))
    UN = np.empty((B, T, h))
    for t in range(T):
        hp = H[:, t]
        u = hp @ U
        z = _sigmoid(A[:, t, :h] + u[:, :h])
        r = _sigmoid(A[:, t, h:2 * h] + u[:, h:2 * h])
        n = np.tanh(A[:, t, 2 * h:] + r * u[:, 2 * h:])
        G[:, t, :h] = z
        G[:, t, h:2 * h] = r
        G[:, t, 2 * h:] = n
        UN[:, t] = u[:, 2 * h:]
        H[:, t + 1] = (1.0 - z) * n + z * hp
    probs = _sigmoid(H[:, 1:] @ w_out + b_out)
    return probs, ((H, G, UN) if keep_cache else None)


def gru_backward(cache, X, dlogit, W, U, w_out, want_params=False):
    """BPTT from output-logit gradients ``dlogit`` (B, T).

    Returns (dX, param grads or None).
    """
    H, G, UN = cache
    B, T1, h = H.shape
    T = T1 - 1
    dX = np.empty((B, T, W.shape[0]))
    DA = np.empty((B, T, 3 * h)) if want_params else None
    DU = np.empty((B, T, 3 * h)) if want_params else None
    dh = np.zeros((B, h))
    UT = U.T
    WT = W.T
    du = np.empty((B, 3 * h))
    da = np.empty((B, 3 * h))
    for t in range(T - 1, -1, -1):
        dh = dh + dlogit[:, t, None] * w_out
        z = G[:, t, :h]
        r = G[:, t, h:2 * h]
        n = G[:, t, 2 * h:]
        dan = dh * (1.0 - z) * (1.0 - n * n)
        da[:, 2 * h:] = dan
        du[:, 2 * h:] = dan * r
        dar = dan * UN[:, t] * r * (1.0 - r)
        da[:, h:2 * h] = dar
        du[:, h:2 * h] = dar
        daz = dh * (H[:, t] - n) * z * (1.0 - z)
        da[:, :h] = daz
        du[:, :h] = daz
        dX[:, t] = da @ WT
        if want_params:
            DA[:, t] = da
            DU[:, t] = du
        dh = dh * z + du @ UT
    if not want_params:
        return dX, None
    grads = {
        "W": np.einsum("btd,btj->dj", np.asarray(X, dtype=float), DA),
        "U": np.einsum("bth,btj->hj", H[:, :-1], DU),
        "b": DA.sum(axis=(0, 1)),
        "w_out": np.einsum("bt,bth->h", dlogit, H[:, 1:]),
        "b_out": np.array(dlogit.sum()),
    }
    return dX, grads


def gru_input_backward(cache, probs, upstream, WT, UT, w_out):
    dX, _ = gru_backward(cache, None, upstream * probs * (1.0 - probs), WT.T, UT.T, w_out)
    return dX
