# cython: language_level=3
"""Compiled hot loops: temporal Gaussian blur and GRU forward / input-BPTT.

Semantics are identical to ``_kernels_py``; see that module for the maths.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, tanh

cnp.import_array()

cdef double SNAP_SIGMA = 1e-6


def blur(const double[:, ::1] X, const double[:, :, ::1] M, double sigma_max, bint with_derivative):
    """Blur X (T, d) under a stack of masks M (K, T, d).

    Returns (out, dout) where dout is d out / d m (or None).
    """
    cdef Py_ssize_t K = M.shape[0], T = M.shape[1], d = M.shape[2]
    cdef Py_ssize_t k, t, i, s, delta
    cdef double m, sigma, q, q2, ratio, w, s0, s1, s2, s3, dsq, xv
    cdef double[:, ::1] XT = np.ascontiguousarray(np.asarray(X).T)
    out_arr = np.empty((K, T, d))
    cdef double[:, :, ::1] out = out_arr
    dout_arr = np.zeros((K, T, d)) if with_derivative else None
    cdef double[:, :, ::1] dout
    if with_derivative:
        dout = dout_arr

    for k in range(K):
        for t in range(T):
            for i in range(d):
                m = M[k, t, i]
                sigma = sigma_max * (1.0 - m)
                if sigma < SNAP_SIGMA:
                    out[k, t, i] = XT[i, t]
                    continue
                q = exp(-0.5 / (sigma * sigma))
                q2 = q * q
                s0 = 1.0
                s1 = XT[i, t]
                s2 = 0.0
                s3 = 0.0
                # weights q^(delta^2) built by the recurrence q^((n+1)^2) = q^(n^2) q^(2n+1)
                w = 1.0
                ratio = q
                delta = 1
                while delta < T:
                    w = w * ratio
                    ratio = ratio * q2
                    if w == 0.0:
                        break
                    dsq = <double>(delta * delta)
                    s = t - delta
                    if s >= 0:
                        xv = XT[i, s]
                        s0 += w
                        s1 += w * xv
                        s2 += w * dsq
                        s3 += w * dsq * xv
                    s = t + delta
                    if s < T:
                        xv = XT[i, s]
                        s0 += w
                        s1 += w * xv
                        s2 += w * dsq
                        s3 += w * dsq * xv
                    delta += 1
                out[k, t, i] = s1 / s0
                if with_derivative:
                    # d/dsigma of s1/s0 with dw/dsigma = w delta^2 / sigma^3; dsigma/dm = -sigma_max
                    dout[k, t, i] = -sigma_max * (s3 * s0 - s1 * s2) / (sigma * sigma * sigma * s0 * s0)
    return out_arr, dout_arr


cdef inline double _sig(double v) nogil:
    if v >= 0:
        return 1.0 / (1.0 + exp(-v))
    cdef double e = exp(v)
    return e / (1.0 + e)


def gru_forward(const double[:, :, ::1] X, const double[:, ::1] W, const double[:, ::1] U,
                const double[::1] b, const double[::1] w_out, double b_out, bint keep_cache):
    """Run the GRU over X (B, T, d). Gate blocks in W, U, b are ordered (z, r, n).

    Returns (probs (B, T), cache or None); cache = (H, G, UN) with
    H (B, T+1, h) hidden states, G (B, T, 3h) gate activations, UN (B, T, h)
    the hidden-to-hidden candidate term before the reset gate.
    """
    cdef Py_ssize_t B = X.shape[0], T = X.shape[1], d = X.shape[2]
    cdef Py_ssize_t h = U.shape[0], h3 = U.shape[1]
    cdef Py_ssize_t bb, t, j, k
    cdef double acc, z, r, n, hp
    probs_arr = np.empty((B, T))
    cdef double[:, ::1] probs = probs_arr
    H_arr = np.zeros((B, T + 1, h))
    G_arr = np.empty((B, T, h3))
    UN_arr = np.empty((B, T, h))
    cdef double[:, :, ::1] H = H_arr
    cdef double[:, :, ::1] G = G_arr
    cdef double[:, :, ::1] UN = UN_arr
    cdef double[::1] a = np.empty(h3)
    cdef double[::1] u = np.empty(h3)

    with nogil:
        for bb in range(B):
            for t in range(T):
                for j in range(h3):
                    a[j] = b[j]
                    u[j] = 0.0
                for k in range(d):
                    acc = X[bb, t, k]
                    for j in range(h3):
                        a[j] += acc * W[k, j]
                for k in range(h):
                    hp = H[bb, t, k]
                    for j in range(h3):
                        u[j] += hp * U[k, j]
                acc = b_out
                for j in range(h):
                    z = _sig(a[j] + u[j])
                    r = _sig(a[h + j] + u[h + j])
                    n = tanh(a[2 * h + j] + r * u[2 * h + j])
                    G[bb, t, j] = z
                    G[bb, t, h + j] = r
                    G[bb, t, 2 * h + j] = n
                    UN[bb, t, j] = u[2 * h + j]
                    hp = (1.0 - z) * n + z * H[bb, t, j]
                    H[bb, t + 1, j] = hp
                    acc += hp * w_out[j]
                probs[bb, t] = _sig(acc)
    if keep_cache:
        return probs_arr, (H_arr, G_arr, UN_arr)
    return probs_arr, None


def gru_input_backward(cache, const double[:, ::1] probs, const double[:, ::1] upstream,
                       const double[:, ::1] WT, const double[:, ::1] UT, const double[::1] w_out):
    """Gradient of sum(upstream * probs) w.r.t. the inputs, via BPTT.

    WT is W transposed (3h, d), UT is U transposed (3h, h).
    """
    H_arr, G_arr, UN_arr = cache
    cdef const double[:, :, ::1] H = H_arr
    cdef const double[:, :, ::1] G = G_arr
    cdef const double[:, :, ::1] UN = UN_arr
    cdef Py_ssize_t B = H.shape[0], T = H.shape[1] - 1, h = H.shape[2]
    cdef Py_ssize_t d = WT.shape[1], h3 = WT.shape[0]
    cdef Py_ssize_t bb, t, j, k
    cdef double dl, p, z, r, n, dn, dan, acc
    dX_arr = np.zeros((B, T, d))
    cdef double[:, :, ::1] dX = dX_arr
    cdef double[::1] dh = np.empty(h)
    cdef double[::1] dprev = np.empty(h)
    cdef double[::1] da = np.empty(h3)
    cdef double[::1] du = np.empty(h3)

    with nogil:
        for bb in range(B):
            for j in range(h):
                dh[j] = 0.0
            t = T - 1
            while t >= 0:
                p = probs[bb, t]
                dl = upstream[bb, t] * p * (1.0 - p)
                for j in range(h):
                    dh[j] += dl * w_out[j]
                for j in range(h):
                    z = G[bb, t, j]
                    r = G[bb, t, h + j]
                    n = G[bb, t, 2 * h + j]
                    dn = dh[j] * (1.0 - z)
                    dan = dn * (1.0 - n * n)
                    da[2 * h + j] = dan
                    du[2 * h + j] = dan * r
                    acc = dan * UN[bb, t, j] * r * (1.0 - r)
                    da[h + j] = acc
                    du[h + j] = acc
                    acc = dh[j] * (H[bb, t, j] - n) * z * (1.0 - z)
                    da[j] = acc
                    du[j] = acc
                    dprev[j] = dh[j] * z
                for j in range(h3):
                    acc = du[j]
                    for k in range(h):
                        dprev[k] += acc * UT[j, k]
                    acc = da[j]
                    for k in range(d):
                        dX[bb, t, k] += acc * WT[j, k]
                for j in range(h):
                    dh[j] = dprev[j]
                t -= 1
    return dX_arr
