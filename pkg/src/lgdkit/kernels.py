"""Jitted chain kernels for the linear-model fast path.

Everything here operates on the precomputed quadratic form of the
half-squared data loss: with A = X^T X and c = X^T y the potential gradient
is A w - c + r(w; theta). Kernels regenerate noise inline from the counter
stream (see `lgdkit.rng`) instead of taking noise arrays, so a chain of any
length runs in O(d) memory and worker threads stay state-free; the inline
generator is the third bitwise-identical copy of the stream.

Regularizer families are dispatched on an integer code:

    0  isotropic   theta = (tau,)          r_j = tau * w_j
    1  diagonal    theta = (tau_1..tau_d)  r_j = tau_j * w_j
    2  softplus    theta = (tau, a)        r_j = tau*w_j + a*beta*sigmoid(beta*w_j)

with ``beta`` a fixed constant (only family 2 reads it). Plain unregularized
descent is family 0 with tau = 0.

All kernels return a status: ``STATUS_OK`` or the 1-based index of the first
iterate containing a non-finite value.

Functions must live in this real module file: numba can only cache compiled
kernels for functions whose source has a locatable file.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

__all__ = [
    "STATUS_OK",
    "FAMILY_ISOTROPIC",
    "FAMILY_DIAGONAL",
    "FAMILY_SOFTPLUS",
    "noise_at",
    "lgd_chain",
    "lgd_chain_record",
    "gd_chain",
    "lgd_dual_chain",
]

STATUS_OK = -1
FAMILY_ISOTROPIC = 0
FAMILY_DIAGONAL = 1
FAMILY_SOFTPLUS = 2

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX_A = np.uint64(0xBF58476D1CE4E5B9)
_MIX_B = np.uint64(0x94D049BB133111EB)
_ONE = np.uint64(1)
_INV53 = 2.0**-53
_TWO_PI = 2.0 * math.pi


@njit(cache=True, nogil=True, inline="always")
def _mix64(z):
    z ^= z >> np.uint64(30)
    z *= _MIX_A
    z ^= z >> np.uint64(27)
    z *= _MIX_B
    z ^= z >> np.uint64(31)
    return z


@njit(cache=True, nogil=True, inline="always")
def _noise(seed, pair):
    # counter pair (2p, 2p+1); u1 shifted into (0, 1] so log never sees 0
    c0 = np.uint64(2) * pair
    x = _mix64(seed + (c0 + _ONE) * _GOLDEN)
    y = _mix64(seed + (c0 + _ONE + _ONE) * _GOLDEN)
    u1 = (np.float64(x >> np.uint64(11)) + 1.0) * _INV53
    u2 = np.float64(y >> np.uint64(11)) * _INV53
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(_TWO_PI * u2)


@njit(cache=True, nogil=True)
def noise_at(seed, step, coord, dim):
    """Jitted twin of ``rng.normal_at``; exposed for cross-checking."""
    return _noise(np.uint64(seed), np.uint64(step * dim + coord))


@njit(cache=True, nogil=True, inline="always")
def _sigmoid(x):
    # large |x| saturates through inf without faulting
    return 1.0 / (1.0 + math.exp(-x))


@njit(cache=True, nogil=True, inline="always")
def _reg_term(family, theta, beta, wj, j):
    if family == 0:
        return theta[0] * wj
    if family == 1:
        return theta[j] * wj
    return theta[0] * wj + theta[1] * beta * _sigmoid(beta * wj)


@njit(cache=True, nogil=True)
def lgd_chain(A, c, family, theta, beta, burn, keep, eta, seed, w0, wbar_out):
    """Run burn+keep ULA steps; write the mean of the last ``keep`` iterates.

    Consolidation accumulates in iterate order; the reduction order is part
    of the reproducibility contract.
    """
    d = w0.shape[0]
    sd = np.uint64(seed)
    root = math.sqrt(2.0 * eta)
    w = w0.copy()
    wsum = np.zeros(d)
    g = np.empty(d)
    total = burn + keep
    for k in range(total):
        for j in range(d):
            acc = -c[j]
            for i in range(d):
                acc += A[j, i] * w[i]
            g[j] = acc + _reg_term(family, theta, beta, w[j], j)
        ok = True
        for j in range(d):
            w[j] = w[j] - eta * g[j] + root * _noise(sd, np.uint64(k * d + j))
            if not math.isfinite(w[j]):
                ok = False
        if not ok:
            return k + 1
        if k >= burn:
            for j in range(d):
                wsum[j] += w[j]
    for j in range(d):
        wbar_out[j] = wsum[j] / keep
    return STATUS_OK


@njit(cache=True, nogil=True)
def lgd_chain_record(A, c, family, theta, beta, burn, keep, eta, seed, w0, wbar_out, trace_out):
    """As `lgd_chain` but also record every iterate: row k holds iterate k+1."""
    d = w0.shape[0]
    sd = np.uint64(seed)
    root = math.sqrt(2.0 * eta)
    w = w0.copy()
    wsum = np.zeros(d)
    g = np.empty(d)
    total = burn + keep
    for k in range(total):
        for j in range(d):
            acc = -c[j]
            for i in range(d):
                acc += A[j, i] * w[i]
            g[j] = acc + _reg_term(family, theta, beta, w[j], j)
        ok = True
        for j in range(d):
            w[j] = w[j] - eta * g[j] + root * _noise(sd, np.uint64(k * d + j))
            trace_out[k, j] = w[j]
            if not math.isfinite(w[j]):
                ok = False
        if not ok:
            return k + 1
        if k >= burn:
            for j in range(d):
                wsum[j] += w[j]
    for j in range(d):
        wbar_out[j] = wsum[j] / keep
    return STATUS_OK


@njit(cache=True, nogil=True)
def gd_chain(A, c, family, theta, beta, iters, eta, w0, w_out):
    """Plain gradient descent on the same potential (no noise)."""
    d = w0.shape[0]
    w = w0.copy()
    g = np.empty(d)
    for k in range(iters):
        for j in range(d):
            acc = -c[j]
            for i in range(d):
                acc += A[j, i] * w[i]
            g[j] = acc + _reg_term(family, theta, beta, w[j], j)
        ok = True
        for j in range(d):
            w[j] = w[j] - eta * g[j]
            if not math.isfinite(w[j]):
                ok = False
        if not ok:
            return k + 1
    for j in range(d):
        w_out[j] = w[j]
    return STATUS_OK


@njit(cache=True, nogil=True)
def lgd_dual_chain(A, c, family, theta, beta, burn, keep, eta, seed, wbar_out, tbar_out):
    """ULA chain with forward-mode tangents in log hyperparameter space.

    Tangent rows 0..h-1 track d w_k / d log theta_t, row h tracks
    d w_k / d log eta, all with the noise realization held fixed. Per step,
    at the current w with M = A + diag(J_r):

        T_t'   = T_t - eta * (M T_t + s_t)        s_t = d r / d log theta_t
        T_eta' = T_eta - eta * (M T_eta + g) + sqrt(2 eta)/2 * xi_k

    using values at the old w, then w steps as usual with the same xi_k.
    Consolidated means of w and every tangent row are written out.
    """
    d = A.shape[0]
    h = theta.shape[0]
    ntan = h + 1
    sd = np.uint64(seed)
    root = math.sqrt(2.0 * eta)
    half_root = 0.5 * root
    w = np.zeros(d)
    t = np.zeros((ntan, d))
    tnew = np.empty((ntan, d))
    wsum = np.zeros(d)
    tsum = np.zeros((ntan, d))
    g = np.empty(d)
    jr = np.empty(d)
    xi = np.empty(d)
    total = burn + keep
    for k in range(total):
        for j in range(d):
            acc = -c[j]
            for i in range(d):
                acc += A[j, i] * w[i]
            if family == 0:
                g[j] = acc + theta[0] * w[j]
                jr[j] = theta[0]
            elif family == 1:
                g[j] = acc + theta[j] * w[j]
                jr[j] = theta[j]
            else:
                s = _sigmoid(beta * w[j])
                g[j] = acc + theta[0] * w[j] + theta[1] * beta * s
                jr[j] = theta[0] + theta[1] * beta * beta * s * (1.0 - s)
            xi[j] = _noise(sd, np.uint64(k * d + j))
        for tt in range(ntan):
            for j in range(d):
                acc = jr[j] * t[tt, j]
                for i in range(d):
                    acc += A[j, i] * t[tt, i]
                if tt == h:
                    tnew[tt, j] = t[tt, j] - eta * (acc + g[j]) + half_root * xi[j]
                else:
                    if family == 0:
                        src = theta[0] * w[j]
                    elif family == 1:
                        src = theta[j] * w[j] if j == tt else 0.0
                    elif tt == 0:
                        src = theta[0] * w[j]
                    else:
                        src = theta[1] * beta * _sigmoid(beta * w[j])
                    tnew[tt, j] = t[tt, j] - eta * (acc + src)
        ok = True
        for j in range(d):
            w[j] = w[j] - eta * g[j] + root * xi[j]
            if not math.isfinite(w[j]):
                ok = False
            for tt in range(ntan):
                t[tt, j] = tnew[tt, j]
                if not math.isfinite(t[tt, j]):
                    ok = False
        if not ok:
            return k + 1
        if k >= burn:
            for j in range(d):
                wsum[j] += w[j]
                for tt in range(ntan):
                    tsum[tt, j] += t[tt, j]
    for j in range(d):
        wbar_out[j] = wsum[j] / keep
        for tt in range(ntan):
            tbar_out[tt, j] = tsum[tt, j] / keep
    return STATUS_OK
