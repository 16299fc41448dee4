"""Pure-python (numpy) implementations of the hot kernels.

Same call signatures as the compiled module ``gaitdiff._kernels``; the
dispatcher in ``gaitdiff.backend`` picks whichever is available. These
versions accept float32 or float64 and are the reference the compiled
kernels are tested against.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

_INV_SQRT2 = 0.7071067811865476
_INV_SQRT2PI = 0.3989422804014327


def gelu_fwd(x):
    return (0.5 * x * (1.0 + erf(x * _INV_SQRT2))).astype(x.dtype, copy=False)


def gelu_bwd(x, gy):
    phi = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    dens = np.exp(-0.5 * x * x) * _INV_SQRT2PI
    return (gy * (phi + x * dens)).astype(x.dtype, copy=False)


def softmax_fwd(x):
    # x: (N, D), softmax over the last axis
    m = np.max(x, axis=-1, keepdims=True)
    e = np.exp(x - m)
    return e / np.sum(e, axis=-1, keepdims=True)


def softmax_bwd(y, gy):
    dot = np.sum(y * gy, axis=-1, keepdims=True)
    return y * (gy - dot)


def layernorm_fwd(x, w, b, eps):
    # x: (N, D); returns y, mean, rstd (mean/rstd cached for backward)
    mean = np.mean(x, axis=-1, keepdims=True)
    xc = x - mean
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    y = xc * rstd * w + b
    return (
        y.astype(x.dtype, copy=False),
        mean[:, 0].astype(x.dtype, copy=False),
        rstd[:, 0].astype(x.dtype, copy=False),
    )


def layernorm_bwd(x, w, mean, rstd, gy):
    xhat = (x - mean[:, None]) * rstd[:, None]
    gxhat = gy * w
    m1 = np.mean(gxhat, axis=-1, keepdims=True)
    m2 = np.mean(gxhat * xhat, axis=-1, keepdims=True)
    gx = rstd[:, None] * (gxhat - m1 - xhat * m2)
    gw = np.sum(gy * xhat, axis=0)
    gb = np.sum(gy, axis=0)
    return (
        gx.astype(x.dtype, copy=False),
        gw.astype(x.dtype, copy=False),
        gb.astype(x.dtype, copy=False),
    )


def adamw_update(p, g, m, v, t, lr, beta1, beta2, eps, weight_decay):
    # decoupled decay first, then the bias-corrected Adam delta; all in place
    p *= 1.0 - lr * weight_decay
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    mhat = m / (1.0 - beta1**t)
    vhat = v / (1.0 - beta2**t)
    p -= (lr * mhat / (np.sqrt(vhat) + eps)).astype(p.dtype, copy=False)


def pd_substeps(q, qdot, action, kp, kd, inertia, friction, tau_max, dt, nsub):
    """Euler joint substeps, in place on float64 q/qdot (4 joints each)."""
    for _ in range(nsub):
        tau = np.clip(kp * (action - q) - kd * qdot, -tau_max, tau_max)
        qddot = (tau - friction * qdot) / inertia
        qdot += qddot * dt
        q += qdot * dt
