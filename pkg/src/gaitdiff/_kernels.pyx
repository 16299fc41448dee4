# Compiled hot kernels (float32 activations, float64 plant loop).
# Mirrors gaitdiff._kernels_py; keep the two in sync.

import numpy as np

cimport numpy as cnp
from libc.math cimport erff, expf, sqrt, fmax, fmin, pow

cnp.import_array()

cdef float INV_SQRT2 = 0.7071067811865476
cdef float INV_SQRT2PI = 0.3989422804014327


def gelu_fwd(cnp.ndarray[cnp.float32_t, ndim=1] x):
    cdef Py_ssize_t i, n = x.shape[0]
    cdef cnp.ndarray[cnp.float32_t, ndim=1] y = np.empty(n, dtype=np.float32)
    cdef float v
    for i in range(n):
        v = x[i]
        y[i] = 0.5 * v * (1.0 + erff(v * INV_SQRT2))
    return y


def gelu_bwd(cnp.ndarray[cnp.float32_t, ndim=1] x,
             cnp.ndarray[cnp.float32_t, ndim=1] gy):
    cdef Py_ssize_t i, n = x.shape[0]
    cdef cnp.ndarray[cnp.float32_t, ndim=1] gx = np.empty(n, dtype=np.float32)
    cdef float v, phi, dens
    for i in range(n):
        v = x[i]
        phi = 0.5 * (1.0 + erff(v * INV_SQRT2))
        dens = expf(-0.5 * v * v) * INV_SQRT2PI
        gx[i] = gy[i] * (phi + v * dens)
    return gx


def softmax_fwd(cnp.ndarray[cnp.float32_t, ndim=2] x):
    cdef Py_ssize_t i, j, n = x.shape[0], d = x.shape[1]
    cdef cnp.ndarray[cnp.float32_t, ndim=2] y = np.empty((n, d), dtype=np.float32)
    cdef float m, e
    cdef double s
    for i in range(n):
        m = x[i, 0]
        for j in range(1, d):
            if x[i, j] > m:
                m = x[i, j]
        s = 0.0
        for j in range(d):
            e = expf(x[i, j] - m)
            y[i, j] = e
            s += e
        for j in range(d):
            y[i, j] = <float>(y[i, j] / s)
    return y


def softmax_bwd(cnp.ndarray[cnp.float32_t, ndim=2] y,
                cnp.ndarray[cnp.float32_t, ndim=2] gy):
    cdef Py_ssize_t i, j, n = y.shape[0], d = y.shape[1]
    cdef cnp.ndarray[cnp.float32_t, ndim=2] gx = np.empty((n, d), dtype=np.float32)
    cdef double dot
    for i in range(n):
        dot = 0.0
        for j in range(d):
            dot += y[i, j] * gy[i, j]
        for j in range(d):
            gx[i, j] = y[i, j] * (gy[i, j] - <float>dot)
    return gx


def layernorm_fwd(cnp.ndarray[cnp.float32_t, ndim=2] x,
                  cnp.ndarray[cnp.float32_t, ndim=1] w,
                  cnp.ndarray[cnp.float32_t, ndim=1] b,
                  float eps):
    cdef Py_ssize_t i, j, n = x.shape[0], d = x.shape[1]
    cdef cnp.ndarray[cnp.float32_t, ndim=2] y = np.empty((n, d), dtype=np.float32)
    cdef cnp.ndarray[cnp.float32_t, ndim=1] mean = np.empty(n, dtype=np.float32)
    cdef cnp.ndarray[cnp.float32_t, ndim=1] rstd = np.empty(n, dtype=np.float32)
    cdef double mu, var, xc
    cdef float r, muf
    for i in range(n):
        mu = 0.0
        for j in range(d):
            mu += x[i, j]
        mu /= d
        var = 0.0
        for j in range(d):
            xc = x[i, j] - mu
            var += xc * xc
        var /= d
        muf = <float>mu
        r = <float>(1.0 / sqrt(var + eps))
        mean[i] = muf
        rstd[i] = r
        for j in range(d):
            y[i, j] = (x[i, j] - muf) * r * w[j] + b[j]
    return y, mean, rstd


def layernorm_bwd(cnp.ndarray[cnp.float32_t, ndim=2] x,
                  cnp.ndarray[cnp.float32_t, ndim=1] w,
                  cnp.ndarray[cnp.float32_t, ndim=1] mean,
                  cnp.ndarray[cnp.float32_t, ndim=1] rstd,
                  cnp.ndarray[cnp.float32_t, ndim=2] gy):
    cdef Py_ssize_t i, j, n = x.shape[0], d = x.shape[1]
    cdef cnp.ndarray[cnp.float32_t, ndim=2] gx = np.empty((n, d), dtype=np.float32)
    cdef cnp.ndarray[cnp.float32_t, ndim=1] gw = np.zeros(d, dtype=np.float32)
    cdef cnp.ndarray[cnp.float32_t, ndim=1] gb = np.zeros(d, dtype=np.float32)
    cdef double m1, m2
    cdef float xhat, gxhat, r, mu, fm1, fm2
    for i in range(n):
        mu = mean[i]
        r = rstd[i]
        m1 = 0.0
        m2 = 0.0
        for j in range(d):
            xhat = (x[i, j] - mu) * r
            gxhat = gy[i, j] * w[j]
            m1 += gxhat
            m2 += gxhat * xhat
            gw[j] += gy[i, j] * xhat
            gb[j] += gy[i, j]
        fm1 = <float>(m1 / d)
        fm2 = <float>(m2 / d)
        for j in range(d):
            xhat = (x[i, j] - mu) * r
            gx[i, j] = r * (gy[i, j] * w[j] - fm1 - xhat * fm2)
    return gx, gw, gb


def adamw_update(cnp.ndarray[cnp.float32_t, ndim=1] p,
                 cnp.ndarray[cnp.float32_t, ndim=1] g,
                 cnp.ndarray[cnp.float32_t, ndim=1] m,
                 cnp.ndarray[cnp.float32_t, ndim=1] v,
                 long t, double lr, double beta1, double beta2,
                 double eps, double weight_decay):
    cdef Py_ssize_t i, n = p.shape[0]
    cdef double bc1 = 1.0 - pow(beta1, t)
    cdef double bc2 = 1.0 - pow(beta2, t)
    cdef double mhat, vhat, gi
    for i in range(n):
        gi = g[i]
        p[i] = p[i] * (1.0 - lr * weight_decay)
        m[i] = beta1 * m[i] + (1.0 - beta1) * gi
        v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi
        mhat = m[i] / bc1
        vhat = v[i] / bc2
        p[i] = p[i] - <float>(lr * mhat / (sqrt(vhat) + eps))


def pd_substeps(cnp.ndarray[cnp.float64_t, ndim=1] q,
                cnp.ndarray[cnp.float64_t, ndim=1] qdot,
                cnp.ndarray[cnp.float64_t, ndim=1] action,
                double kp, double kd, double inertia, double friction,
                double tau_max, double dt, long nsub):
    cdef Py_ssize_t s, j, nj = q.shape[0]
    cdef double tau
    for s in range(nsub):
        for j in range(nj):
            tau = kp * (action[j] - q[j]) - kd * qdot[j]
            tau = fmax(-tau_max, fmin(tau, tau_max))
            qdot[j] = qdot[j] + (tau - friction * qdot[j]) / inertia * dt
            q[j] = q[j] + qdot[j] * dt
