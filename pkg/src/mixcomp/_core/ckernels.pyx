# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled log-joint kernels, drop-in twins of the pure-numpy versions.

Same signatures and return values as ``pykernels``; loops are sequential C
so results are deterministic for a given input.  Summation order differs
from the vectorized numpy code, so the two backends agree to rounding
error, not bitwise.
"""

import math

import numpy as np

cdef double LOG_2PI = math.log(2.0 * math.pi)
cdef double LOG_PI = math.log(math.pi)

from libc.math cimport exp, log


def smcm_logjoint_grad(double[::1] theta, Py_ssize_t[::1] rows, Py_ssize_t[::1] cols,
                       double[::1] vals, Py_ssize_t I, Py_ssize_t J, Py_ssize_t K,
                       double sigma, double lam):
    """Log joint and gradient of the flat model at theta = [U rows, V rows]."""
    cdef Py_ssize_t n = (I + J) * K
    cdef Py_ssize_t n_obs = rows.shape[0]
    cdef Py_ssize_t off_v = I * K
    grad_arr = np.empty(n)
    cdef double[::1] grad = grad_arr
    cdef double inv_s2 = 1.0 / (sigma * sigma)
    cdef double logp = 0.0
    cdef double quad = 0.0
    cdef Py_ssize_t d, m, k, ui, vj
    cdef double pred, t, q, w

    for d in range(n):
        quad += theta[d] * theta[d]
        grad[d] = -theta[d] * inv_s2
    logp = -0.5 * quad * inv_s2 - n * (log(sigma) + 0.5 * LOG_2PI)

    for m in range(n_obs):
        ui = rows[m] * K
        vj = off_v + cols[m] * K
        pred = 0.0
        for k in range(K):
            pred += theta[ui + k] * theta[vj + k]
        t = (vals[m] - pred) / lam
        q = 1.0 + t * t
        logp += -(LOG_PI + log(lam)) - log(q)
        w = 2.0 * t / (lam * q)
        for k in range(K):
            grad[ui + k] += w * theta[vj + k]
            grad[vj + k] += w * theta[ui + k]
    return logp, grad_arr


def hmcm_logjoint_grad(double[::1] theta, Py_ssize_t[::1] rows, Py_ssize_t[::1] cols,
                       double[::1] vals, Py_ssize_t[::1] solute_labels,
                       Py_ssize_t[::1] solvent_labels,
                       Py_ssize_t R, Py_ssize_t S, Py_ssize_t I, Py_ssize_t J,
                       Py_ssize_t K, double sigma_hp, double lam, double eta):
    """Log joint and gradient of the hierarchical model.

    theta layout: A (R*K), B (S*K), U (I*K), V (J*K), log sigma_r (R),
    log sigma_s (S).  The value includes the Exponential priors on the
    deviation scales plus the log-Jacobian of their log transform.
    """
    cdef Py_ssize_t off_b = R * K
    cdef Py_ssize_t off_u = off_b + S * K
    cdef Py_ssize_t off_v = off_u + I * K
    cdef Py_ssize_t off_zr = off_v + J * K
    cdef Py_ssize_t off_zs = off_zr + R
    cdef Py_ssize_t n = off_zs + S
    cdef Py_ssize_t n_obs = rows.shape[0]

    grad_arr = np.zeros(n)
    cdef double[::1] grad = grad_arr
    scale_r_arr = np.empty(R)
    scale_s_arr = np.empty(S)
    dscale_r_arr = np.zeros(R)
    dscale_s_arr = np.zeros(S)
    cdef double[::1] scale_r = scale_r_arr
    cdef double[::1] scale_s = scale_s_arr
    cdef double[::1] dscale_r = dscale_r_arr
    cdef double[::1] dscale_s = dscale_s_arr

    cdef double inv_hp2 = 1.0 / (sigma_hp * sigma_hp)
    cdef double inv_eta = 1.0 / eta
    cdef double logp = 0.0
    cdef double quad = 0.0
    cdef Py_ssize_t d, r, s, i, j, k, m, xi, ci, ui, vj
    cdef double x, c, sc, t, q, w, pred, z

    # Normal(0, sigma_hp) hyperpriors on the class vectors
    for d in range(off_u):
        quad += theta[d] * theta[d]
        grad[d] = -theta[d] * inv_hp2
    logp = -0.5 * quad * inv_hp2 - (off_u) * (log(sigma_hp) + 0.5 * LOG_2PI)

    for r in range(R):
        scale_r[r] = exp(theta[off_zr + r])
    for s in range(S):
        scale_s[s] = exp(theta[off_zs + s])

    # Cauchy(class vector, class scale) priors on component vectors
    for i in range(I):
        r = solute_labels[i]
        sc = scale_r[r]
        xi = off_u + i * K
        ci = r * K
        logp += -K * (LOG_PI + log(sc))
        for k in range(K):
            t = (theta[xi + k] - theta[ci + k]) / sc
            q = 1.0 + t * t
            logp -= log(q)
            w = 2.0 * t / (sc * q)
            grad[xi + k] -= w
            grad[ci + k] += w
            dscale_r[r] += (2.0 * t * t / q - 1.0) / sc
    for j in range(J):
        s = solvent_labels[j]
        sc = scale_s[s]
        xi = off_v + j * K
        ci = off_b + s * K
        logp += -K * (LOG_PI + log(sc))
        for k in range(K):
            t = (theta[xi + k] - theta[ci + k]) / sc
            q = 1.0 + t * t
            logp -= log(q)
            w = 2.0 * t / (sc * q)
            grad[xi + k] -= w
            grad[ci + k] += w
            dscale_s[s] += (2.0 * t * t / q - 1.0) / sc

    # Exponential(eta) priors on the scales, plus the log-transform Jacobian
    for r in range(R):
        z = theta[off_zr + r]
        logp += -log(eta) - scale_r[r] * inv_eta + z
        grad[off_zr + r] = (dscale_r[r] - inv_eta) * scale_r[r] + 1.0
    for s in range(S):
        z = theta[off_zs + s]
        logp += -log(eta) - scale_s[s] * inv_eta + z
        grad[off_zs + s] = (dscale_s[s] - inv_eta) * scale_s[s] + 1.0

    # shared Cauchy likelihood over observed cells
    for m in range(n_obs):
        ui = off_u + rows[m] * K
        vj = off_v + cols[m] * K
        pred = 0.0
        for k in range(K):
            pred += theta[ui + k] * theta[vj + k]
        t = (vals[m] - pred) / lam
        q = 1.0 + t * t
        logp += -(LOG_PI + log(lam)) - log(q)
        w = 2.0 * t / (lam * q)
        for k in range(K):
            grad[ui + k] += w * theta[vj + k]
            grad[vj + k] += w * theta[ui + k]
    return logp, grad_arr
