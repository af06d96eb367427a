"""Pure-numpy reference implementation of the hot model kernels.

Same contracts as the compiled module ``ckernels``; used as the import-time
fallback and as the comparison branch in benchmarks and backend tests.
Inputs are assumed validated by the model layer.
"""

import math

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)
LOG_PI = math.log(math.pi)


def smcm_logjoint_grad(theta, rows, cols, vals, I, J, K, sigma, lam):
    """Flat-prior bilinear model: zero-centered Normal priors on every latent
    coordinate, Cauchy observation likelihood around the row/column dot
    product. Returns ``(log_joint, gradient)`` over the packed ``[U, V]``
    parameter vector."""
    n = (I + J) * K
    U = theta[: I * K].reshape(I, K)
    V = theta[I * K :].reshape(J, K)

    logp = -0.5 * float(theta @ theta) / (sigma * sigma) - n * (math.log(sigma) + 0.5 * LOG_2PI)
    grad = theta / (-sigma * sigma)

    gU = grad[: I * K].reshape(I, K)
    gV = grad[I * K :].reshape(J, K)

    m = rows.shape[0]
    if m:
        Ui = U[rows]
        Vj = V[cols]
        pred = np.einsum("mk,mk->m", Ui, Vj)
        t = (vals - pred) / lam
        q = 1.0 + t * t
        logp += -m * (LOG_PI + math.log(lam)) - float(np.sum(np.log(q)))
        # d log-likelihood / d pred
        w = 2.0 * t / (lam * q)
        np.add.at(gU, rows, w[:, None] * Vj)
        np.add.at(gV, cols, w[:, None] * Ui)

    return logp, grad


def hmcm_logjoint_grad(theta, rows, cols, vals, solute_labels, solvent_labels,
                       R, S, I, J, K, sigma_hp, lam, eta):
    """Class-prior hierarchical model.

    Packed layout: class matrices A (R x K) and B (S x K), component matrices
    U (I x K) and V (J x K), then the log class-deviation scales (R then S).
    Terms: Normal(0, sigma_hp) on A and B, Cauchy(class vector, class scale)
    on U and V, Exponential(eta) on each scale plus the log-transform
    Jacobian, and the same Cauchy likelihood as the flat model.
    """
    nA = R * K
    nB = S * K
    nU = I * K
    nV = J * K
    off_u = nA + nB
    off_z = off_u + nU + nV

    A = theta[:nA].reshape(R, K)
    B = theta[nA : nA + nB].reshape(S, K)
    U = theta[off_u : off_u + nU].reshape(I, K)
    V = theta[off_u + nU : off_z].reshape(J, K)
    zr = theta[off_z : off_z + R]
    zs = theta[off_z + R :]
    sr = np.exp(zr)
    ss = np.exp(zs)

    grad = np.zeros_like(theta)
    gA = grad[:nA].reshape(R, K)
    gB = grad[nA : nA + nB].reshape(S, K)
    gU = grad[off_u : off_u + nU].reshape(I, K)
    gV = grad[off_u + nU : off_z].reshape(J, K)
    gzr = grad[off_z : off_z + R]
    gzs = grad[off_z + R :]

    # hyperpriors on the class vectors
    hp2 = sigma_hp * sigma_hp
    logp = (
        -0.5 * (float(np.sum(A * A)) + float(np.sum(B * B))) / hp2
        - (nA + nB) * (math.log(sigma_hp) + 0.5 * LOG_2PI)
    )
    gA -= A / hp2
    gB -= B / hp2

    # class-conditional Cauchy priors on the component vectors
    for X, gX, gC, C, gz, z, scale, labels, nclass in (
        (U, gU, gA, A, gzr, zr, sr, solute_labels, R),
        (V, gV, gB, B, gzs, zs, ss, solvent_labels, S),
    ):
        s_i = scale[labels]
        t = (X - C[labels]) / s_i[:, None]
        q = 1.0 + t * t
        logp += -X.size * LOG_PI - K * float(np.sum(np.log(s_i))) - float(np.sum(np.log(q)))
        w = 2.0 * t / (s_i[:, None] * q)
        gX -= w
        np.add.at(gC, labels, w)
        # d/d scale, accumulated per class, chained to the log scale below
        ds_i = (np.sum(2.0 * t * t / q, axis=1) - K) / s_i
        dscale = np.zeros(nclass)
        np.add.at(dscale, labels, ds_i)
        # Exponential(eta) prior on the scale plus the log-transform Jacobian
        logp += float(np.sum(-math.log(eta) - scale / eta + z))
        gz += (dscale - 1.0 / eta) * scale + 1.0

    # likelihood, identical in form to the flat model
    m = rows.shape[0]
    if m:
        Ui = U[rows]
        Vj = V[cols]
        pred = np.einsum("mk,mk->m", Ui, Vj)
        t = (vals - pred) / lam
        q = 1.0 + t * t
        logp += -m * (LOG_PI + math.log(lam)) - float(np.sum(np.log(q)))
        w = 2.0 * t / (lam * q)
        np.add.at(gU, rows, w[:, None] * Vj)
        np.add.at(gV, cols, w[:, None] * Ui)

    return logp, grad
