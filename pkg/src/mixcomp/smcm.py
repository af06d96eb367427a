"""Flat bilinear latent-factor completion model.

Each solute i and solvent j carries a length-K vector with independent
Normal(0, sigma_prior) priors on every coordinate; an observed value is
Cauchy-distributed around the dot product u_i . v_j with scale
lambda_like.  The posterior is approximated with the mean-field engine in
``vi`` and the matrix is completed from the variational means.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import _core, vi
from .errors import ContractError
from .ingest import PropertyMatrix


@dataclass(frozen=True)
class SmcmConfig:
    k: int = 4
    sigma_prior: float = 0.8
    lambda_like: float = 0.15
    fit: vi.FitConfig = field(default_factory=vi.FitConfig)

    def __post_init__(self):
        if self.k < 1:
            raise ContractError("k must be >= 1")
        if not self.sigma_prior > 0:
            raise ContractError("sigma_prior must be > 0")
        if not self.lambda_like > 0:
            raise ContractError("lambda_like must be > 0")


class LatentFactorSet:
    """Point estimates of the solute vectors U (I x K) and solvent vectors V (J x K)."""

    def __init__(self, U, V, solutes=None, solvents=None):
        U = np.asarray(U, dtype=float)
        V = np.asarray(V, dtype=float)
        if U.ndim != 2 or V.ndim != 2 or U.shape[1] != V.shape[1]:
            raise ContractError("U and V must be 2-d with a shared latent dimension")
        if not (np.all(np.isfinite(U)) and np.all(np.isfinite(V))):
            raise ContractError("factors must be finite")
        if solutes is not None and len(solutes) != U.shape[0]:
            raise ContractError("solute key count does not match U")
        if solvents is not None and len(solvents) != V.shape[0]:
            raise ContractError("solvent key count does not match V")
        self.U = U
        self.V = V
        self.solutes = list(solutes) if solutes is not None else None
        self.solvents = list(solvents) if solvents is not None else None

    @property
    def I(self) -> int:
        return self.U.shape[0]

    @property
    def J(self) -> int:
        return self.V.shape[0]

    @property
    def k(self) -> int:
        return self.U.shape[1]

    def to_json_obj(self) -> dict:
        if self.solutes is None or self.solvents is None:
            raise ContractError("cannot serialize factors without component keys")
        return {
            "K": self.k,
            "U": self.U.tolist(),
            "V": self.V.tolist(),
            "solutes": self.solutes,
            "solvents": self.solvents,
        }

    @classmethod
    def from_json_obj(cls, obj) -> "LatentFactorSet":
        try:
            factors = cls(obj["U"], obj["V"], obj["solutes"], obj["solvents"])
            if factors.k != int(obj["K"]):
                raise ContractError("K does not match factor shapes")
        except (KeyError, TypeError) as exc:
            raise ContractError(f"malformed factors object: {exc}") from None
        return factors

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_obj(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "LatentFactorSet":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json_obj(json.load(fh))


def parameter_space(data: PropertyMatrix, k: int) -> vi.ParameterSpace:
    return vi.ParameterSpace([
        vi.Block("U", data.I * k),
        vi.Block("V", data.J * k),
    ])


def make_log_joint(data: PropertyMatrix, config: SmcmConfig, kernels=None):
    """Closure over the data arrays; returns theta -> (log joint, gradient)."""
    kern = kernels if kernels is not None else _core.kernels
    rows, cols, vals = data.rows, data.cols, data.values
    n_solutes, n_solvents, k = data.I, data.J, config.k
    dim = (n_solutes + n_solvents) * k
    sigma, lam = config.sigma_prior, config.lambda_like

    def log_joint(theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (dim,):
            raise ContractError(f"theta has shape {theta.shape}, expected ({dim},)")
        return kern.smcm_logjoint_grad(
            theta, rows, cols, vals, n_solutes, n_solvents, k, sigma, lam
        )

    return log_joint


def log_joint_smcm(theta, data: PropertyMatrix, config: SmcmConfig):
    """Log joint density of factors and observations, with its gradient."""
    return make_log_joint(data, config)(theta)


@dataclass
class SmcmFit:
    factors: LatentFactorSet
    posterior: vi.VariationalPosterior
    result: vi.FitResult


def fit_smcm(data: PropertyMatrix, config: SmcmConfig = SmcmConfig()) -> SmcmFit:
    """Fit the flat model and extract mean factors.

    The variational mean vector is split into U rows then V rows, matching
    the parameter layout of log_joint_smcm.
    """
    if data.n_entries == 0:
        raise ContractError("cannot fit an empty matrix")
    space = parameter_space(data, config.k)
    result = vi.fit(make_log_joint(data, config), space, config.fit)
    mu = result.posterior.mu
    split = data.I * config.k
    factors = LatentFactorSet(
        mu[:split].reshape(data.I, config.k).copy(),
        mu[split:].reshape(data.J, config.k).copy(),
        data.solutes,
        data.solvents,
    )
    return SmcmFit(factors, result.posterior, result)


def predict(factors: LatentFactorSet, i: int, j: int) -> float:
    """Dot product u_i . v_j, accumulated left to right over k."""
    if not 0 <= i < factors.I:
        raise ContractError(f"row {i} outside [0, {factors.I})")
    if not 0 <= j < factors.J:
        raise ContractError(f"column {j} outside [0, {factors.J})")
    u = factors.U[i]
    v = factors.V[j]
    total = 0.0
    for k in range(factors.k):
        total += u[k] * v[k]
    return float(total)


def complete_matrix(factors: LatentFactorSet) -> np.ndarray:
    """Dense I x J matrix of predictions for every cell, observed or not.

    Accumulates rank-1 layers in the same left-to-right order as predict,
    so complete_matrix(f)[i, j] == predict(f, i, j) bitwise.
    """
    out = np.zeros((factors.I, factors.J))
    for k in range(factors.k):
        out += np.outer(factors.U[:, k], factors.V[:, k])
    return out


def sampled_completion(fit: SmcmFit, n_samples: int, seed) -> np.ndarray:
    """Posterior-mean-of-product estimate, averaged over posterior draws.

    Optional alternative to the default mean-factor completion; not used
    by the pipeline.
    """
    if n_samples < 1:
        raise ContractError("n_samples must be >= 1")
    post = fit.posterior
    rng = np.random.default_rng(seed)
    n_i, n_j, k = fit.factors.I, fit.factors.J, fit.factors.k
    split = n_i * k
    acc = np.zeros((n_i, n_j))
    for _ in range(n_samples):
        theta = post.mu + post.sd * rng.standard_normal(post.dim)
        u = theta[:split].reshape(n_i, k)
        v = theta[split:].reshape(n_j, k)
        acc += u @ v.T
    return acc / n_samples


def save_completed(path, completed, solutes, solvents):
    """Write a dense completed matrix with its key lists."""
    completed = np.asarray(completed, dtype=float)
    if completed.shape != (len(solutes), len(solvents)):
        raise ContractError("completed matrix shape does not match key lists")
    obj = {
        "solutes": list(solutes),
        "solvents": list(solvents),
        "values": completed.tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1)
        fh.write("\n")


def load_completed(path):
    """Read back (dense matrix, solutes, solvents) written by save_completed."""
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    try:
        values = np.asarray(obj["values"], dtype=float)
        solutes = list(obj["solutes"])
        solvents = list(obj["solvents"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ContractError(f"malformed completed-matrix object: {exc}") from None
    if values.ndim != 2 or values.shape != (len(solutes), len(solvents)):
        raise ContractError("completed matrix shape does not match key lists")
    return values, solutes, solvents
