"""Hierarchical latent-factor completion model.

Components inherit their priors from class-level vectors: each solute
class r carries a vector A_r with Normal(0, sigma_hp) hyperpriors and a
positive deviation scale sigma_r with an Exponential(eta) prior, and every
solute vector u_i gets an independent Cauchy(A_{r(i),k}, sigma_{r(i)})
prior per coordinate (solvents mirror this with B_s, sigma_s).  The
likelihood is the same Cauchy form as the flat model.  Deviation scales
are optimized on the log scale; the exp transform's Jacobian is part of
the log joint.

Known components are predicted from their own vectors exactly as in the
flat model; class vectors matter at prediction time only for components
absent from the training data, via predict_cold.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import _core, vi
from .clustering import ClassAssignment
from .errors import ContractError
from .ingest import PropertyMatrix


@dataclass(frozen=True)
class HmcmConfig:
    k: int = 4
    sigma_hp: float = 1.0
    lambda_like: float = 0.15
    eta: float = 1.0
    fit: vi.FitConfig = field(default_factory=vi.FitConfig)

    def __post_init__(self):
        if self.k < 1:
            raise ContractError("k must be >= 1")
        if not self.sigma_hp > 0:
            raise ContractError("sigma_hp must be > 0")
        if not self.lambda_like > 0:
            raise ContractError("lambda_like must be > 0")
        if not self.eta > 0:
            raise ContractError("eta must be > 0")


class HierarchicalParams:
    """Point estimates of class vectors, deviation scales, and component vectors."""

    def __init__(self, A, B, sigma_r, sigma_s, U, V,
                 solutes=None, solvents=None, solute_labels=None, solvent_labels=None):
        A = np.asarray(A, dtype=float)
        B = np.asarray(B, dtype=float)
        U = np.asarray(U, dtype=float)
        V = np.asarray(V, dtype=float)
        sigma_r = np.asarray(sigma_r, dtype=float)
        sigma_s = np.asarray(sigma_s, dtype=float)
        shapes_2d = [A, B, U, V]
        if any(x.ndim != 2 for x in shapes_2d):
            raise ContractError("A, B, U, V must be 2-d")
        k = A.shape[1]
        if any(x.shape[1] != k for x in shapes_2d):
            raise ContractError("A, B, U, V must share the latent dimension")
        if sigma_r.shape != (A.shape[0],) or sigma_s.shape != (B.shape[0],):
            raise ContractError("deviation scale lengths must match class counts")
        for x in (A, B, U, V, sigma_r, sigma_s):
            if not np.all(np.isfinite(x)):
                raise ContractError("parameters must be finite")
        if not (np.all(sigma_r > 0) and np.all(sigma_s > 0)):
            raise ContractError("deviation scales must be positive")
        self.A = A
        self.B = B
        self.sigma_r = sigma_r
        self.sigma_s = sigma_s
        self.U = U
        self.V = V
        self.solutes = list(solutes) if solutes is not None else None
        self.solvents = list(solvents) if solvents is not None else None
        self.solute_labels = list(solute_labels) if solute_labels is not None else None
        self.solvent_labels = list(solvent_labels) if solvent_labels is not None else None

    @property
    def R(self) -> int:
        return self.A.shape[0]

    @property
    def S(self) -> int:
        return self.B.shape[0]

    @property
    def I(self) -> int:
        return self.U.shape[0]

    @property
    def J(self) -> int:
        return self.V.shape[0]

    @property
    def k(self) -> int:
        return self.A.shape[1]

    def to_json_obj(self) -> dict:
        if self.solutes is None or self.solvents is None:
            raise ContractError("cannot serialize params without component keys")
        if self.solute_labels is None or self.solvent_labels is None:
            raise ContractError("cannot serialize params without class labels")
        return {
            "K": self.k,
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "sigma_r": self.sigma_r.tolist(),
            "sigma_s": self.sigma_s.tolist(),
            "U": self.U.tolist(),
            "V": self.V.tolist(),
            "solutes": self.solutes,
            "solvents": self.solvents,
            "solute_labels": self.solute_labels,
            "solvent_labels": self.solvent_labels,
        }

    @classmethod
    def from_json_obj(cls, obj) -> "HierarchicalParams":
        try:
            params = cls(
                obj["A"], obj["B"], obj["sigma_r"], obj["sigma_s"], obj["U"], obj["V"],
                obj["solutes"], obj["solvents"],
                obj["solute_labels"], obj["solvent_labels"],
            )
            if params.k != int(obj["K"]):
                raise ContractError("K does not match parameter shapes")
        except (KeyError, TypeError) as exc:
            raise ContractError(f"malformed params object: {exc}") from None
        return params

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_obj(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "HierarchicalParams":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json_obj(json.load(fh))


def parameter_space(data: PropertyMatrix, solute_classes: ClassAssignment,
                    solvent_classes: ClassAssignment, k: int) -> vi.ParameterSpace:
    n_r, n_s = solute_classes.n_classes, solvent_classes.n_classes
    return vi.ParameterSpace([
        vi.Block("A", n_r * k),
        vi.Block("B", n_s * k),
        vi.Block("U", data.I * k),
        vi.Block("V", data.J * k),
        vi.Block("log_sigma_r", n_r, positive=True),
        vi.Block("log_sigma_s", n_s, positive=True),
    ])


def _check_assignments(data: PropertyMatrix, solute_classes: ClassAssignment,
                       solvent_classes: ClassAssignment):
    if len(solute_classes) != data.I:
        raise ContractError(
            f"solute assignment covers {len(solute_classes)} leaves, matrix has {data.I}"
        )
    if len(solvent_classes) != data.J:
        raise ContractError(
            f"solvent assignment covers {len(solvent_classes)} leaves, matrix has {data.J}"
        )


def make_log_joint(data: PropertyMatrix, solute_classes: ClassAssignment,
                   solvent_classes: ClassAssignment, config: HmcmConfig, kernels=None):
    """Closure over data and class labels; returns theta -> (log joint, gradient)."""
    _check_assignments(data, solute_classes, solvent_classes)
    kern = kernels if kernels is not None else _core.kernels
    rows, cols, vals = data.rows, data.cols, data.values
    solute_labels = np.asarray(solute_classes.labels, dtype=np.intp)
    solvent_labels = np.asarray(solvent_classes.labels, dtype=np.intp)
    n_r, n_s = solute_classes.n_classes, solvent_classes.n_classes
    n_i, n_j, k = data.I, data.J, config.k
    dim = (n_r + n_s + n_i + n_j) * k + n_r + n_s

    def log_joint(theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (dim,):
            raise ContractError(f"theta has shape {theta.shape}, expected ({dim},)")
        return kern.hmcm_logjoint_grad(
            theta, rows, cols, vals, solute_labels, solvent_labels,
            n_r, n_s, n_i, n_j, k, config.sigma_hp, config.lambda_like, config.eta,
        )

    return log_joint


def log_joint_hmcm(theta, data: PropertyMatrix, solute_classes: ClassAssignment,
                   solvent_classes: ClassAssignment, config: HmcmConfig):
    """Log joint of class vectors, scales, component vectors, and observations."""
    return make_log_joint(data, solute_classes, solvent_classes, config)(theta)


def unpack(theta, R: int, S: int, I: int, J: int, k: int):
    """Split a flat parameter vector into (A, B, U, V, sigma_r, sigma_s)."""
    theta = np.asarray(theta, dtype=float)
    expected = (R + S + I + J) * k + R + S
    if theta.shape != (expected,):
        raise ContractError(f"theta has shape {theta.shape}, expected ({expected},)")
    off = 0
    out = []
    for count in (R, S, I, J):
        out.append(theta[off:off + count * k].reshape(count, k).copy())
        off += count * k
    sigma_r = np.exp(theta[off:off + R])
    sigma_s = np.exp(theta[off + R:off + R + S])
    return out[0], out[1], out[2], out[3], sigma_r, sigma_s


@dataclass
class HmcmFit:
    params: HierarchicalParams
    posterior: vi.VariationalPosterior
    result: vi.FitResult


def fit_hmcm(data: PropertyMatrix, solute_classes: ClassAssignment,
             solvent_classes: ClassAssignment,
             config: HmcmConfig = HmcmConfig()) -> HmcmFit:
    """Fit the hierarchical model; point estimates come from the variational means."""
    if data.n_entries == 0:
        raise ContractError("cannot fit an empty matrix")
    _check_assignments(data, solute_classes, solvent_classes)
    space = parameter_space(data, solute_classes, solvent_classes, config.k)
    log_joint = make_log_joint(data, solute_classes, solvent_classes, config)
    result = vi.fit(log_joint, space, config.fit)
    A, B, U, V, sigma_r, sigma_s = unpack(
        result.posterior.mu,
        solute_classes.n_classes, solvent_classes.n_classes,
        data.I, data.J, config.k,
    )
    params = HierarchicalParams(
        A, B, sigma_r, sigma_s, U, V,
        data.solutes, data.solvents,
        solute_classes.labels, solvent_classes.labels,
    )
    return HmcmFit(params, result.posterior, result)


def _dot(u, v) -> float:
    total = 0.0
    for k in range(u.shape[0]):
        total += u[k] * v[k]
    return float(total)


def predict_hmcm(params: HierarchicalParams, i: int, j: int) -> float:
    """Dot product u_i . v_j; class vectors are not consulted for known components."""
    if not 0 <= i < params.I:
        raise ContractError(f"row {i} outside [0, {params.I})")
    if not 0 <= j < params.J:
        raise ContractError(f"column {j} outside [0, {params.J})")
    return _dot(params.U[i], params.V[j])


def predict_cold(params: HierarchicalParams, solute_class=None, solvent_class=None,
                 i=None, j=None) -> float:
    """Prediction for a component unseen in training, via its class vector.

    Exactly one of solute_class / solvent_class must be given: the class
    vector stands in for the unknown component and the counterpart is a
    known index (j for a cold solute, i for a cold solvent).
    """
    if (solute_class is None) == (solvent_class is None):
        raise ContractError("give exactly one of solute_class or solvent_class")
    if solute_class is not None:
        if not 0 <= solute_class < params.R:
            raise ContractError(f"solute class {solute_class} outside [0, {params.R})")
        if j is None or not 0 <= j < params.J:
            raise ContractError(f"column {j} outside [0, {params.J})")
        return _dot(params.A[solute_class], params.V[j])
    if not 0 <= solvent_class < params.S:
        raise ContractError(f"solvent class {solvent_class} outside [0, {params.S})")
    if i is None or not 0 <= i < params.I:
        raise ContractError(f"row {i} outside [0, {params.I})")
    return _dot(params.U[i], params.B[solvent_class])


def complete_matrix_hmcm(params: HierarchicalParams) -> np.ndarray:
    """Dense I x J prediction matrix from the component vectors."""
    out = np.zeros((params.I, params.J))
    for k in range(params.k):
        out += np.outer(params.U[:, k], params.V[:, k])
    return out
