"""Mean-field Gaussian variational inference.

The engine maximizes a Monte-Carlo estimate of the evidence lower bound

    ELBO(mu, omega) = E_q[log_joint(theta)] + entropy(q)

for a factorized Gaussian q with means ``mu`` and log standard deviations
``omega``, using reparameterized samples theta = mu + exp(omega) * eps and
an adaptive moment-based ascent.  Model modules supply ``log_joint`` as a
callable returning ``(value, gradient)`` with the gradient computed
analytically; any change-of-variable Jacobian for positive parameters is
part of that value.  The engine adds only the Gaussian entropy.

Three independent random streams are derived from the fit seed: one for
the initialization of mu, one for the per-iteration sample draws, and one
for the periodic ELBO evaluations used by the stopping rule.  Given the
same seed the result is bitwise reproducible.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, NumericalError

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Block:
    """One named slab of the flat parameter vector."""

    name: str
    size: int
    positive: bool = False

    def __post_init__(self):
        if not self.name:
            raise ContractError("block name must be non-empty")
        if self.size < 1:
            raise ContractError(f"block {self.name!r} has size {self.size}, need >= 1")


class ParameterSpace:
    """Ordered layout of named blocks inside one flat vector.

    ``positive`` blocks are bookkeeping only: the engine optimizes every
    coordinate on the unconstrained scale and the model's log-joint is
    responsible for the exp transform and its Jacobian.
    """

    def __init__(self, blocks):
        blocks = list(blocks)
        names = [b.name for b in blocks]
        if len(set(names)) != len(names):
            raise ContractError(f"duplicate block names in {names}")
        if not blocks:
            raise ContractError("parameter space needs at least one block")
        self.blocks = blocks
        self._offsets = {}
        off = 0
        for b in blocks:
            self._offsets[b.name] = off
            off += b.size
        self.total_dim = off

    def offset(self, name: str) -> int:
        return self._offsets[name]

    def slice_of(self, name: str) -> slice:
        off = self._offsets[name]
        size = next(b.size for b in self.blocks if b.name == name)
        return slice(off, off + size)

    def locate(self, flat_index: int):
        """Map a flat coordinate to (block name, index within block)."""
        if not 0 <= flat_index < self.total_dim:
            raise ContractError(f"index {flat_index} outside [0, {self.total_dim})")
        for b in self.blocks:
            off = self._offsets[b.name]
            if flat_index < off + b.size:
                return b.name, flat_index - off
        raise AssertionError("unreachable")


class VariationalPosterior:
    """Factorized Gaussian over the flat parameter vector."""

    def __init__(self, mu, omega):
        mu = np.asarray(mu, dtype=float)
        omega = np.asarray(omega, dtype=float)
        if mu.ndim != 1 or omega.shape != mu.shape:
            raise ContractError("mu and omega must be 1-d vectors of equal length")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(omega))):
            raise ContractError("posterior parameters must be finite")
        self.mu = mu
        self.omega = omega

    @property
    def sd(self):
        return np.exp(self.omega)

    @property
    def dim(self) -> int:
        return self.mu.shape[0]


@dataclass(frozen=True)
class FitConfig:
    seed: int = 0
    max_iters: int = 20000
    mc_samples: int = 8
    learning_rate: float = 0.05
    lr_decay: float = 1.0
    convergence_window: int = 10
    convergence_tol: float = 1e-3
    elbo_check_every: int = 100
    elbo_eval_samples: int = 50
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        problems = []
        if not (isinstance(self.seed, int) and self.seed >= 0):
            problems.append("seed must be a non-negative integer")
        if self.max_iters < 1:
            problems.append("max_iters must be >= 1")
        if self.mc_samples < 1:
            problems.append("mc_samples must be >= 1")
        if not self.learning_rate > 0:
            problems.append("learning_rate must be > 0")
        if not 0 < self.lr_decay <= 1:
            problems.append("lr_decay must lie in (0, 1]")
        if self.convergence_window < 1:
            problems.append("convergence_window must be >= 1")
        if not self.convergence_tol > 0:
            problems.append("convergence_tol must be > 0")
        if self.elbo_check_every < 1:
            problems.append("elbo_check_every must be >= 1")
        if self.elbo_eval_samples < 1:
            problems.append("elbo_eval_samples must be >= 1")
        if problems:
            raise ContractError("; ".join(problems))


@dataclass
class FitResult:
    posterior: VariationalPosterior
    elbo_trace: list = field(default_factory=list)
    trace_iterations: list = field(default_factory=list)
    n_iters: int = 0
    converged: bool = False


def entropy(omega) -> float:
    """Exact entropy of the factorized Gaussian with log-sds omega."""
    omega = np.asarray(omega, dtype=float)
    d = omega.shape[0]
    return float(np.sum(omega)) + 0.5 * d * (1.0 + LOG_2PI)


def _draws(dim: int, n_samples: int, seed) -> np.ndarray:
    # elbo() and grad_estimate() share this so a fixed seed gives common
    # random numbers across both, which the finite-difference oracle needs
    return np.random.default_rng(seed).standard_normal((n_samples, dim))


def elbo(log_joint, space: ParameterSpace, posterior: VariationalPosterior,
         n_samples: int, seed) -> float:
    """Monte-Carlo ELBO estimate, deterministic for a given seed."""
    if n_samples < 1:
        raise ContractError("n_samples must be >= 1")
    eps = _draws(posterior.dim, n_samples, seed)
    sd = posterior.sd
    total = 0.0
    for s in range(n_samples):
        value, _ = log_joint(posterior.mu + sd * eps[s])
        total += value
    return total / n_samples + entropy(posterior.omega)


def grad_estimate(log_joint, space: ParameterSpace, posterior: VariationalPosterior,
                  n_samples: int, seed) -> np.ndarray:
    """Reparameterization gradient of the ELBO w.r.t. (mu, omega), concatenated."""
    if n_samples < 1:
        raise ContractError("n_samples must be >= 1")
    dim = posterior.dim
    eps = _draws(dim, n_samples, seed)
    sd = posterior.sd
    g_mu = np.zeros(dim)
    g_eps = np.zeros(dim)
    for s in range(n_samples):
        _, grad = log_joint(posterior.mu + sd * eps[s])
        g_mu += grad
        g_eps += grad * eps[s]
    g_mu /= n_samples
    # d theta / d omega = exp(omega) * eps, entropy contributes 1 per coordinate
    g_omega = (g_eps / n_samples) * sd + 1.0
    return np.concatenate([g_mu, g_omega])


def _check_finite(value: float, grad: np.ndarray, space: ParameterSpace, iteration: int):
    if not math.isfinite(value):
        raise NumericalError(iteration, "objective")
    if not np.all(np.isfinite(grad)):
        bad = int(np.flatnonzero(~np.isfinite(grad))[0])
        name, within = space.locate(bad)
        raise NumericalError(iteration, name, f"gradient component {within}")


def fit(log_joint, space: ParameterSpace, config: FitConfig = FitConfig(),
        init: VariationalPosterior = None) -> FitResult:
    """Maximize the ELBO by stochastic gradient ascent.

    Stops when the median ELBO over the latest ``convergence_window``
    evaluations differs from the median over the preceding disjoint window
    by less than ``convergence_tol`` in relative terms, or at ``max_iters``.
    """
    dim = space.total_dim
    root = np.random.SeedSequence(config.seed)
    init_ss, steps_ss, evals_ss = root.spawn(3)

    if init is None:
        mu = np.random.default_rng(init_ss).normal(0.0, 0.1, dim)
        omega = np.full(dim, -1.0)
    else:
        if init.dim != dim:
            raise ContractError(f"init has dim {init.dim}, space has {dim}")
        mu = init.mu.copy()
        omega = init.omega.copy()

    step_rng = np.random.default_rng(steps_ss)
    n_checks = max(config.max_iters // config.elbo_check_every, 1)
    eval_seeds = evals_ss.generate_state(n_checks)

    adam_m = np.zeros(2 * dim)
    adam_v = np.zeros(2 * dim)
    b1, b2, eps_adam = config.adam_beta1, config.adam_beta2, config.adam_eps
    n_mc = config.mc_samples
    window = config.convergence_window

    trace = []
    trace_iters = []
    converged = False
    t = 0
    for t in range(1, config.max_iters + 1):
        eps = step_rng.standard_normal((n_mc, dim))
        sd = np.exp(omega)
        g_mu = np.zeros(dim)
        g_eps = np.zeros(dim)
        for s in range(n_mc):
            value, grad = log_joint(mu + sd * eps[s])
            _check_finite(value, grad, space, t)
            g_mu += grad
            g_eps += grad * eps[s]
        g_mu /= n_mc
        g_omega = (g_eps / n_mc) * sd + 1.0
        g = np.concatenate([g_mu, g_omega])

        lr = config.learning_rate * config.lr_decay ** ((t - 1) // 1000)
        adam_m = b1 * adam_m + (1.0 - b1) * g
        adam_v = b2 * adam_v + (1.0 - b2) * g * g
        m_hat = adam_m / (1.0 - b1 ** t)
        v_hat = adam_v / (1.0 - b2 ** t)
        step = lr * m_hat / (np.sqrt(v_hat) + eps_adam)
        mu = mu + step[:dim]
        omega = omega + step[dim:]

        if t % config.elbo_check_every == 0:
            k = t // config.elbo_check_every - 1
            snapshot = VariationalPosterior(mu, omega)
            e = elbo(log_joint, space, snapshot, config.elbo_eval_samples,
                     int(eval_seeds[min(k, n_checks - 1)]))
            if not math.isfinite(e):
                raise NumericalError(t, "objective", "ELBO evaluation")
            trace.append(e)
            trace_iters.append(t)
            if len(trace) >= 2 * window:
                m1 = float(np.median(trace[-window:]))
                m0 = float(np.median(trace[-2 * window:-window]))
                if abs(m1 - m0) / max(1.0, abs(m0)) < config.convergence_tol:
                    converged = True
                    break

    return FitResult(
        posterior=VariationalPosterior(mu, omega),
        elbo_trace=trace,
        trace_iterations=trace_iters,
        n_iters=t,
        converged=converged,
    )
