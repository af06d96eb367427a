"""Pipeline configuration: flat key-value files with defaults preloaded.

Grammar, one setting per line:

    key = value        # trailing comments are allowed
    # full-line comment
                       (blank lines ignored)

Every tunable of every stage is a key; anything absent keeps its default,
unknown keys are rejected, and validation reports all problems at once
rather than stopping at the first.  The recognized keys:

    base_seed          non-negative int, default 0
    workers            int >= 1, default 1
    input              path to the observation CSV
    outdir             directory for pipeline artifacts
    k                  latent dimension, int >= 1, default 4
    sigma              flat-model prior sd, > 0, default 0.8
    lambda             Cauchy likelihood scale, > 0, default 0.15
    sigma_hp           class-vector hyperprior sd, > 0, default 1.0
    eta                deviation-scale prior mean, > 0, default 1.0
    solute_classes     int >= 1, default 12
    solvent_classes    int >= 1, default 17
    max_iters          int >= 1, default 20000
    mc_samples         int >= 1, default 8
    learning_rate      > 0, default 0.05
    lr_decay           in (0, 1], default 1.0
    convergence_window int >= 1, default 10
    convergence_tol    > 0, default 1e-3
    elbo_check_every   int >= 1, default 100
    elbo_eval_samples  int >= 1, default 50
    adam_beta1         in [0, 1), default 0.9
    adam_beta2         in [0, 1), default 0.999
    adam_eps           > 0, default 1e-8

The configuration hash covers the modeling keys only (not workers or
paths), so the same scientific setup hashes identically wherever it runs.
"""

import hashlib
import json
from dataclasses import dataclass, field, replace

from .errors import ConfigError
from .hmcm import HmcmConfig
from .smcm import SmcmConfig
from .vi import FitConfig


def _int_min(minimum):
    def parse(text):
        value = int(text, 10)
        if value < minimum:
            raise ValueError(f"must be >= {minimum}")
        return value
    return parse


def _real(check, describe):
    def parse(text):
        value = float(text)
        if not check(value):
            raise ValueError(describe)
        return value
    return parse


def _path(text):
    if not text:
        raise ValueError("empty path")
    return text


_KEYS = {
    "base_seed": (_int_min(0), 0),
    "workers": (_int_min(1), 1),
    "input": (_path, None),
    "outdir": (_path, None),
    "k": (_int_min(1), 4),
    "sigma": (_real(lambda v: v > 0, "must be > 0"), 0.8),
    "lambda": (_real(lambda v: v > 0, "must be > 0"), 0.15),
    "sigma_hp": (_real(lambda v: v > 0, "must be > 0"), 1.0),
    "eta": (_real(lambda v: v > 0, "must be > 0"), 1.0),
    "solute_classes": (_int_min(1), 12),
    "solvent_classes": (_int_min(1), 17),
    "max_iters": (_int_min(1), 20000),
    "mc_samples": (_int_min(1), 8),
    "learning_rate": (_real(lambda v: v > 0, "must be > 0"), 0.05),
    "lr_decay": (_real(lambda v: 0 < v <= 1, "must lie in (0, 1]"), 1.0),
    "convergence_window": (_int_min(1), 10),
    "convergence_tol": (_real(lambda v: v > 0, "must be > 0"), 1e-3),
    "elbo_check_every": (_int_min(1), 100),
    "elbo_eval_samples": (_int_min(1), 50),
    "adam_beta1": (_real(lambda v: 0 <= v < 1, "must lie in [0, 1)"), 0.9),
    "adam_beta2": (_real(lambda v: 0 <= v < 1, "must lie in [0, 1)"), 0.999),
    "adam_eps": (_real(lambda v: v > 0, "must be > 0"), 1e-8),
}

# keys that change computed results, hashed into the manifest
_MODEL_KEYS = [k for k in _KEYS if k not in ("workers", "input", "outdir")]


@dataclass(frozen=True)
class PipelineConfig:
    base_seed: int = 0
    workers: int = 1
    input: str = None
    outdir: str = None
    n_solute_classes: int = 12
    n_solvent_classes: int = 17
    smcm: SmcmConfig = field(default_factory=SmcmConfig)
    hmcm: HmcmConfig = field(default_factory=HmcmConfig)


def parse_values(text: str) -> dict:
    """Parse config text to a fully-defaulted flat value dict.

    Raises ConfigError carrying every problem found.
    """
    values = {key: default for key, (_, default) in _KEYS.items()}
    problems = []
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"line {lineno}: expected 'key = value'")
            continue
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _KEYS:
            problems.append(f"line {lineno}: unknown key {key!r}")
            continue
        if key in seen:
            problems.append(f"line {lineno}: duplicate key {key!r}")
            continue
        seen.add(key)
        parse, _ = _KEYS[key]
        try:
            values[key] = parse(value)
        except ValueError as exc:
            detail = str(exc) if str(exc) else f"cannot parse {value!r}"
            problems.append(f"{key}: {detail}")
    if problems:
        raise ConfigError(problems)
    return values


def build_config(values: dict) -> PipelineConfig:
    """Assemble the typed PipelineConfig from a flat value dict."""
    fit = FitConfig(
        seed=values["base_seed"],
        max_iters=values["max_iters"],
        mc_samples=values["mc_samples"],
        learning_rate=values["learning_rate"],
        lr_decay=values["lr_decay"],
        convergence_window=values["convergence_window"],
        convergence_tol=values["convergence_tol"],
        elbo_check_every=values["elbo_check_every"],
        elbo_eval_samples=values["elbo_eval_samples"],
        adam_beta1=values["adam_beta1"],
        adam_beta2=values["adam_beta2"],
        adam_eps=values["adam_eps"],
    )
    return PipelineConfig(
        base_seed=values["base_seed"],
        workers=values["workers"],
        input=values["input"],
        outdir=values["outdir"],
        n_solute_classes=values["solute_classes"],
        n_solvent_classes=values["solvent_classes"],
        smcm=SmcmConfig(
            k=values["k"],
            sigma_prior=values["sigma"],
            lambda_like=values["lambda"],
            fit=fit,
        ),
        hmcm=HmcmConfig(
            k=values["k"],
            sigma_hp=values["sigma_hp"],
            lambda_like=values["lambda"],
            eta=values["eta"],
            fit=fit,
        ),
    )


def parse_config(text: str) -> PipelineConfig:
    return build_config(parse_values(text))


def validate_config(path) -> PipelineConfig:
    """Read and validate a config file; all errors are reported together."""
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def default_config() -> PipelineConfig:
    return parse_config("")


def flat_values(cfg: PipelineConfig) -> dict:
    """The flat key view of a PipelineConfig, inverse of build_config."""
    fit = cfg.smcm.fit
    return {
        "base_seed": cfg.base_seed,
        "workers": cfg.workers,
        "input": cfg.input,
        "outdir": cfg.outdir,
        "k": cfg.smcm.k,
        "sigma": cfg.smcm.sigma_prior,
        "lambda": cfg.smcm.lambda_like,
        "sigma_hp": cfg.hmcm.sigma_hp,
        "eta": cfg.hmcm.eta,
        "solute_classes": cfg.n_solute_classes,
        "solvent_classes": cfg.n_solvent_classes,
        "max_iters": fit.max_iters,
        "mc_samples": fit.mc_samples,
        "learning_rate": fit.learning_rate,
        "lr_decay": fit.lr_decay,
        "convergence_window": fit.convergence_window,
        "convergence_tol": fit.convergence_tol,
        "elbo_check_every": fit.elbo_check_every,
        "elbo_eval_samples": fit.elbo_eval_samples,
        "adam_beta1": fit.adam_beta1,
        "adam_beta2": fit.adam_beta2,
        "adam_eps": fit.adam_eps,
    }


def config_sha256(cfg: PipelineConfig) -> str:
    """Hash of the modeling keys; execution keys (workers, paths) excluded."""
    values = flat_values(cfg)
    canonical = json.dumps(
        {k: values[k] for k in _MODEL_KEYS}, sort_keys=True, separators=(",", ":")
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def with_base_seed(cfg: PipelineConfig, base_seed: int) -> PipelineConfig:
    """New config with the base seed replaced everywhere it is recorded."""
    return replace(
        cfg,
        base_seed=base_seed,
        smcm=replace(cfg.smcm, fit=replace(cfg.smcm.fit, seed=base_seed)),
        hmcm=replace(cfg.hmcm, fit=replace(cfg.hmcm.fit, seed=base_seed)),
    )
