"""Exact scalar log-density kernels and the positive-parameter transform.

These are the closed-form building blocks shared by the two completion
models and the variational engine. Conventions:

* Normal(loc, scale):      log p(x) = -log(scale) - log(2*pi)/2 - (x-loc)^2 / (2*scale^2)
* Cauchy(loc, scale):      log p(x) = -log(pi*scale) - log(1 + ((x-loc)/scale)^2)
* Exponential(scale):      log p(x) = -log(scale) - x/scale   for x >= 0, -inf below 0.
  The single parameter is a *scale* (the mean), not a rate.

Positive quantities are optimized on the log scale: ``unconstrain`` maps a
positive value to the real line, ``constrain`` maps back and also returns
the log-Jacobian of the transform (which equals the unconstrained value).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

from .errors import DomainError

LOG_2PI = math.log(2.0 * math.pi)
LOG_PI = math.log(math.pi)


def _check_scale(scale) -> None:
    if not (scale > 0.0) or not math.isfinite(scale):
        raise DomainError(f"scale must be positive and finite, got {scale!r}")


@dataclass(frozen=True)
class Normal:
    loc: float
    scale: float

    def __post_init__(self):
        _check_scale(self.scale)


@dataclass(frozen=True)
class Cauchy:
    loc: float
    scale: float

    def __post_init__(self):
        _check_scale(self.scale)


@dataclass(frozen=True)
class Exponential:
    """Exponential distribution parameterized by its scale (mean)."""

    scale: float

    def __post_init__(self):
        _check_scale(self.scale)


DistributionSpec = Union[Normal, Cauchy, Exponential]


def _check_x(x: float) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"x must be finite, got {x!r}")
    return x


def log_pdf(spec: DistributionSpec, x: float) -> float:
    """Exact log density of ``spec`` at ``x``."""
    x = _check_x(x)
    if isinstance(spec, Normal):
        z = (x - spec.loc) / spec.scale
        return -math.log(spec.scale) - 0.5 * LOG_2PI - 0.5 * z * z
    if isinstance(spec, Cauchy):
        z = (x - spec.loc) / spec.scale
        return -LOG_PI - math.log(spec.scale) - math.log1p(z * z)
    if isinstance(spec, Exponential):
        if x < 0.0:
            return -math.inf
        return -math.log(spec.scale) - x / spec.scale
    raise TypeError(f"unknown distribution spec: {spec!r}")


def log_pdf_grad(spec: DistributionSpec, x: float) -> tuple[float, float, float]:
    """Partial derivatives of :func:`log_pdf` as ``(d/dx, d/dloc, d/dscale)``.

    The Exponential has no location parameter; its middle slot is 0.
    Below the Exponential's support the density is identically zero and the
    derivatives are undefined; NaNs are returned there.
    """
    x = _check_x(x)
    if isinstance(spec, Normal):
        s = spec.scale
        z = (x - spec.loc) / s
        d_dx = -z / s
        return d_dx, -d_dx, (z * z - 1.0) / s
    if isinstance(spec, Cauchy):
        s = spec.scale
        t = (x - spec.loc) / s
        q = 1.0 + t * t
        d_dx = -2.0 * t / (s * q)
        return d_dx, -d_dx, (2.0 * t * t / q - 1.0) / s
    if isinstance(spec, Exponential):
        eta = spec.scale
        if x < 0.0:
            return math.nan, math.nan, math.nan
        return -1.0 / eta, 0.0, x / (eta * eta) - 1.0 / eta
    raise TypeError(f"unknown distribution spec: {spec!r}")


def unconstrain(positive_value: float) -> float:
    """Map a positive value to the unconstrained real line (log transform)."""
    positive_value = float(positive_value)
    if not (positive_value > 0.0) or not math.isfinite(positive_value):
        raise DomainError(f"expected a positive finite value, got {positive_value!r}")
    return math.log(positive_value)


def constrain(unconstrained: float) -> tuple[float, float]:
    """Inverse of :func:`unconstrain`: returns ``(exp(z), log_jacobian)``.

    The log-Jacobian of ``value = exp(z)`` is ``z`` itself.
    """
    z = float(unconstrained)
    if not math.isfinite(z):
        raise DomainError(f"expected a finite value, got {z!r}")
    return math.exp(z), z
