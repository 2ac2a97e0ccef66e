"""Weibull and log-normal survival components, parameterized in log space.

Every mixture component is described by two scalars:

* ``log_shape`` -- natural log of the Weibull shape, or the log-normal
  location (which is itself a log-time, so it is stored as-is and may be
  negative).
* ``log_scale`` -- natural log of the scale parameter for both families.

Storing shape/scale in log space keeps the underlying parameters strictly
positive under unconstrained gradient updates.  All densities, survival
functions and their gradients below are expressed with respect to these
stored (log-space) coordinates.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc as scipy_erfc

__all__ = [
    "Family",
    "ComponentParams",
    "log_pdf",
    "log_survival",
    "grad_log_pdf",
    "grad_log_survival",
    "log_erfc",
    "log_erfc_array",
]

LOG_2PI = math.log(2.0 * math.pi)

# exp() guard for the Weibull cumulative hazard (t/scale)^shape: beyond this
# the loss is astronomically large but must stay finite.
_EXP_ARG_MAX = 500.0

# Switch from libm erfc to the asymptotic expansion before erfc underflows
# (erfc(26.6) ~ 1e-308).
_LOG_ERFC_ASYMPTOTIC = 25.0


class Family(enum.Enum):
    """Distribution family of a mixture component."""

    WEIBULL = "weibull"
    LOGNORMAL = "lognormal"


@dataclass(frozen=True)
class ComponentParams:
    """Log-space parameters of a single component."""

    log_shape: float
    log_scale: float


def log_erfc(x: float) -> float:
    """ln erfc(x), finite for arbitrarily large positive ``x``.

    Uses libm erfc directly while it is far from underflow, then the
    asymptotic expansion erfc(x) ~ exp(-x^2) / (x sqrt(pi)) * (1 - 1/(2x^2)
    + 3/(4x^4) - 15/(8x^6) + 105/(16x^8)).
    """
    if x < _LOG_ERFC_ASYMPTOTIC:
        return math.log(math.erfc(x))
    r = 1.0 / (x * x)
    series = 1.0 + r * (-0.5 + r * (0.75 + r * (-1.875 + r * 6.5625)))
    return -x * x - math.log(x) - 0.5 * math.log(math.pi) + math.log(series)


def log_erfc_array(x: np.ndarray) -> np.ndarray:
    """Vectorized :func:`log_erfc`."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    small = x < _LOG_ERFC_ASYMPTOTIC
    out[small] = np.log(scipy_erfc(x[small]))
    xl = x[~small]
    r = 1.0 / (xl * xl)
    series = 1.0 + r * (-0.5 + r * (0.75 + r * (-1.875 + r * 6.5625)))
    out[~small] = -xl * xl - np.log(xl) - 0.5 * math.log(math.pi) + np.log(series)
    return out


def _check_time_positive(t: float) -> None:
    if not t > 0.0:
        raise ValueError(f"density requires a strictly positive time, got {t!r}")


def log_pdf(family: Family, params: ComponentParams, t: float) -> float:
    """Log density of the component at time ``t`` (> 0)."""
    _check_time_positive(t)
    log_t = math.log(t)
    if family is Family.WEIBULL:
        shape = math.exp(params.log_shape)
        z = min(shape * (log_t - params.log_scale), _EXP_ARG_MAX)
        return (
            params.log_shape
            - params.log_scale
            + (shape - 1.0) * (log_t - params.log_scale)
            - math.exp(z)
        )
    scale = math.exp(params.log_scale)
    u = (log_t - params.log_shape) / scale
    return -log_t - params.log_scale - 0.5 * LOG_2PI - 0.5 * u * u


def log_survival(family: Family, params: ComponentParams, t: float) -> float:
    """Log survival probability ln S(t) at time ``t`` (>= 0); always <= 0."""
    if t < 0.0:
        raise ValueError(f"survival requires a nonnegative time, got {t!r}")
    if t == 0.0:
        return 0.0
    log_t = math.log(t)
    if family is Family.WEIBULL:
        shape = math.exp(params.log_shape)
        z = min(shape * (log_t - params.log_scale), _EXP_ARG_MAX)
        return -math.exp(z)
    scale = math.exp(params.log_scale)
    u = (log_t - params.log_shape) / scale
    return log_erfc(u / math.sqrt(2.0)) - math.log(2.0)


def grad_log_pdf(
    family: Family, params: ComponentParams, t: float
) -> tuple[float, float]:
    """(d/d log_shape, d/d log_scale) of ``log_pdf`` at ``t``."""
    _check_time_positive(t)
    log_t = math.log(t)
    if family is Family.WEIBULL:
        shape = math.exp(params.log_shape)
        z = min(shape * (log_t - params.log_scale), _EXP_ARG_MAX)
        ez = math.exp(z)
        return 1.0 + z - z * ez, shape * (ez - 1.0)
    scale = math.exp(params.log_scale)
    u = (log_t - params.log_shape) / scale
    return u / scale, u * u - 1.0


def grad_log_survival(
    family: Family, params: ComponentParams, t: float
) -> tuple[float, float]:
    """(d/d log_shape, d/d log_scale) of ``log_survival`` at ``t``."""
    if t < 0.0:
        raise ValueError(f"survival requires a nonnegative time, got {t!r}")
    if t == 0.0:
        return 0.0, 0.0
    log_t = math.log(t)
    if family is Family.WEIBULL:
        shape = math.exp(params.log_shape)
        z = min(shape * (log_t - params.log_scale), _EXP_ARG_MAX)
        ez = math.exp(z)
        return -z * ez, shape * ez
    scale = math.exp(params.log_scale)
    u = (log_t - params.log_shape) / scale
    log_sf = log_erfc(u / math.sqrt(2.0)) - math.log(2.0)
    # hazard of the standard normal in log-time: phi(u) / Q(u)
    hazard = math.exp(-0.5 * u * u - 0.5 * LOG_2PI - log_sf)
    return hazard / scale, hazard * u
