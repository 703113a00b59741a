"""Parametric baseline distributions for survival times.

All three families are log-location-scale: writing ``w = shape * (log t - log scale)``
the survival function is ``S(t) = S0(w)`` for a standard survival function ``S0``.

========== ==================================== ===========================
family     F(t)                                 standard form
========== ==================================== ===========================
weibull    1 - exp(-(t/scale)**shape)           S0(w) = exp(-exp(w))
loglogistic 1 / (1 + (t/scale)**(-shape))       S0(w) = 1 / (1 + exp(w))
lognormal  Phi((log t - log scale) * shape)     S0(w) = Phi(-w)
========== ==================================== ===========================

For the log-normal, ``1 / shape`` is the standard deviation of ``log t`` so that a
larger shape means less dispersion in every family.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import special

from .exceptions import DomainError

__all__ = [
    "DistributionFamily",
    "ParamSet",
    "cdf",
    "survival",
    "density",
    "hazard",
    "quantile",
    "log_density",
    "log_survival",
    "inverse_log_survival",
    "median",
]

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


class DistributionFamily(str, enum.Enum):
    WEIBULL = "weibull"
    LOGNORMAL = "lognormal"
    LOGLOGISTIC = "loglogistic"

    @classmethod
    def coerce(cls, value) -> "DistributionFamily":
        """Accept an enum member or a case-insensitive name such as ``"LogNormal"``."""
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "").replace("_", "")
        for member in cls:
            if member.value == key:
                return member
        raise ValueError(f"unknown distribution family {value!r}; expected one of {[m.value for m in cls]}")


@dataclass(frozen=True)
class ParamSet:
    """Scale and shape of a baseline distribution.

    ``scale`` is in the time units of the chosen time scale and may be an array
    (one scale per subject); ``shape`` is dimensionless.
    """

    scale: float | np.ndarray
    shape: float | np.ndarray

    def __post_init__(self):
        scale = np.asarray(self.scale, dtype=float)
        shape = np.asarray(self.shape, dtype=float)
        if not (np.all(np.isfinite(scale)) and np.all(scale > 0)):
            raise DomainError(f"scale must be finite and positive, got {self.scale!r}")
        if not (np.all(np.isfinite(shape)) and np.all(shape > 0)):
            raise DomainError(f"shape must be finite and positive, got {self.shape!r}")


# --- standard (w-space) functions -------------------------------------------------
# Each returns log S0(w), log f0(w) where the density of log t is shape * f0(w).


def _std_log_sf(w, family):
    if family is DistributionFamily.WEIBULL:
        return -np.exp(w)
    if family is DistributionFamily.LOGLOGISTIC:
        return -np.logaddexp(0.0, w)
    return special.log_ndtr(-w)


def _std_log_pdf(w, family):
    if family is DistributionFamily.WEIBULL:
        return w - np.exp(w)
    if family is DistributionFamily.LOGLOGISTIC:
        return w - 2.0 * np.logaddexp(0.0, w)
    return -0.5 * w * w - _LOG_SQRT_2PI


def _std_log_sf_derivs(w, family):
    """First and second derivatives of log S0 with respect to w."""
    if family is DistributionFamily.WEIBULL:
        ew = np.exp(w)
        return -ew, -ew
    if family is DistributionFamily.LOGLOGISTIC:
        p = special.expit(w)
        return -p, -p * special.expit(-w)
    # inverse Mills ratio phi(w) / Phi(-w), evaluated in log space for the upper tail
    r = np.exp(-0.5 * w * w - _LOG_SQRT_2PI - special.log_ndtr(-w))
    return -r, -r * (r - w)


def _std_log_pdf_derivs(w, family):
    """First and second derivatives of log f0 with respect to w."""
    if family is DistributionFamily.WEIBULL:
        ew = np.exp(w)
        return 1.0 - ew, -ew
    if family is DistributionFamily.LOGLOGISTIC:
        p = special.expit(w)
        return 1.0 - 2.0 * p, -2.0 * p * special.expit(-w)
    w = np.asarray(w, dtype=float)
    return -w, -np.ones_like(w)


def _std_inverse_log_sf(log_s, family):
    """Solve log S0(w) = log_s for w."""
    neg = -np.asarray(log_s, dtype=float)
    if family is DistributionFamily.WEIBULL:
        return np.log(neg)
    if family is DistributionFamily.LOGLOGISTIC:
        # w = log(exp(neg) - 1), written to avoid overflow for large neg
        return neg + np.log(-np.expm1(-neg))
    return -special.ndtri_exp(log_s)


def _standardize(t, p):
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        logt = np.log(t)
    return np.asarray(p.shape, dtype=float) * (logt - np.log(p.scale)), logt


def _check_nonnegative(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(np.isnan(t)):
        raise DomainError("times must be non-negative")
    return t


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


# --- public API ---------------------------------------------------------------------


def log_survival(t, family, p: ParamSet):
    """Log survival function ``log S(t)``; finite far into the upper tail."""
    family = DistributionFamily.coerce(family)
    t = _check_nonnegative(t)
    if family is DistributionFamily.WEIBULL:
        # the power form is exact at shape 1, where exp(shape * log(t / scale)) is not
        with np.errstate(over="ignore"):
            return _scalar(-((t / np.asarray(p.scale, dtype=float)) ** np.asarray(p.shape, dtype=float)))
    w, _ = _standardize(t, p)
    with np.errstate(over="ignore"):
        return _scalar(_std_log_sf(w, family))


def log_density(t, family, p: ParamSet):
    """Log density ``log f(t)`` for ``t > 0``."""
    family = DistributionFamily.coerce(family)
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0) or np.any(np.isnan(t)):
        raise DomainError("log_density requires t > 0")
    w, logt = _standardize(t, p)
    with np.errstate(over="ignore"):
        out = np.log(p.shape) - logt + _std_log_pdf(w, family)
    return _scalar(out)


def survival(t, family, p: ParamSet):
    """Survival function ``S(t) = 1 - F(t)``."""
    family = DistributionFamily.coerce(family)
    t = _check_nonnegative(t)
    w, _ = _standardize(t, p)
    with np.errstate(over="ignore"):
        if family is DistributionFamily.WEIBULL:
            out = np.exp(-np.exp(w))
        elif family is DistributionFamily.LOGLOGISTIC:
            out = special.expit(-w)
        else:
            out = special.ndtr(-w)
    return _scalar(out)


def cdf(t, family, p: ParamSet):
    """Cumulative distribution function ``F(t)``."""
    family = DistributionFamily.coerce(family)
    t = _check_nonnegative(t)
    w, _ = _standardize(t, p)
    with np.errstate(over="ignore"):
        if family is DistributionFamily.WEIBULL:
            out = -np.expm1(-np.exp(w))
        elif family is DistributionFamily.LOGLOGISTIC:
            out = special.expit(w)
        else:
            out = special.ndtr(w)
    return _scalar(out)


def density(t, family, p: ParamSet):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    if np.any(pos):
        scale = np.broadcast_to(np.asarray(p.scale, float), t.shape)[pos]
        shape = np.broadcast_to(np.asarray(p.shape, float), t.shape)[pos]
        out[pos] = np.exp(log_density(t[pos], family, ParamSet(scale, shape)))
    return _scalar(out)


def hazard(t, family, p: ParamSet):
    """Hazard ``f(t) / S(t)`` computed in log space."""
    family = DistributionFamily.coerce(family)
    return _scalar(np.exp(np.asarray(log_density(t, family, p)) - np.asarray(log_survival(t, family, p))))


def quantile(q, family, p: ParamSet):
    """Inverse of :func:`cdf` for ``q`` in the open interval (0, 1)."""
    family = DistributionFamily.coerce(family)
    q = np.asarray(q, dtype=float)
    if np.any(~((q > 0) & (q < 1))):
        raise DomainError("quantile requires 0 < q < 1")
    shape = np.asarray(p.shape, dtype=float)
    if family is DistributionFamily.WEIBULL:
        w = np.log(-np.log1p(-q))
    elif family is DistributionFamily.LOGLOGISTIC:
        w = special.logit(q)
    else:
        w = special.ndtri(q)
    return _scalar(np.asarray(p.scale) * np.exp(w / shape))


def inverse_log_survival(log_s, family, p: ParamSet):
    """Time ``t`` with ``log S(t) = log_s``, for ``log_s < 0``.

    Working in log space keeps conditional draws and medians accurate when
    ``S`` itself is far below machine epsilon.
    """
    family = DistributionFamily.coerce(family)
    log_s = np.asarray(log_s, dtype=float)
    if np.any(~(log_s < 0)):
        raise DomainError("inverse_log_survival requires log_s < 0")
    w = _std_inverse_log_sf(log_s, family)
    with np.errstate(over="ignore"):
        return _scalar(np.asarray(p.scale) * np.exp(w / np.asarray(p.shape, dtype=float)))


def median(family, p: ParamSet):
    return quantile(0.5, family, p)
