"""Stage 1: remove the linear age trend from age-varying covariates.

Each covariate is regressed on age at first observation separately, and the
residuals replace the raw values in the second-stage survival regression.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_ages, check_covariate_matrix
from .exceptions import IdentifiabilityError, InsufficientDataError

__all__ = ["ResidualModel", "fit_stage1", "apply_stage1", "AgeResidualizer"]


@dataclass(frozen=True)
class ResidualModel:
    """Per-covariate linear age trend ``z_j = intercept_j + slope_j * age``."""

    intercept: np.ndarray
    slope: np.ndarray
    names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        intercept = np.array(self.intercept, dtype=float).reshape(-1)
        slope = np.array(self.slope, dtype=float).reshape(-1)
        if intercept.shape != slope.shape:
            raise ValueError("intercept and slope must have the same length")
        if not (np.all(np.isfinite(intercept)) and np.all(np.isfinite(slope))):
            raise ValueError("ResidualModel coefficients must be finite")
        intercept.setflags(write=False)
        slope.setflags(write=False)
        object.__setattr__(self, "intercept", intercept)
        object.__setattr__(self, "slope", slope)
        names = tuple(self.names) or tuple(f"z_{j + 1}" for j in range(intercept.size))
        if len(names) != intercept.size:
            raise ValueError("names must match the number of covariates")
        object.__setattr__(self, "names", names)

    @property
    def n_covariates(self) -> int:
        return self.intercept.size

    def trend(self, ages):
        """Fitted covariate means at the given ages, shape ``(n, p)``."""
        ages = np.asarray(ages, dtype=float).reshape(-1, 1)
        return self.intercept + self.slope * ages

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "intercept": self.intercept.tolist(),
            "slope": self.slope.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ResidualModel":
        return cls(intercept=d["intercept"], slope=d["slope"], names=tuple(d["names"]))


def fit_stage1(ages, values, names=None):
    """Ordinary least squares of each covariate column on age.

    Parameters
    ----------
    ages : array-like of shape (n,)
        Age at first observation.
    values : array-like of shape (n, p)
        Age-varying covariates measured at ``ages``.
    names : sequence of str, optional
        Covariate names used in error messages and carried by the model.

    Returns
    -------
    model : ResidualModel
    residuals : ndarray of shape (n, p)
    """
    ages = check_ages(ages)
    values = check_covariate_matrix(values, n_rows=ages.size)
    n, p = values.shape
    names = tuple(names) if names is not None else tuple(f"z_{j + 1}" for j in range(p))
    if n < 3:
        raise InsufficientDataError(f"stage 1 needs at least 3 subjects, got {n}")

    age_mean = ages.mean()
    centred = ages - age_mean
    sxx = centred @ centred
    if sxx <= (np.finfo(float).eps * n * max(1.0, abs(age_mean))) ** 2:
        raise IdentifiabilityError("all entry ages are identical; age slope is unidentifiable", names)

    z_mean = values.mean(axis=0)
    slope = centred @ (values - z_mean) / sxx
    intercept = z_mean - slope * age_mean
    model = ResidualModel(intercept=intercept, slope=slope, names=names)
    residuals = apply_stage1(model, ages, values)
    return model, residuals


def apply_stage1(model: ResidualModel, age, z):
    """Residuals of new observations under a frozen stage-1 model.

    ``age`` may be a scalar with ``z`` a vector, or arrays of shape ``(n,)`` and
    ``(n, p)``.
    """
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != model.n_covariates:
        raise ValueError(f"expected {model.n_covariates} covariates, got {z.shape[-1]}")
    age = np.asarray(age, dtype=float)
    if z.ndim == 1:
        return z - model.intercept - model.slope * age
    return z - model.intercept - np.outer(age, model.slope)


class AgeResidualizer(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`fit_stage1` / :func:`apply_stage1`.

    Ages are passed alongside ``X`` because they are not themselves transformed.

    Examples
    --------
    >>> import numpy as np
    >>> res = AgeResidualizer().fit(np.array([[1.0], [2.0], [4.0]]), ages=[1, 2, 3])
    >>> res.slope_
    array([1.5])
    """

    def __init__(self, names=None):
        self.names = names

    def fit(self, X, ages):
        self.model_, _ = fit_stage1(ages, X, names=self.names)
        self.intercept_ = np.asarray(self.model_.intercept)
        self.slope_ = np.asarray(self.model_.slope)
        self.n_features_in_ = self.model_.n_covariates
        return self

    def transform(self, X, ages):
        check_is_fitted(self, "model_")
        X = check_covariate_matrix(X)
        ages = check_ages(ages, n=X.shape[0])
        return apply_stage1(self.model_, ages, X)

    def fit_transform(self, X, ages):
        self.fit(X, ages)
        return self.transform(X, ages)
