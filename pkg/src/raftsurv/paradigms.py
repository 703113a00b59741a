"""Cohort data and the four time-scale paradigms.

=========  ===========  ======================  ==================================
paradigm   time scale   covariates              model
=========  ===========  ======================  ==================================
aft-ac     time since   x, z, f(entry age)      AFT from time 0
           entry
aft-na     age          x, z                    AFT, left truncated at entry age
raft       age          x, residuals of z       AFT, left truncated at entry age
rph        age          x, residuals of z       Weibull PH, left truncated
=========  ===========  ======================  ==================================

Residuals come from a stage-1 age trend fitted on the training cohort and frozen
for prediction.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import dist, survreg
from ._validation import check_covariate_matrix
from .dist import DistributionFamily
from .exceptions import (
    DegenerateConditioningError,
    DegenerateDataError,
    DomainError,
    MedianOverflowError,
    UnsupportedConfigurationError,
)
from .residualize import ResidualModel, apply_stage1, fit_stage1
from .survreg import FitResult, ModelForm, SurvivalData

__all__ = [
    "Subject",
    "Cohort",
    "Paradigm",
    "TrainedModel",
    "NearDegenerateResidualWarning",
    "train",
    "predict_event_prob",
    "median_time_to_event",
    "SurvivalParadigm",
    "MODEL_FORMAT_VERSION",
]

MODEL_FORMAT_VERSION = 1

# log S(entry) below this means conditioning on survival to entry is meaningless
_MIN_LOG_SURVIVAL = -700.0


class NearDegenerateResidualWarning(UserWarning):
    """A stage-1 residual column carries almost no variation beyond the age trend."""


class Paradigm(str, enum.Enum):
    AFT_AC = "aft-ac"
    AFT_NA = "aft-na"
    RAFT = "raft"
    RPH = "rph"

    @classmethod
    def coerce(cls, value) -> "Paradigm":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown paradigm {value!r}; expected one of {[m.value for m in cls]}") from None

    @property
    def age_scale(self) -> bool:
        return self is not Paradigm.AFT_AC

    @property
    def uses_residuals(self) -> bool:
        return self in (Paradigm.RAFT, Paradigm.RPH)

    @property
    def model_form(self) -> ModelForm:
        return ModelForm.PH if self is Paradigm.RPH else ModelForm.AFT


@dataclass(frozen=True)
class Subject:
    """One cohort member as recorded at first observation."""

    id: str
    entry_age: float
    fixed_covariates: tuple[float, ...]
    varying_covariates: tuple[float, ...]
    followup_time: float
    event: bool

    def __post_init__(self):
        object.__setattr__(self, "fixed_covariates", tuple(float(v) for v in self.fixed_covariates))
        object.__setattr__(self, "varying_covariates", tuple(float(v) for v in self.varying_covariates))
        values = (self.entry_age, self.followup_time, *self.fixed_covariates, *self.varying_covariates)
        if not all(np.isfinite(values)):
            raise ValueError(f"subject {self.id!r}: all values must be finite")
        if not self.entry_age > 0:
            raise ValueError(f"subject {self.id!r}: entry_age must be positive")
        if not self.followup_time > 0:
            raise ValueError(f"subject {self.id!r}: followup_time must be positive")

    @property
    def exit_age(self) -> float:
        return self.entry_age + self.followup_time


@dataclass(frozen=True)
class Cohort:
    """Column-oriented cohort, the working representation for fitting and scoring.

    ``followup`` and ``event`` may be omitted for prediction-only cohorts (for
    example reference profiles); they default to NaN and False.
    """

    entry_age: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    followup: np.ndarray | None = None
    event: np.ndarray | None = None
    ids: np.ndarray | None = None
    x_names: tuple[str, ...] = field(default=())
    z_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        a = np.asarray(self.entry_age, dtype=float).reshape(-1)
        n = a.size
        if not np.all(np.isfinite(a)) or np.any(a < 0):
            raise ValueError("entry ages must be finite and non-negative")
        X = check_covariate_matrix(np.empty((n, 0)) if self.X is None else self.X, n_rows=n)
        Z = check_covariate_matrix(np.empty((n, 0)) if self.Z is None else self.Z, n_rows=n)
        fu = np.full(n, np.nan) if self.followup is None else np.asarray(self.followup, dtype=float).reshape(-1)
        ev = np.zeros(n, bool) if self.event is None else np.asarray(self.event).reshape(-1).astype(bool)
        ids = np.array([str(i) for i in range(n)], dtype=object) if self.ids is None else np.asarray(self.ids, dtype=object)
        if fu.size != n or ev.size != n or ids.size != n:
            raise ValueError("cohort columns must have equal length")
        x_names = tuple(self.x_names) or tuple(f"x_{j + 1}" for j in range(X.shape[1]))
        z_names = tuple(self.z_names) or tuple(f"z_{j + 1}" for j in range(Z.shape[1]))
        if len(x_names) != X.shape[1] or len(z_names) != Z.shape[1]:
            raise ValueError("covariate names do not match covariate columns")
        for name, arr in (("entry_age", a), ("X", X), ("Z", Z), ("followup", fu), ("event", ev), ("ids", ids)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "x_names", x_names)
        object.__setattr__(self, "z_names", z_names)

    def __len__(self) -> int:
        return self.entry_age.size

    @property
    def exit_age(self) -> np.ndarray:
        return self.entry_age + self.followup

    @property
    def n_events(self) -> int:
        return int(self.event.sum())

    @classmethod
    def from_subjects(cls, subjects: Iterable[Subject], x_names=(), z_names=()) -> "Cohort":
        subjects = list(subjects)
        q = len(subjects[0].fixed_covariates) if subjects else len(x_names)
        p = len(subjects[0].varying_covariates) if subjects else len(z_names)
        for s in subjects:
            if len(s.fixed_covariates) != q or len(s.varying_covariates) != p:
                raise ValueError(f"subject {s.id!r} has inconsistent covariate dimensions")
        return cls(
            entry_age=np.array([s.entry_age for s in subjects], dtype=float),
            X=np.array([s.fixed_covariates for s in subjects], dtype=float).reshape(len(subjects), q),
            Z=np.array([s.varying_covariates for s in subjects], dtype=float).reshape(len(subjects), p),
            followup=np.array([s.followup_time for s in subjects], dtype=float),
            event=np.array([s.event for s in subjects], dtype=bool),
            ids=np.array([s.id for s in subjects], dtype=object),
            x_names=x_names,
            z_names=z_names,
        )

    def to_subjects(self) -> list[Subject]:
        return [
            Subject(
                id=self.ids[i],
                entry_age=float(self.entry_age[i]),
                fixed_covariates=tuple(self.X[i]),
                varying_covariates=tuple(self.Z[i]),
                followup_time=float(self.followup[i]),
                event=bool(self.event[i]),
            )
            for i in range(len(self))
        ]

    def subset(self, index) -> "Cohort":
        index = np.asarray(index)
        return Cohort(
            entry_age=self.entry_age[index],
            X=self.X[index],
            Z=self.Z[index],
            followup=self.followup[index],
            event=self.event[index],
            ids=self.ids[index],
            x_names=self.x_names,
            z_names=self.z_names,
        )

    def sorted_by_id(self) -> "Cohort":
        return self.subset(np.argsort(self.ids.astype(str), kind="stable"))


def as_cohort(data) -> Cohort:
    if isinstance(data, Cohort):
        return data
    if isinstance(data, Subject):
        return Cohort.from_subjects([data])
    return Cohort.from_subjects(data)


def _age_feature(ages, age_transform):
    if age_transform == "identity":
        return ages
    if age_transform == "log1p":
        return np.log1p(ages)
    raise ValueError(f"unknown age_transform {age_transform!r}; expected 'identity' or 'log1p'")


@dataclass(frozen=True)
class TrainedModel:
    """A fitted paradigm: the stage-1 trend (residual paradigms only) plus the survival fit."""

    paradigm: Paradigm
    family: DistributionFamily
    stage1: ResidualModel | None
    fit: FitResult
    covariate_layout: tuple[str, ...]
    age_transform: str = "identity"
    x_names: tuple[str, ...] = ()
    z_names: tuple[str, ...] = ()

    def __post_init__(self):
        if (self.stage1 is not None) != self.paradigm.uses_residuals:
            raise ValueError(f"stage1 must be present exactly for residual paradigms, got {self.paradigm.value}")
        if ("age" in self.covariate_layout) != (self.paradigm is Paradigm.AFT_AC):
            raise ValueError("only aft-ac includes entry age as a covariate")

    def design(self, cohort: Cohort) -> np.ndarray:
        """Covariate matrix (without intercept) in ``covariate_layout`` order."""
        if cohort.X.shape[1] != len(self.x_names) or cohort.Z.shape[1] != len(self.z_names):
            raise ValueError(
                f"cohort has {cohort.X.shape[1]} fixed / {cohort.Z.shape[1]} varying covariates; "
                f"model expects {len(self.x_names)} / {len(self.z_names)}"
            )
        return _design_matrix(self.paradigm, cohort, self.stage1, self.age_transform)

    def param_set(self, cohort: Cohort) -> dist.ParamSet:
        return self.fit.param_set(self.design(cohort))

    def to_dict(self) -> dict:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "paradigm": self.paradigm.value,
            "family": self.family.value,
            "age_transform": self.age_transform,
            "covariate_layout": list(self.covariate_layout),
            "x_names": list(self.x_names),
            "z_names": list(self.z_names),
            "stage1": None if self.stage1 is None else self.stage1.to_dict(),
            "fit": self.fit.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedModel":
        if d.get("format_version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format_version {d.get('format_version')!r}")
        return cls(
            paradigm=Paradigm.coerce(d["paradigm"]),
            family=DistributionFamily.coerce(d["family"]),
            stage1=None if d.get("stage1") is None else ResidualModel.from_dict(d["stage1"]),
            fit=FitResult.from_dict(d["fit"]),
            covariate_layout=tuple(d["covariate_layout"]),
            age_transform=d.get("age_transform", "identity"),
            x_names=tuple(d.get("x_names", ())),
            z_names=tuple(d.get("z_names", ())),
        )


def _design_matrix(paradigm, cohort, stage1, age_transform):
    if paradigm is Paradigm.AFT_AC:
        return np.column_stack([cohort.X, cohort.Z, _age_feature(cohort.entry_age, age_transform)])
    if paradigm is Paradigm.AFT_NA:
        return np.column_stack([cohort.X, cohort.Z])
    return np.column_stack([cohort.X, apply_stage1(stage1, cohort.entry_age, cohort.Z)])


def _layout(paradigm, cohort):
    x = list(cohort.x_names)
    if paradigm is Paradigm.AFT_AC:
        return tuple(x + list(cohort.z_names) + ["age"])
    if paradigm is Paradigm.AFT_NA:
        return tuple(x + list(cohort.z_names))
    return tuple(x + [f"{name}_resid" for name in cohort.z_names])


def train(
    cohort,
    paradigm="raft",
    family="weibull",
    *,
    age_transform: str = "identity",
    fix_shape: float | None = None,
    max_iter: int = 200,
    grad_tol: float = 1e-8,
) -> TrainedModel:
    """Fit one paradigm to a cohort.

    Parameters
    ----------
    cohort : Cohort or sequence of Subject
    paradigm : Paradigm or str
    family : DistributionFamily or str
    age_transform : {"identity", "log1p"}
        Transform of entry age used as the aft-ac covariate.
    fix_shape : float, optional
        Hold the baseline shape fixed.

    Raises
    ------
    UnsupportedConfigurationError
        For rph with a non-Weibull family.
    IdentifiabilityError
        When a design column (e.g. a residual that is identically zero) is
        linearly dependent on the others.
    """
    cohort = as_cohort(cohort)
    paradigm = Paradigm.coerce(paradigm)
    family = DistributionFamily.coerce(family)
    _age_feature(np.zeros(1), age_transform)
    if paradigm is Paradigm.RPH and family is not DistributionFamily.WEIBULL:
        raise UnsupportedConfigurationError(f"rph requires the weibull family, got {family.value}")
    if len(cohort) == 0 or cohort.n_events == 0:
        raise DegenerateDataError("cohort has no events")

    stage1 = None
    if paradigm.uses_residuals:
        stage1, resid = fit_stage1(cohort.entry_age, cohort.Z, names=cohort.z_names)
        raw_sd = cohort.Z.std(axis=0)
        resid_sd = resid.std(axis=0)
        weak = [
            f"{name}_resid"
            for name, r, z in zip(cohort.z_names, resid_sd, raw_sd)
            if z > 0 and r <= 1e-6 * z
        ]
        if weak:
            warnings.warn(
                f"near-degenerate residual columns {weak}: covariates are almost exactly linear in age",
                NearDegenerateResidualWarning,
                stacklevel=2,
            )

    if paradigm.age_scale:
        entry, exit = cohort.entry_age, cohort.exit_age
    else:
        entry, exit = np.zeros(len(cohort)), cohort.followup
    layout = _layout(paradigm, cohort)
    data = SurvivalData(
        exit=exit,
        event=cohort.event,
        X=_design_matrix(paradigm, cohort, stage1, age_transform),
        entry=entry,
        names=layout,
    )
    result = survreg.fit(
        data, family, paradigm.model_form, max_iter=max_iter, grad_tol=grad_tol, fix_shape=fix_shape
    )
    return TrainedModel(
        paradigm=paradigm,
        family=family,
        stage1=stage1,
        fit=result,
        covariate_layout=layout,
        age_transform=age_transform,
        x_names=cohort.x_names,
        z_names=cohort.z_names,
    )


def _entry_log_survival(model, cohort, p):
    log_s_entry = np.asarray(dist.log_survival(cohort.entry_age, model.family, p))
    if np.any(log_s_entry < _MIN_LOG_SURVIVAL) or np.any(np.isnan(log_s_entry)):
        bad = int(np.flatnonzero(~(log_s_entry >= _MIN_LOG_SURVIVAL))[0])
        raise DegenerateConditioningError(
            f"subject {cohort.ids[bad]!r}: survival to entry age {cohort.entry_age[bad]:g} is numerically zero"
        )
    return log_s_entry


def _broadcast_params(p: dist.ParamSet, ndim: int) -> dist.ParamSet:
    if ndim <= 1:
        return p
    scale = np.asarray(p.scale).reshape((-1,) + (1,) * (ndim - 1))
    return dist.ParamSet(scale=scale, shape=p.shape)


def predict_event_prob(model: TrainedModel, subjects, horizon):
    """Probability of the event within ``horizon`` years of entry.

    For aft-ac this is ``F(horizon)``; for the age-scale paradigms it is the
    conditional probability ``1 - S(a + horizon) / S(a)`` given survival to the
    entry age ``a``.

    Parameters
    ----------
    model : TrainedModel
    subjects : Cohort, Subject or sequence of Subject
    horizon : float or array-like
        Broadcast against subjects along the first axis: a scalar, shape ``(n,)``,
        or ``(n, m)`` for ``m`` horizons per subject.

    Returns
    -------
    ndarray
    """
    cohort = as_cohort(subjects)
    h = np.asarray(horizon, dtype=float)
    if np.any(h < 0) or np.any(np.isnan(h)):
        raise DomainError("horizon must be non-negative")
    p = _broadcast_params(model.param_set(cohort), max(h.ndim, 1))
    if not model.paradigm.age_scale:
        return np.asarray(dist.cdf(np.broadcast_to(h, np.broadcast_shapes(h.shape, np.shape(p.scale))), model.family, p))
    log_s_entry = _entry_log_survival(model, cohort, model.param_set(cohort))
    a = cohort.entry_age.reshape((-1,) + (1,) * max(h.ndim - 1, 0))
    log_s_entry = log_s_entry.reshape(a.shape)
    log_s_exit = np.asarray(dist.log_survival(a + h, model.family, p))
    with np.errstate(invalid="ignore"):
        g = -np.expm1(log_s_exit - log_s_entry)
    return np.clip(g, 0.0, 1.0)


def median_time_to_event(model: TrainedModel, subjects):
    """Median time from entry to event for each subject, in years.

    Raises
    ------
    MedianOverflowError
        If the median lies beyond the floating point range.
    """
    cohort = as_cohort(subjects)
    p = model.param_set(cohort)
    if model.paradigm.age_scale:
        log_s_entry = _entry_log_survival(model, cohort, p)
        with np.errstate(over="ignore"):
            exit_age = np.asarray(dist.inverse_log_survival(log_s_entry + np.log(0.5), model.family, p))
        m = exit_age - cohort.entry_age
    else:
        with np.errstate(over="ignore"):
            m = np.asarray(dist.median(model.family, p), dtype=float) * np.ones(len(cohort))
    if not np.all(np.isfinite(m)):
        bad = int(np.flatnonzero(~np.isfinite(m))[0])
        raise MedianOverflowError(
            f"subject {cohort.ids[bad]!r}: median time to event overflows "
            f"(scale {np.broadcast_to(p.scale, m.shape)[bad]:.3g}, shape {model.fit.shape:.3g})"
        )
    return m


class SurvivalParadigm(BaseEstimator):
    """Estimator interface to :func:`train` and the prediction functions.

    Parameters
    ----------
    paradigm : {"aft-ac", "aft-na", "raft", "rph"}, default="raft"
    family : {"weibull", "lognormal", "loglogistic"}, default="weibull"
    age_transform : {"identity", "log1p"}, default="identity"
    fix_shape : float, optional
    max_iter : int, default=200
    grad_tol : float, default=1e-8

    Attributes
    ----------
    model_ : TrainedModel
    """

    def __init__(
        self,
        paradigm="raft",
        family="weibull",
        age_transform="identity",
        fix_shape=None,
        max_iter=200,
        grad_tol=1e-8,
    ):
        self.paradigm = paradigm
        self.family = family
        self.age_transform = age_transform
        self.fix_shape = fix_shape
        self.max_iter = max_iter
        self.grad_tol = grad_tol

    def fit(self, cohort, y=None):
        self.model_ = train(
            cohort,
            self.paradigm,
            self.family,
            age_transform=self.age_transform,
            fix_shape=self.fix_shape,
            max_iter=self.max_iter,
            grad_tol=self.grad_tol,
        )
        return self

    def predict_event_prob(self, cohort, horizon):
        check_is_fitted(self, "model_")
        return predict_event_prob(self.model_, cohort, horizon)

    def predict(self, cohort):
        """Median time to event from entry."""
        check_is_fitted(self, "model_")
        return median_time_to_event(self.model_, cohort)

    def score(self, cohort, y=None):
        """Negative Brier score, so that larger is better."""
        from .evaluate import brier_score

        check_is_fitted(self, "model_")
        return -brier_score(self.model_, cohort)
