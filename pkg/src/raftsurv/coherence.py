"""Checks of the two time-origin inequalities on median time to event (MTE).

For two otherwise identical subjects first observed at ages ``a`` and ``0``:

* upper: ``m(a) <= m(0)``, the older subject should not have longer to wait;
* lower: ``m(a) + a >= m(0)``, the older subject should not reach the event at a
  younger age.

Models with entry age as a covariate on a time-since-entry scale satisfy both only
when the age coefficient is zero; :func:`claim_scan` demonstrates this on grids
and :func:`check_inequalities` audits a fitted model. The published Wilson et al.
Weibull risk equation is included as a worked example.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from types import MappingProxyType

import numpy as np
from scipy import optimize

from . import dist
from .dist import DistributionFamily, ParamSet
from .exceptions import DomainError, RaftSurvError
from .paradigms import Cohort, TrainedModel, median_time_to_event, predict_event_prob
from .survreg import FitResult, ModelForm

__all__ = [
    "WILSON_COEFFICIENTS",
    "WILSON_PROFILE",
    "WilsonModel",
    "WilsonCalibration",
    "calibrate_wilson_shape",
    "ReferenceProfile",
    "CoherenceReport",
    "check_inequalities",
    "ClaimReport",
    "claim_scan",
    "rescale_time",
]

INEQUALITY_TOL = 1e-9

WILSON_COEFFICIENTS = MappingProxyType(
    {
        "intercept": 14.9756,
        "bmi": -0.0159,
        "age": -0.0571,
        "smoker": -0.4959,
        "sbp": -0.0070,
        "tc_hdl": -0.1432,
        "diabetic": -0.3421,
        "male": 0.5139,
    }
)

# healthy non-smoking, non-diabetic man
WILSON_PROFILE = MappingProxyType({"bmi": 20.0, "smoker": 0.0, "sbp": 120.0, "tc_hdl": 3.5, "diabetic": 0.0, "male": 1.0})

WILSON_TARGETS = ((50.0, 75.0, 0.147), (55.0, 75.0, 0.159))

_DAYS_PER_YEAR = 365.25


@dataclass(frozen=True)
class WilsonModel:
    """Weibull AFT risk equation with age as a covariate on the time-since-observation scale.

    ``time_unit`` converts years to model time units; neither it nor ``shape``
    is published, so both come from :func:`calibrate_wilson_shape`.
    """

    shape: float = 1.0
    time_unit: float = _DAYS_PER_YEAR
    coefficients: MappingProxyType = WILSON_COEFFICIENTS
    profile: MappingProxyType = WILSON_PROFILE

    def linear_predictor(self, age):
        c = self.coefficients
        lp = c["intercept"] + c["age"] * np.asarray(age, dtype=float)
        for name, value in self.profile.items():
            lp = lp + c[name] * value
        return lp

    def param_set(self, age) -> ParamSet:
        """Weibull parameters in years for a subject first observed at ``age``."""
        return ParamSet(scale=np.exp(self.linear_predictor(age)) / self.time_unit, shape=self.shape)

    def event_prob(self, age, years):
        return dist.cdf(years, DistributionFamily.WEIBULL, self.param_set(age))

    def median_years(self, age):
        return dist.median(DistributionFamily.WEIBULL, self.param_set(age))


@dataclass(frozen=True)
class WilsonCalibration:
    model: WilsonModel
    p_50_75: float
    p_55_75: float
    residual: float
    success: bool
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "shape": self.model.shape,
            "time_unit": self.model.time_unit,
            "p_50_75": self.p_50_75,
            "p_55_75": self.p_55_75,
            "residual": self.residual,
            "success": self.success,
            "message": self.message,
        }


def calibrate_wilson_shape(shape_bounds=(0.1, 10.0)) -> WilsonCalibration:
    """Fit ``shape`` and ``time_unit`` to the two published event probabilities.

    Least squares on ``(log shape, log time_unit)`` starting from an exponential
    model measured in days. A shape outside ``shape_bounds`` is reported as an
    unsuccessful calibration rather than raised.
    """

    def model_at(x):
        return WilsonModel(shape=float(np.exp(x[0])), time_unit=float(np.exp(x[1])))

    def residuals(x):
        m = model_at(x)
        return [m.event_prob(a, t - a) - p for a, t, p in WILSON_TARGETS]

    sol = optimize.least_squares(residuals, x0=[0.0, np.log(_DAYS_PER_YEAR)], xtol=1e-14, ftol=1e-14, gtol=1e-14)
    model = model_at(sol.x)
    lo, hi = shape_bounds
    success = bool(sol.success) and lo <= model.shape <= hi
    message = sol.message if success else f"calibrated shape {model.shape:.4g} outside [{lo}, {hi}]"
    return WilsonCalibration(
        model=model,
        p_50_75=float(model.event_prob(50.0, 25.0)),
        p_55_75=float(model.event_prob(55.0, 20.0)),
        residual=float(np.max(np.abs(sol.fun))),
        success=success,
        message=message,
    )


@dataclass(frozen=True)
class ReferenceProfile:
    """Covariates held fixed while entry age varies.

    ``x`` and ``z`` default to zeros. For residual paradigms ``e`` (default zeros)
    fixes the stage-1 residual and ``z`` is rebuilt from the age trend.
    """

    x: tuple[float, ...] | None = None
    z: tuple[float, ...] | None = None
    e: tuple[float, ...] | None = None


def _reference_cohort(model: TrainedModel, ages, profile: ReferenceProfile) -> Cohort:
    ages = np.asarray(ages, dtype=float)
    n, q, p = ages.size, len(model.x_names), len(model.z_names)
    x = np.zeros(q) if profile.x is None else np.asarray(profile.x, dtype=float)
    if model.stage1 is not None:
        e = np.zeros(p) if profile.e is None else np.asarray(profile.e, dtype=float)
        Z = model.stage1.trend(ages) + e
    else:
        z = np.zeros(p) if profile.z is None else np.asarray(profile.z, dtype=float)
        Z = np.tile(z, (n, 1))
    return Cohort(
        entry_age=ages,
        X=np.tile(x, (n, 1)),
        Z=Z.reshape(n, p),
        x_names=model.x_names,
        z_names=model.z_names,
    )


@dataclass
class CoherenceReport:
    """Per-age inequality flags; ``None`` flags mark ages where the MTE could not be evaluated."""

    label: str
    ages: np.ndarray
    mte: np.ndarray
    reference_age: float
    reference_mte: float
    upper_ok: list
    lower_ok: list
    worst_upper: tuple[float, float | None]
    worst_lower: tuple[float, float | None]
    target_age: float | None = None
    target_probs: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    @property
    def upper_violated(self) -> bool:
        return any(flag is False for flag in self.upper_ok)

    @property
    def lower_violated(self) -> bool:
        return any(flag is False for flag in self.lower_ok)

    @property
    def n_violations(self) -> int:
        return sum(flag is False for flag in self.upper_ok) + sum(flag is False for flag in self.lower_ok)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "reference_age": self.reference_age,
            "reference_mte": self.reference_mte,
            "ages": self.ages.tolist(),
            "mte": [None if not np.isfinite(v) else float(v) for v in self.mte],
            "upper_ok": list(self.upper_ok),
            "lower_ok": list(self.lower_ok),
            "upper_violated": self.upper_violated,
            "lower_violated": self.lower_violated,
            "worst_upper": {"magnitude": self.worst_upper[0], "age": self.worst_upper[1]},
            "worst_lower": {"magnitude": self.worst_lower[0], "age": self.worst_lower[1]},
            "target_age": self.target_age,
            "target_probs": None if self.target_probs is None else [float(v) for v in self.target_probs],
            **self.extra,
        }

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def format_table(self) -> str:
        def flag(v):
            return "n/a" if v is None else ("ok" if v else "VIOLATED")

        head = f"{'age':>8} {'MTE':>12} {'age+MTE':>12} {'upper':>9} {'lower':>9}"
        if self.target_probs is not None:
            head += f" {'P(by ' + format(self.target_age, 'g') + ')':>12}"
        lines = [
            f"{self.label}: reference MTE at age {self.reference_age:g} = {self.reference_mte:.4f} years",
            head,
        ]
        for i, a in enumerate(self.ages):
            m = self.mte[i]
            row = f"{a:8.2f} {m:12.4f} {m + a:12.4f} {flag(self.upper_ok[i]):>9} {flag(self.lower_ok[i]):>9}"
            if self.target_probs is not None:
                row += f" {self.target_probs[i]:12.4f}"
            lines.append(row)
        for side, (size, age) in (("upper", self.worst_upper), ("lower", self.worst_lower)):
            if age is not None:
                lines.append(f"worst {side} violation {size:.4g} years at age {age:g}")
        return "\n".join(lines)


def _mte_function(model, profile):
    if isinstance(model, WilsonModel):
        return lambda a: float(model.median_years(a))

    def mte(a):
        return float(median_time_to_event(model, _reference_cohort(model, [a], profile))[0])

    return mte


def _target_prob_function(model, profile, target_age):
    if isinstance(model, WilsonModel):
        return lambda a: float(model.event_prob(a, target_age - a))
    return lambda a: float(predict_event_prob(model, _reference_cohort(model, [a], profile), target_age - a)[0])


def check_inequalities(
    model: TrainedModel | WilsonModel,
    ages,
    profile: ReferenceProfile | None = None,
    reference_age: float = 0.0,
    target_age: float | None = None,
    tol: float = INEQUALITY_TOL,
    label: str | None = None,
) -> CoherenceReport:
    """Evaluate both inequalities at every grid age against ``reference_age``.

    Parameters
    ----------
    model : TrainedModel or WilsonModel
    ages : array-like
        Entry ages to audit.
    profile : ReferenceProfile, optional
        Covariates held fixed for a TrainedModel; ignored for WilsonModel.
    target_age : float, optional
        Also report ``P(event by target_age | event-free at a)`` for each
        ``a < target_age``.

    Returns
    -------
    CoherenceReport
        Violations are findings, not errors, and ages where the MTE overflows are
        marked unevaluable.
    """
    ages = np.asarray(ages, dtype=float).reshape(-1)
    if ages.size == 0:
        raise ValueError("age grid is empty")
    profile = profile or ReferenceProfile()
    mte_at = _mte_function(model, profile)
    m0 = mte_at(reference_age)

    mte = np.full(ages.size, np.nan)
    upper, lower = [], []
    worst_u, worst_l = (0.0, None), (0.0, None)
    for i, a in enumerate(ages):
        try:
            m = mte_at(a)
        except (RaftSurvError, OverflowError, FloatingPointError):
            upper.append(None)
            lower.append(None)
            continue
        mte[i] = m
        upper.append(bool(m <= m0 + tol))
        lower.append(bool(m + a >= m0 - tol))
        if m - m0 > worst_u[0]:
            worst_u = (float(m - m0), float(a))
        if m0 - m - a > worst_l[0]:
            worst_l = (float(m0 - m - a), float(a))

    target_probs = None
    extra = {}
    if target_age is not None:
        prob_at = _target_prob_function(model, profile, float(target_age))
        target_probs = np.array([prob_at(a) if a < target_age else np.nan for a in ages])
        # a coherent model cannot raise the risk of an event by a fixed age for a later survivor
        finite = target_probs[np.isfinite(target_probs)]
        extra["target_prob_increases"] = bool(np.any(np.diff(finite) > tol))

    if label is None:
        label = "wilson" if isinstance(model, WilsonModel) else f"{model.paradigm.value}/{model.family.value}"
    return CoherenceReport(
        label=label,
        ages=ages,
        mte=mte,
        reference_age=float(reference_age),
        reference_mte=m0,
        upper_ok=upper,
        lower_ok=lower,
        worst_upper=worst_u,
        worst_lower=worst_l,
        target_age=None if target_age is None else float(target_age),
        target_probs=target_probs,
        extra=extra,
    )


@dataclass
class ClaimReport:
    """Outcome of :func:`claim_scan`.

    ``rows`` holds one entry per (beta, rescale factor) with whether each
    inequality held on the whole age grid and the first violating age.
    """

    model_form: ModelForm
    age_transform: str
    family: DistributionFamily
    baseline: ParamSet
    rows: list

    def _rows_for(self, beta):
        return [r for r in self.rows if r["beta"] == beta]

    @property
    def betas(self) -> list:
        return sorted({r["beta"] for r in self.rows})

    def has_violation(self, beta) -> bool:
        return any(not (r["upper_ok"] and r["lower_ok"]) for r in self._rows_for(beta))

    def upper_holds(self, beta) -> bool:
        """Upper inequality holds at every age for every rescale factor."""
        return all(r["upper_ok"] for r in self._rows_for(beta))

    def lower_violated_somewhere(self, beta) -> bool:
        return any(not r["lower_ok"] for r in self._rows_for(beta))

    def consistent_side(self, beta) -> bool:
        """Whether ``beta`` has the sign under which the upper inequality is expected to hold."""
        return beta >= 0 if self.model_form is ModelForm.PH else beta <= 0

    def confirms_claims(self) -> bool:
        """Upper holds iff beta is on its consistent side; otherwise-clean betas fail the lower one; only beta = 0 is clean."""
        for b in self.betas:
            if self.upper_holds(b) != self.consistent_side(b):
                return False
            if b != 0 and self.upper_holds(b) and not self.lower_violated_somewhere(b):
                return False
            if (b == 0) == self.has_violation(b):
                return False
        return True

    def to_dict(self) -> dict:
        return {
            "model_form": self.model_form.value,
            "age_transform": self.age_transform,
            "family": self.family.value,
            "baseline": {"scale": float(np.asarray(self.baseline.scale)), "shape": float(np.asarray(self.baseline.shape))},
            "rows": self.rows,
            "confirms_claims": self.confirms_claims(),
        }


def _claim_medians(model_form, family, baseline, beta, fa, k):
    if model_form is ModelForm.AFT:
        return k * float(dist.median(family, baseline)) * np.exp(beta * fa)
    # S(t; a) = S0(t)**exp(beta f(a)), so the median solves log S0(t) = log(0.5) exp(-beta f(a))
    log_target = np.log(0.5) * np.exp(-beta * fa)
    return k * np.asarray(dist.inverse_log_survival(log_target, family, baseline))


def claim_scan(
    model_form="aft",
    age_transform="identity",
    beta_grid=(-0.2, -0.05, 0.0, 0.05, 0.2),
    age_grid=tuple(range(1, 81)),
    baseline: ParamSet | None = None,
    family="weibull",
    rescale_factors=(1e-3, 1.0, 1e3),
    tol: float = INEQUALITY_TOL,
) -> ClaimReport:
    """Scan age coefficients of a single-covariate model on the time-since-entry scale.

    The AFT median is ``m(a) = m0 * exp(beta f(a))``; the PH median solves
    ``S0(m) = 0.5 ** exp(-beta f(a))``. Each rescale factor ``k`` multiplies the
    time axis, which leaves ``beta`` unchanged.
    """
    model_form = ModelForm.coerce(model_form)
    family = DistributionFamily.coerce(family)
    baseline = baseline or ParamSet(scale=1.0, shape=1.0)
    ages = np.asarray(age_grid, dtype=float)
    if age_transform == "identity":
        fa, f0 = ages, 0.0
    elif age_transform == "log1p":
        fa, f0 = np.log1p(ages), 0.0
    else:
        raise ValueError(f"unknown age_transform {age_transform!r}")

    rows = []
    for beta in beta_grid:
        for k in rescale_factors:
            if not k > 0:
                raise DomainError("rescale factors must be positive")
            m = _claim_medians(model_form, family, baseline, float(beta), fa, k)
            m0 = float(_claim_medians(model_form, family, baseline, float(beta), np.array([f0]), k)[0])
            up = m <= m0 + tol
            lo = m + ages >= m0 - tol
            rows.append(
                {
                    "beta": float(beta),
                    "rescale": float(k),
                    "reference_mte": m0,
                    "upper_ok": bool(up.all()),
                    "lower_ok": bool(lo.all()),
                    "first_upper_violation": None if up.all() else float(ages[~up][0]),
                    "first_lower_violation": None if lo.all() else float(ages[~lo][0]),
                }
            )
    return ClaimReport(model_form=model_form, age_transform=age_transform, family=family, baseline=baseline, rows=rows)


def rescale_time(params, k: float):
    """Express a fitted model in time units multiplied by ``k``.

    Only the intercept changes: by ``+log k`` for AFT fits and ``-shape * log k``
    for Weibull PH fits.

    Parameters
    ----------
    params : FitResult or TrainedModel
    k : float
        Positive rescale factor.
    """
    if not k > 0:
        raise DomainError(f"rescale factor must be positive, got {k!r}")
    if isinstance(params, TrainedModel):
        return replace(params, fit=rescale_time(params.fit, k))
    if not isinstance(params, FitResult):
        raise TypeError("rescale_time expects a FitResult or TrainedModel")
    coef = params.coefficients.copy()
    if params.model_form is ModelForm.AFT:
        coef[0] += np.log(k)
    else:
        coef[0] -= params.shape * np.log(k)
    return replace(params, coefficients=coef)
