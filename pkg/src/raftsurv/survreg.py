"""Maximum likelihood fitting of parametric AFT and proportional hazards models.

Both model forms act on the standardized variable ``w`` of the baseline family:

* AFT: ``log scale_i = x_i @ beta`` so ``w = k * (log t - x_i @ beta)``.
* PH (Weibull only): cumulative hazard ``t**k * exp(x_i @ gamma)`` so
  ``w = k * log t + x_i @ gamma``.

Here ``k = exp(log_shape)`` and ``x_i`` includes a leading 1 for the intercept.
Under these conventions a Weibull PH fit satisfies ``gamma = -k * beta``.

Right censoring and delayed entry are handled in the usual way: events contribute
``log f(exit)``, censored rows ``log S(exit)``, and every row with ``entry > 0``
subtracts ``log S(entry)``.
"""

from __future__ import annotations

import enum
import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg
from sklearn.base import BaseEstimator
from sklearn.exceptions import ConvergenceWarning
from sklearn.utils.validation import check_is_fitted

from . import dist
from ._validation import check_covariate_matrix, check_survival_data
from .dist import DistributionFamily, ParamSet
from .exceptions import (
    DegenerateDataError,
    EvaluationError,
    IdentifiabilityError,
    UnsupportedConfigurationError,
)

__all__ = [
    "ModelForm",
    "SurvivalData",
    "FitResult",
    "loglik",
    "grad_loglik",
    "hessian_loglik",
    "fit",
    "ParametricSurvivalRegressor",
]

logger = logging.getLogger(__name__)

_MAX_STEP = 5.0


class ModelForm(str, enum.Enum):
    AFT = "aft"
    PH = "ph"

    @classmethod
    def coerce(cls, value) -> "ModelForm":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"unknown model form {value!r}; expected 'aft' or 'ph'") from None


@dataclass(frozen=True)
class SurvivalData:
    """Aligned survival observations on a single time scale.

    Parameters
    ----------
    exit : array-like of shape (n,)
        Event or censoring time.
    event : array-like of shape (n,)
        True where the event was observed.
    X : array-like of shape (n, q), optional
        Covariates, excluding the intercept.
    entry : array-like of shape (n,), optional
        Delayed-entry time; zero means no truncation.
    names : sequence of str, optional
        Covariate names, used in identifiability errors and reports.
    """

    exit: np.ndarray
    event: np.ndarray
    X: np.ndarray | None = None
    entry: np.ndarray | None = None
    names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        entry, exit, event, X = check_survival_data(self.entry, self.exit, self.event, self.X)
        for name, arr in (("entry", entry), ("exit", exit), ("event", event), ("X", X)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        names = tuple(self.names) or tuple(f"x_{j + 1}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise ValueError(f"{len(names)} names given for {X.shape[1]} covariates")
        object.__setattr__(self, "names", names)

    @property
    def n(self) -> int:
        return self.exit.size

    @property
    def design(self) -> np.ndarray:
        return np.column_stack([np.ones(self.n), self.X])

    @property
    def coef_names(self) -> tuple[str, ...]:
        return ("intercept",) + self.names

    def rescaled(self, k: float) -> "SurvivalData":
        """Same data with every entry and exit time multiplied by ``k``."""
        return replace(self, entry=self.entry * k, exit=self.exit * k)


@dataclass(frozen=True)
class FitResult:
    """Outcome of :func:`fit`.

    ``coefficients`` starts with the intercept. ``std_errors`` covers
    ``coefficients`` followed by ``log_shape`` (NaN there when shape was fixed) and
    is ``None`` when the observed information is not positive definite.
    """

    coefficients: np.ndarray
    log_shape: float
    max_loglik: float
    converged: bool
    iterations: int
    std_errors: np.ndarray | None
    family: DistributionFamily
    model_form: ModelForm
    coef_names: tuple[str, ...] = ()
    shape_fixed: bool = False
    grad_norm: float = float("nan")
    initial_loglik: float = float("nan")

    @property
    def shape(self) -> float:
        return float(np.exp(self.log_shape))

    @property
    def params(self) -> np.ndarray:
        return np.append(self.coefficients, self.log_shape)

    @property
    def coef_std_errors(self):
        return None if self.std_errors is None else self.std_errors[:-1]

    def linear_predictor(self, X) -> np.ndarray:
        X = check_covariate_matrix(X, n_cols=self.coefficients.size - 1)
        return self.coefficients[0] + X @ self.coefficients[1:]

    def param_set(self, X) -> ParamSet:
        """Per-row scale and shape of the fitted distribution."""
        eta = self.linear_predictor(X)
        k = self.shape
        if self.model_form is ModelForm.PH:
            return ParamSet(scale=np.exp(-eta / k), shape=k)
        return ParamSet(scale=np.exp(eta), shape=k)

    def to_dict(self) -> dict:
        return {
            "family": self.family.value,
            "model_form": self.model_form.value,
            "coef_names": list(self.coef_names),
            "coefficients": self.coefficients.tolist(),
            "log_shape": self.log_shape,
            "shape": self.shape,
            "shape_fixed": self.shape_fixed,
            "max_loglik": self.max_loglik,
            "initial_loglik": self.initial_loglik,
            "converged": self.converged,
            "iterations": self.iterations,
            "grad_norm": self.grad_norm,
            "std_errors": None if self.std_errors is None else [_nan_to_none(v) for v in self.std_errors],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        se = d.get("std_errors")
        return cls(
            coefficients=np.asarray(d["coefficients"], dtype=float),
            log_shape=float(d["log_shape"]),
            max_loglik=float(d["max_loglik"]),
            converged=bool(d["converged"]),
            iterations=int(d["iterations"]),
            std_errors=None if se is None else np.array([np.nan if v is None else v for v in se], dtype=float),
            family=DistributionFamily.coerce(d["family"]),
            model_form=ModelForm.coerce(d["model_form"]),
            coef_names=tuple(d.get("coef_names", ())),
            shape_fixed=bool(d.get("shape_fixed", False)),
            grad_norm=float(d.get("grad_norm", float("nan"))),
            initial_loglik=float(d.get("initial_loglik", float("nan"))),
        )


def _nan_to_none(v):
    v = float(v)
    return None if np.isnan(v) else v


def _check_form(family, model_form):
    family = DistributionFamily.coerce(family)
    model_form = ModelForm.coerce(model_form)
    if model_form is ModelForm.PH and family is not DistributionFamily.WEIBULL:
        raise UnsupportedConfigurationError(
            f"proportional hazards is only implemented with a Weibull baseline, not {family.value}"
        )
    return family, model_form


def _w_parts(L, eta, k, model_form):
    """w and its derivatives w.r.t. eta and log_shape: (w, w_eta, w_theta, w_eta_theta, w_theta_theta)."""
    if model_form is ModelForm.AFT:
        w = k * (L - eta)
        return w, -k, w, -k, w
    kl = k * L
    return kl + eta, 1.0, kl, 0.0, kl


def _evaluate(params, data: SurvivalData, family, model_form, order=0):
    family, model_form = _check_form(family, model_form)
    params = np.asarray(params, dtype=float)
    D = data.design
    if params.size != D.shape[1] + 1:
        raise ValueError(f"expected {D.shape[1] + 1} parameters, got {params.size}")
    beta, theta = params[:-1], params[-1]
    k = np.exp(theta)
    d = data.event
    trunc = data.entry > 0

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        eta = D @ beta
        Ly = np.log(data.exit)
        wy, wy_eta, wy_th, wy_eth, wy_thth = _w_parts(Ly, eta, k, model_form)
        ll_y = np.where(d, theta - Ly + dist._std_log_pdf(wy, family), dist._std_log_sf(wy, family))
        De = D[trunc]
        Le = np.log(data.entry[trunc])
        we, we_eta, we_th, we_eth, we_thth = _w_parts(Le, eta[trunc], k, model_form)
        ll = ll_y.sum() - dist._std_log_sf(we, family).sum()
        if not np.isfinite(ll):
            raise EvaluationError("log-likelihood is not finite at these parameters")
        if order == 0:
            return ll

        pd1, pd2 = dist._std_log_pdf_derivs(wy, family)
        sd1, sd2 = dist._std_log_sf_derivs(wy, family)
        a1 = np.where(d, pd1, sd1)
        a2 = np.where(d, pd2, sd2)
        b1, b2 = dist._std_log_sf_derivs(we, family)

        grad = np.empty(params.size)
        grad[:-1] = D.T @ (a1 * wy_eta) - De.T @ (b1 * we_eta)
        grad[-1] = d.sum() + np.sum(a1 * wy_th) - np.sum(b1 * we_th)
        if not np.all(np.isfinite(grad)):
            raise EvaluationError("gradient is not finite at these parameters")
        if order == 1:
            return ll, grad

        hess = np.empty((params.size, params.size))
        cy = a2 * np.broadcast_to(wy_eta, wy.shape) ** 2
        ce = b2 * np.broadcast_to(we_eta, we.shape) ** 2
        hess[:-1, :-1] = (D * cy[:, None]).T @ D - (De * ce[:, None]).T @ De
        cross = D.T @ (a2 * wy_eta * wy_th + a1 * wy_eth) - De.T @ (b2 * we_eta * we_th + b1 * we_eth)
        hess[:-1, -1] = cross
        hess[-1, :-1] = cross
        hess[-1, -1] = np.sum(a2 * wy_th**2 + a1 * wy_thth) - np.sum(b2 * we_th**2 + b1 * we_thth)
        if not np.all(np.isfinite(hess)):
            raise EvaluationError("Hessian is not finite at these parameters")
    return ll, grad, hess


def loglik(params, data: SurvivalData, family, model_form="aft") -> float:
    """Log-likelihood at ``params = [intercept, coefficients..., log_shape]``.

    Raises
    ------
    EvaluationError
        If the value is not finite, so callers can shorten their step.
    """
    return float(_evaluate(params, data, family, model_form, order=0))


def grad_loglik(params, data: SurvivalData, family, model_form="aft") -> np.ndarray:
    return _evaluate(params, data, family, model_form, order=1)[1]


def hessian_loglik(params, data: SurvivalData, family, model_form="aft") -> np.ndarray:
    return _evaluate(params, data, family, model_form, order=2)[2]


def check_identifiable(D, names):
    """Raise :class:`IdentifiabilityError` naming the columns of ``D`` outside its numerical rank."""
    if D.shape[0] < D.shape[1]:
        raise IdentifiabilityError(
            f"{D.shape[0]} observations cannot identify {D.shape[1]} coefficients", names
        )
    _, R, piv = linalg.qr(D, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = diag[0] * max(D.shape) * np.finfo(float).eps if diag.size else 0.0
    rank = int(np.sum(diag > tol))
    if rank < D.shape[1]:
        dependent = [names[j] for j in sorted(piv[rank:])]
        raise IdentifiabilityError("design matrix is rank deficient", dependent)


def _initial_params(data, model_form, fix_shape):
    p = data.design.shape[1]
    params = np.zeros(p + 1)
    mean_event_exit = float(np.mean(data.exit[data.event]))
    log_shape = 0.0 if fix_shape is None else float(np.log(fix_shape))
    params[-1] = log_shape
    if model_form is ModelForm.PH:
        params[0] = -np.exp(log_shape) * np.log(mean_event_exit)
    else:
        params[0] = np.log(mean_event_exit)
    return params


def fit(
    data: SurvivalData,
    family="weibull",
    model_form="aft",
    *,
    max_iter: int = 200,
    grad_tol: float = 1e-8,
    init=None,
    fix_shape: float | None = None,
) -> FitResult:
    """Maximize the log-likelihood by damped Newton ascent.

    Each iteration takes a Newton step when the observed information is positive
    definite and a diagonally scaled gradient step otherwise, halving the step
    until the log-likelihood does not decrease.

    Parameters
    ----------
    data : SurvivalData
    family : DistributionFamily or str
    model_form : {"aft", "ph"}
    max_iter : int, default=200
    grad_tol : float, default=1e-8
        Convergence threshold on the sup-norm of the gradient of the free
        parameters, with covariates scaled to unit root mean square.
    init : array-like, optional
        Starting ``[intercept, coefficients..., log_shape]``. The default starts
        from an exponential model whose mean is the average event time.
    fix_shape : float, optional
        Hold the shape at this value instead of estimating it.

    Returns
    -------
    FitResult
        ``converged`` is False when ``max_iter`` was exhausted or the line
        search stalled before reaching ``grad_tol``.
    """
    family, model_form = _check_form(family, model_form)
    if not np.any(data.event):
        raise DegenerateDataError("no events observed; the model cannot be fitted")
    D = data.design
    check_identifiable(D, data.coef_names)
    if fix_shape is not None and not fix_shape > 0:
        raise ValueError("fix_shape must be positive")

    # work with unit-RMS covariate columns so the step cap and tolerances do not depend on units
    rms = np.sqrt(np.mean(data.X**2, axis=0)) if data.X.shape[1] else np.ones(0)
    rms[rms == 0] = 1.0
    col_scale = np.concatenate([[1.0], rms, [1.0]])
    original, data = data, replace(data, X=data.X / rms)

    if init is None:
        params = _initial_params(data, model_form, fix_shape)
    else:
        params = np.array(init, dtype=float) * col_scale
    if fix_shape is not None:
        params[-1] = np.log(fix_shape)
    free = np.arange(params.size) if fix_shape is None else np.arange(params.size - 1)

    ll, g, H = _evaluate(params, data, family, model_form, order=2)
    ll0 = ll
    iterations = 0
    converged = bool(np.max(np.abs(g[free])) <= grad_tol)
    while not converged and iterations < max_iter:
        step = _ascent_direction(H[np.ix_(free, free)], g[free])
        biggest = np.max(np.abs(step))
        if biggest > _MAX_STEP:
            step *= _MAX_STEP / biggest
        slack = 1e-12 * max(1.0, abs(ll))
        t = 1.0
        for _ in range(60):
            trial = params.copy()
            trial[free] += t * step
            try:
                ll_new, g_new, H_new = _evaluate(trial, data, family, model_form, order=2)
            except EvaluationError:
                t *= 0.5
                continue
            if ll_new >= ll - slack:
                break
            t *= 0.5
        else:
            logger.debug("line search stalled after %d iterations", iterations)
            break
        params, ll, g, H = trial, ll_new, g_new, H_new
        iterations += 1
        converged = bool(np.max(np.abs(g[free])) <= grad_tol)

    if not converged:
        warnings.warn(
            f"{model_form.value}/{family.value} fit did not converge after {iterations} iterations "
            f"(|grad|={np.max(np.abs(g[free])):.3g})",
            ConvergenceWarning,
            stacklevel=2,
        )

    se = _std_errors(H, free)
    return FitResult(
        coefficients=params[:-1] / col_scale[:-1],
        log_shape=float(params[-1]),
        max_loglik=float(ll),
        converged=converged,
        iterations=iterations,
        std_errors=None if se is None else se / col_scale,
        family=family,
        model_form=model_form,
        coef_names=original.coef_names,
        shape_fixed=fix_shape is not None,
        grad_norm=float(np.max(np.abs(g[free]))),
        initial_loglik=float(ll0),
    )


def _ascent_direction(Hf, gf):
    info = -Hf
    scale = np.sqrt(np.abs(np.diag(info)))
    scale[scale == 0] = 1.0
    A = info / np.outer(scale, scale)
    try:
        c = linalg.cho_factor(A)
        return linalg.cho_solve(c, gf / scale) / scale
    except linalg.LinAlgError:
        return gf / scale**2


def _std_errors(H, free):
    info = -H[np.ix_(free, free)]
    try:
        c = linalg.cho_factor(info)
    except linalg.LinAlgError:
        return None
    cov = linalg.cho_solve(c, np.eye(free.size))
    se = np.full(H.shape[0], np.nan)
    se[free] = np.sqrt(np.diag(cov))
    if not np.all(np.isfinite(se[free])):
        return None
    return se


class ParametricSurvivalRegressor(BaseEstimator):
    """Estimator interface to :func:`fit` for a single time scale.

    Parameters
    ----------
    family : {"weibull", "lognormal", "loglogistic"}, default="weibull"
    model_form : {"aft", "ph"}, default="aft"
    fix_shape : float, optional
        Shape held fixed during fitting.
    max_iter : int, default=200
    grad_tol : float, default=1e-8

    Attributes
    ----------
    result_ : FitResult
    intercept_ : float
    coef_ : ndarray of shape (n_features,)
    shape_ : float

    Examples
    --------
    >>> import numpy as np
    >>> est = ParametricSurvivalRegressor(fix_shape=1.0)
    >>> est.fit(np.empty((3, 0)), [1.0, 2.0, 3.0], [1, 1, 1]).intercept_  # doctest: +ELLIPSIS
    0.693147...
    """

    def __init__(self, family="weibull", model_form="aft", fix_shape=None, max_iter=200, grad_tol=1e-8):
        self.family = family
        self.model_form = model_form
        self.fix_shape = fix_shape
        self.max_iter = max_iter
        self.grad_tol = grad_tol

    def fit(self, X, time, event, entry=None, feature_names=None):
        X = check_covariate_matrix(X)
        names = tuple(feature_names) if feature_names is not None else ()
        data = SurvivalData(exit=time, event=event, X=X, entry=entry, names=names)
        self.result_ = fit(
            data,
            self.family,
            self.model_form,
            max_iter=self.max_iter,
            grad_tol=self.grad_tol,
            fix_shape=self.fix_shape,
        )
        self.intercept_ = float(self.result_.coefficients[0])
        self.coef_ = self.result_.coefficients[1:].copy()
        self.shape_ = self.result_.shape
        self.n_features_in_ = X.shape[1]
        return self

    def predict_survival(self, X, t, entry=None):
        """``S(t) / S(entry)`` per row of ``X``."""
        check_is_fitted(self, "result_")
        p = self.result_.param_set(X)
        log_s = np.asarray(dist.log_survival(t, self.result_.family, p))
        if entry is not None:
            log_s = log_s - np.asarray(dist.log_survival(entry, self.result_.family, p))
        return np.exp(log_s)

    def predict(self, X):
        """Median time to event per row of ``X``."""
        check_is_fitted(self, "result_")
        return np.asarray(dist.median(self.result_.family, self.result_.param_set(X)))

    def score(self, X, time, event, entry=None):
        """Mean log-likelihood per observation."""
        check_is_fitted(self, "result_")
        data = SurvivalData(exit=time, event=event, X=check_covariate_matrix(X), entry=entry)
        return loglik(self.result_.params, data, self.result_.family, self.result_.model_form) / data.n
