import numpy as np
import pytest

from raftsurv.dist import DistributionFamily
from raftsurv.paradigms import Cohort, Paradigm, TrainedModel, _layout
from raftsurv.residualize import ResidualModel
from raftsurv.simdata import GeneratorConfig, generate_cohort
from raftsurv.survreg import FitResult

_ACCEPTANCE_LINES = []


def record_acceptance(name, passed, detail=""):
    """Store a criterion outcome for the end-of-run summary and print it."""
    line = f"{'PASS' if passed else 'FAIL'}  {name}" + (f"  ({detail})" if detail else "")
    _ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def small_config(**overrides):
    base = dict(
        n=600,
        entry_age_min=30.0,
        entry_age_max=70.0,
        trend_intercept=(100.0,),
        trend_slope=(1.5,),
        noise_sd=(12.0,),
        beta0=4.4,
        beta_x=(-0.2,),
        beta_z=(-0.02,),
        family="weibull",
        shape=2.0,
        censor_age=90.0,
        seed=7,
    )
    base.update(overrides)
    return GeneratorConfig(**base)


@pytest.fixture(scope="session")
def cohort():
    return generate_cohort(small_config())


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def hand_model(paradigm, coefficients, shape, family="weibull", n_x=0, n_z=0, stage1=None):
    """A TrainedModel with chosen coefficients, bypassing estimation."""
    paradigm = Paradigm.coerce(paradigm)
    x_names = tuple(f"x_{j + 1}" for j in range(n_x))
    z_names = tuple(f"z_{j + 1}" for j in range(n_z))
    if paradigm.uses_residuals and stage1 is None:
        stage1 = ResidualModel(np.zeros(n_z), np.zeros(n_z), z_names)
    layout = _layout(paradigm, Cohort(entry_age=np.ones(1), X=np.zeros((1, n_x)), Z=np.zeros((1, n_z))))
    fit = FitResult(
        coefficients=np.asarray(coefficients, dtype=float),
        log_shape=float(np.log(shape)),
        max_loglik=float("nan"),
        converged=True,
        iterations=0,
        std_errors=None,
        family=DistributionFamily.coerce(family),
        model_form=paradigm.model_form,
        coef_names=("intercept",) + layout,
    )
    return TrainedModel(
        paradigm=paradigm,
        family=fit.family,
        stage1=stage1,
        fit=fit,
        covariate_layout=layout,
        x_names=x_names,
        z_names=z_names,
    )
