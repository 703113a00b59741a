"""Synthetic cohorts with delayed entry, and the cohort CSV format.

The generator follows the residual model exactly: age-varying covariates are a
linear age trend plus age-independent noise, and event ages come from an AFT
model on the age scale whose linear predictor uses the noise (the residual),
conditioned on survival to the entry age.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import dist
from .dist import DistributionFamily, ParamSet
from .exceptions import CohortFormatError, ConfigError
from .paradigms import Cohort

__all__ = [
    "GeneratorConfig",
    "generate_cohort",
    "read_generator_config",
    "read_cohort",
    "write_cohort",
]

logger = logging.getLogger(__name__)

_MIN_ENTRY_SURVIVAL = 1e-12


@dataclass(frozen=True)
class GeneratorConfig:
    """Parameters of the synthetic cohort.

    ``trend_intercept``, ``trend_slope``, ``noise_sd`` and ``beta_z`` have one
    entry per age-varying covariate; ``beta_x`` one entry per fixed covariate.
    """

    n: int = 1000
    entry_age_min: float = 30.0
    entry_age_max: float = 70.0
    trend_intercept: tuple[float, ...] = (0.0,)
    trend_slope: tuple[float, ...] = (0.0,)
    noise_sd: tuple[float, ...] = (1.0,)
    beta0: float = 4.5
    beta_x: tuple[float, ...] = (0.0,)
    beta_z: tuple[float, ...] = (0.0,)
    family: str = "weibull"
    shape: float = 2.0
    censor_age: float = 90.0
    seed: int = 0

    def __post_init__(self):
        for f in ("trend_intercept", "trend_slope", "noise_sd", "beta_x", "beta_z"):
            object.__setattr__(self, f, tuple(float(v) for v in np.atleast_1d(getattr(self, f))))
        object.__setattr__(self, "family", DistributionFamily.coerce(self.family).value)
        self.validate()

    @property
    def n_varying(self) -> int:
        return len(self.trend_intercept)

    @property
    def n_fixed(self) -> int:
        return len(self.beta_x)

    def validate(self):
        if int(self.n) != self.n or self.n < 1:
            raise ConfigError("must be a positive integer", field="n")
        p = self.n_varying
        for name in ("trend_slope", "noise_sd", "beta_z"):
            if len(getattr(self, name)) != p:
                raise ConfigError(f"needs {p} values to match trend_intercept", field=name)
        if not all(np.isfinite(v) and v > 0 for v in self.noise_sd):
            raise ConfigError("noise_sd must be positive", field="noise_sd")
        if not (0 < self.entry_age_min < self.entry_age_max):
            raise ConfigError("entry ages need 0 < entry_age_min < entry_age_max", field="entry_age_min")
        if not self.censor_age > self.entry_age_max:
            raise ConfigError("censor_age must exceed the entry age range", field="censor_age")
        if not self.shape > 0:
            raise ConfigError("must be positive", field="shape")
        if not (0 <= int(self.seed) < 2**64):
            raise ConfigError("must be an unsigned 64-bit integer", field="seed")

    def to_dict(self) -> dict:
        return asdict(self)


def generate_cohort(config: GeneratorConfig) -> Cohort:
    """Draw a cohort from ``config``; identical seeds give identical cohorts.

    Each subject gets a uniform entry age, a residual ``e ~ N(0, noise_sd)``,
    ``z = intercept + slope * age + e``, standard normal fixed covariates, and an
    event age drawn by inversion from the model distribution truncated at the
    entry age. Event ages beyond ``censor_age`` are censored there.
    """
    rng = np.random.default_rng(int(config.seed))
    family = DistributionFamily.coerce(config.family)
    n, p, q = int(config.n), config.n_varying, config.n_fixed
    slope = np.asarray(config.trend_slope)
    intercept = np.asarray(config.trend_intercept)
    beta_x = np.asarray(config.beta_x)
    beta_z = np.asarray(config.beta_z)

    ages = np.empty(n)
    E = np.empty((n, p))
    X = np.empty((n, q))
    log_s_entry = np.empty(n)
    todo = np.arange(n)
    redraws = 0
    while todo.size:
        m = todo.size
        ages[todo] = rng.uniform(config.entry_age_min, config.entry_age_max, m)
        E[todo] = rng.normal(0.0, config.noise_sd, (m, p))
        X[todo] = rng.standard_normal((m, q))
        scale = np.exp(config.beta0 + X[todo] @ beta_x + E[todo] @ beta_z)
        log_s_entry[todo] = dist.log_survival(ages[todo], family, ParamSet(scale, config.shape))
        todo = todo[log_s_entry[todo] < np.log(_MIN_ENTRY_SURVIVAL)]
        redraws += todo.size
        if redraws > 10 * n:
            raise ConfigError("almost no subjects survive to their entry age; the config is degenerate")
    if redraws:
        logger.info("redrew %d subjects with negligible survival to entry", redraws)

    params = ParamSet(np.exp(config.beta0 + X @ beta_x + E @ beta_z), config.shape)
    # 1 - U lies in (0, 1], so its log is finite
    log_u = np.log1p(-rng.random(n))
    event_age = np.asarray(dist.inverse_log_survival(log_s_entry + np.minimum(log_u, -1e-300), family, params))
    event_age = np.maximum(event_age, np.nextafter(ages, np.inf))
    event = event_age <= config.censor_age
    exit_age = np.where(event, event_age, config.censor_age)
    Z = intercept + np.outer(ages, slope) + E

    return Cohort(
        entry_age=ages,
        X=X,
        Z=Z,
        followup=exit_age - ages,
        event=event,
        ids=np.array([f"S{i:06d}" for i in range(n)], dtype=object),
    )


_TUPLE_FIELDS = {"trend_intercept", "trend_slope", "noise_sd", "beta_x", "beta_z"}
_INT_FIELDS = {"n", "seed"}
_STR_FIELDS = {"family"}


def read_generator_config(path) -> GeneratorConfig:
    """Parse a ``key = value`` file; lists are comma separated and ``#`` starts a comment."""
    known = {f.name for f in fields(GeneratorConfig)}
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in known:
                raise ConfigError(f"line {lineno}: unknown key", field=key)
            try:
                if key in _TUPLE_FIELDS:
                    values[key] = tuple(float(v) for v in value.split(",") if v.strip())
                elif key in _INT_FIELDS:
                    values[key] = int(value)
                elif key in _STR_FIELDS:
                    values[key] = value
                else:
                    values[key] = float(value)
            except ValueError:
                raise ConfigError(f"line {lineno}: cannot parse {value!r}", field=key) from None
    try:
        return GeneratorConfig(**values)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def _format_float(v: float) -> str:
    return format(float(v), ".17g")


def write_cohort(cohort: Cohort, path):
    """Write ``cohort`` as UTF-8 CSV with 17 significant digits per number."""
    header = ["id", "entry_age", *cohort.x_names, *cohort.z_names, "followup_time", "event"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(len(cohort)):
            writer.writerow(
                [
                    cohort.ids[i],
                    _format_float(cohort.entry_age[i]),
                    *(_format_float(v) for v in cohort.X[i]),
                    *(_format_float(v) for v in cohort.Z[i]),
                    _format_float(cohort.followup[i]),
                    "1" if cohort.event[i] else "0",
                ]
            )


def read_cohort(path) -> Cohort:
    """Read a cohort CSV written by :func:`write_cohort` or by hand.

    The header must be ``id, entry_age, x_*..., z_*..., followup_time, event``.

    Raises
    ------
    CohortFormatError
        On a malformed header or row, citing the line and column.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise CohortFormatError("missing header row", line=1) from None
        x_names, z_names = _check_header(header)
        width = len(header)
        ids, ages, X, Z, fu, ev = [], [], [], [], [], []
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != width:
                raise CohortFormatError(f"expected {width} fields, found {len(row)}", line=lineno)
            values = {}
            for name, cell in zip(header[1:-1], row[1:-1]):
                try:
                    values[name] = float(cell)
                except ValueError:
                    raise CohortFormatError(f"not a number: {cell!r}", line=lineno, column=name) from None
                if not np.isfinite(values[name]):
                    raise CohortFormatError(f"not finite: {cell!r}", line=lineno, column=name)
            event_cell = row[-1].strip()
            if event_cell not in ("0", "1"):
                raise CohortFormatError(f"event must be 0 or 1, got {event_cell!r}", line=lineno, column="event")
            if values["entry_age"] <= 0:
                raise CohortFormatError("entry_age must be positive", line=lineno, column="entry_age")
            if values["followup_time"] <= 0:
                raise CohortFormatError("followup_time must be positive", line=lineno, column="followup_time")
            ids.append(row[0].strip())
            ages.append(values["entry_age"])
            X.append([values[k] for k in x_names])
            Z.append([values[k] for k in z_names])
            fu.append(values["followup_time"])
            ev.append(event_cell == "1")
    n = len(ids)
    return Cohort(
        entry_age=np.array(ages, dtype=float),
        X=np.array(X, dtype=float).reshape(n, len(x_names)),
        Z=np.array(Z, dtype=float).reshape(n, len(z_names)),
        followup=np.array(fu, dtype=float),
        event=np.array(ev, dtype=bool),
        ids=np.array(ids, dtype=object),
        x_names=x_names,
        z_names=z_names,
    )


def _check_header(header):
    if len(header) < 4 or header[0] != "id" or header[1] != "entry_age" or header[-2:] != ["followup_time", "event"]:
        raise CohortFormatError("header must be id, entry_age, x_*, z_*, followup_time, event", line=1)
    middle = header[2:-2]
    x_names = tuple(h for h in middle if h.startswith("x_"))
    z_names = tuple(h for h in middle if h.startswith("z_"))
    if list(x_names + z_names) != middle:
        raise CohortFormatError("covariate columns must be x_* columns followed by z_* columns", line=1)
    if len(set(header)) != len(header):
        raise CohortFormatError("duplicate column names", line=1)
    return x_names, z_names
