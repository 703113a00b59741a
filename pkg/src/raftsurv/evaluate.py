"""Year-discretized Brier score and repeated random-split evaluation.

For each validation subject the score runs over integer years ``j`` from ``s_i``
to ``t_i`` inclusive:

* time-since-entry models: ``s_i = 1`` and ``j`` counts years of follow-up;
* age-scale models: ``s_i = floor(entry age)`` and ``j`` is attained age.

``t_i = min(c_i, M)`` where ``c_i`` is the floored censoring time (infinite for
subjects with the event) and ``M`` is the floored maximum exit time over the
scored set. ``o_ij`` is 1 once the event has occurred by ``j`` and ``g_ij`` is the
model probability of that. The score is the mean squared difference over all
cells.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from sklearn.exceptions import ConvergenceWarning

from .dist import DistributionFamily
from .exceptions import EmptyGridError, RaftSurvError
from .paradigms import Cohort, Paradigm, TrainedModel, as_cohort, predict_event_prob, train

__all__ = [
    "BrierConfig",
    "BrierReport",
    "BrierGrid",
    "brier_grid",
    "brier_score",
    "split_cohort",
    "run_evaluation",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BrierGrid:
    """Flattened subject-year cells of one scored set."""

    subject: np.ndarray
    year: np.ndarray
    horizon: np.ndarray
    observed: np.ndarray
    max_time: int

    @property
    def n_cells(self) -> int:
        return self.subject.size


def brier_grid(cohort: Cohort, age_scale: bool, max_time: int | None = None) -> BrierGrid:
    """Build the scoring grid.

    Parameters
    ----------
    cohort : Cohort
    age_scale : bool
        Score on attained age rather than on years since entry.
    max_time : int, optional
        Override for ``M``; by default the floored maximum exit time of ``cohort``.
    """
    if age_scale:
        exit_time = cohort.exit_age
        start = np.floor(cohort.entry_age).astype(int)
    else:
        exit_time = cohort.followup
        start = np.ones(len(cohort), dtype=int)
    M = int(math.floor(np.max(exit_time))) if max_time is None else int(max_time)
    # censoring time is infinite for subjects with the event
    stop = np.where(cohort.event, M, np.minimum(np.floor(exit_time), M)).astype(np.int64)
    counts = np.maximum(stop - start + 1, 0)
    subject = np.repeat(np.arange(len(cohort)), counts)
    offsets = np.arange(subject.size) - np.repeat(np.cumsum(counts) - counts, counts)
    year = start[subject] + offsets
    observed = (cohort.event[subject] & (exit_time[subject] <= year)).astype(float)
    if age_scale:
        horizon = np.maximum(year - cohort.entry_age[subject], 0.0)
    else:
        horizon = year.astype(float)
    return BrierGrid(subject=subject, year=year, horizon=horizon, observed=observed, max_time=M)


def brier_score(model: TrainedModel, validation, max_time: int | None = None) -> float:
    """Mean squared error between predicted and observed event status over the year grid.

    Raises
    ------
    EmptyGridError
        If no subject contributes a cell.
    """
    cohort = as_cohort(validation)
    if len(cohort) == 0:
        raise EmptyGridError("validation cohort is empty")
    grid = brier_grid(cohort, model.paradigm.age_scale, max_time)
    if grid.n_cells == 0:
        raise EmptyGridError("no subject-year cells to score")
    g = predict_event_prob(model, cohort.subset(grid.subject), grid.horizon)
    return float(np.mean((g - grid.observed) ** 2))


@dataclass(frozen=True)
class BrierConfig:
    n_reps: int = 100
    split_fraction: float = 0.5
    seed: int = 0
    paradigms: tuple[Paradigm, ...] = (Paradigm.AFT_AC, Paradigm.AFT_NA, Paradigm.RAFT)
    families: tuple[DistributionFamily, ...] = tuple(DistributionFamily)
    fix_shape: float | None = None
    age_transform: str = "identity"
    n_jobs: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "paradigms", tuple(Paradigm.coerce(p) for p in self.paradigms))
        object.__setattr__(self, "families", tuple(DistributionFamily.coerce(f) for f in self.families))
        if self.n_reps < 1:
            raise ValueError("n_reps must be at least 1")
        if not 0 < self.split_fraction < 1:
            raise ValueError("split_fraction must lie in (0, 1)")
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError("seed must be an unsigned 64-bit integer")
        if not self.paradigms or not self.families:
            raise ValueError("at least one paradigm and one family are required")


@dataclass
class BrierReport:
    """Brier scores per (family, paradigm) cell and replicate.

    ``per_rep_scores[(family, paradigm)]`` holds one value per replicate, NaN where
    the fit failed or the cell is unsupported (rph with non-Weibull families).
    """

    families: tuple[DistributionFamily, ...]
    paradigms: tuple[Paradigm, ...]
    per_rep_scores: dict
    metadata: dict = field(default_factory=dict)

    def n_successful(self, family, paradigm) -> int:
        return int(np.sum(np.isfinite(self.per_rep_scores[(family, paradigm)])))

    def mean(self, family, paradigm):
        """Mean over successful replicates, or None for a cell without any."""
        scores = self.per_rep_scores[(DistributionFamily.coerce(family), Paradigm.coerce(paradigm))]
        ok = scores[np.isfinite(scores)]
        return float(np.mean(ok)) if ok.size else None

    def sd(self, family, paradigm):
        scores = self.per_rep_scores[(DistributionFamily.coerce(family), Paradigm.coerce(paradigm))]
        ok = scores[np.isfinite(scores)]
        return float(np.std(ok, ddof=1)) if ok.size > 1 else None

    @property
    def mean_score(self) -> dict:
        return {key: self.mean(*key) for key in self.per_rep_scores}

    def table(self) -> str:
        """Rows are families and columns paradigms; failed cells print as ``--``."""
        width = 12
        lines = ["baseline".ljust(width) + "".join(p.value.upper().rjust(width) for p in self.paradigms)]
        for f in self.families:
            cells = []
            for p in self.paradigms:
                m = self.mean(f, p)
                cells.append(("--" if m is None else f"{m:.4f}").rjust(width))
            lines.append(f.value.ljust(width) + "".join(cells))
        return "\n".join(lines)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["family", "paradigm", "mean", "sd", "n_successful_reps"])
            for f in self.families:
                for p in self.paradigms:
                    m, s = self.mean(f, p), self.sd(f, p)
                    writer.writerow(
                        [
                            f.value,
                            p.value,
                            "" if m is None else format(m, ".17g"),
                            "" if s is None else format(s, ".17g"),
                            self.n_successful(f, p),
                        ]
                    )

    def to_dict(self) -> dict:
        cells = []
        for f in self.families:
            for p in self.paradigms:
                scores = self.per_rep_scores[(f, p)]
                cells.append(
                    {
                        "family": f.value,
                        "paradigm": p.value,
                        "mean": self.mean(f, p),
                        "sd": self.sd(f, p),
                        "n_successful_reps": self.n_successful(f, p),
                        "per_rep": [None if not np.isfinite(v) else float(v) for v in scores],
                    }
                )
        return {"cells": cells, "metadata": self.metadata}

    def to_json(self, path, extra=None):
        doc = self.to_dict()
        if extra:
            doc.update(extra)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)


def split_cohort(cohort: Cohort, fraction: float, rng: np.random.Generator, max_resamples: int = 1000):
    """Random split with ``ceil(n * fraction)`` training subjects and an event in each half.

    Returns
    -------
    train_idx, valid_idx : ndarray
    resamples : int
        Number of rejected draws.
    """
    n = len(cohort)
    n_train = math.ceil(n * fraction)
    if n_train >= n:
        raise ValueError("split leaves no validation subjects")
    for resamples in range(max_resamples):
        perm = rng.permutation(n)
        tr, va = np.sort(perm[:n_train]), np.sort(perm[n_train:])
        if cohort.event[tr].any() and cohort.event[va].any():
            return tr, va, resamples
    raise ValueError(f"no split with events in both halves after {max_resamples} draws")


def _run_rep(cohort, config, rep, seed_seq):
    rng = np.random.default_rng(seed_seq)
    tr_idx, va_idx, resamples = split_cohort(cohort, config.split_fraction, rng)
    if resamples:
        logger.info("rep %d: %d split resamples", rep, resamples)
    training, validation = cohort.subset(tr_idx), cohort.subset(va_idx)
    scores, failures, max_times = {}, [], {}
    for f in config.families:
        for p in config.paradigms:
            key = (f, p)
            if p is Paradigm.RPH and f is not DistributionFamily.WEIBULL:
                scores[key] = np.nan
                continue
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", ConvergenceWarning)
                    model = train(
                        training, p, f, fix_shape=config.fix_shape, age_transform=config.age_transform
                    )
                if not model.fit.converged:
                    raise RaftSurvError(f"fit did not converge (|grad|={model.fit.grad_norm:.3g})")
                scores[key] = brier_score(model, validation)
            except (RaftSurvError, ValueError, FloatingPointError) as exc:
                scores[key] = np.nan
                failures.append({"rep": rep, "family": f.value, "paradigm": p.value, "error": str(exc)})
    for age_scale in (False, True):
        exit_time = validation.exit_age if age_scale else validation.followup
        max_times["age" if age_scale else "followup"] = int(math.floor(np.max(exit_time)))
    return {
        "scores": scores,
        "failures": failures,
        "resamples": resamples,
        "max_time": max_times,
        "n_train_events": training.n_events,
        "n_valid_events": validation.n_events,
    }


def run_evaluation(cohort, config: BrierConfig | None = None) -> BrierReport:
    """Train every (paradigm, family) cell on random halves and score on the rest.

    Subjects are sorted by id before splitting, so the result depends on the seed
    and the ids but not on row order. Replicate ``r`` draws its split from the
    ``r``-th child of ``numpy.random.SeedSequence(seed)``; replicates may run in
    parallel (``config.n_jobs``) and are merged by index.
    """
    config = config or BrierConfig()
    cohort = as_cohort(cohort).sorted_by_id()
    children = np.random.SeedSequence(int(config.seed)).spawn(config.n_reps)
    if config.n_jobs in (None, 1):
        reps = [_run_rep(cohort, config, r, ss) for r, ss in enumerate(children)]
    else:
        reps = Parallel(n_jobs=config.n_jobs)(delayed(_run_rep)(cohort, config, r, ss) for r, ss in enumerate(children))

    per_rep = {
        (f, p): np.array([rep["scores"][(f, p)] for rep in reps], dtype=float)
        for f in config.families
        for p in config.paradigms
    }
    failures = [fail for rep in reps for fail in rep["failures"]]
    for fail in failures:
        logger.warning("rep %(rep)d %(family)s/%(paradigm)s excluded: %(error)s", fail)
    metadata = {
        "seed": int(config.seed),
        "n_reps": config.n_reps,
        "split_fraction": config.split_fraction,
        "cohort_size": len(cohort),
        "n_events": cohort.n_events,
        "split_resamples": [rep["resamples"] for rep in reps],
        "max_time": [rep["max_time"] for rep in reps],
        "failures": failures,
    }
    return BrierReport(
        families=config.families, paradigms=config.paradigms, per_rep_scores=per_rep, metadata=metadata
    )
