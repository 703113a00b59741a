import math

import numpy as np
import pytest
from conftest import hand_model, small_config

from raftsurv.dist import DistributionFamily
from raftsurv.evaluate import BrierConfig, BrierReport, brier_grid, brier_score, run_evaluation, split_cohort
from raftsurv.exceptions import EmptyGridError
from raftsurv.paradigms import Cohort, Paradigm
from raftsurv.simdata import generate_cohort


def _two_subjects():
    # A has the event 1.6 years after entry; B is censored after 2.3 years
    return Cohort(
        entry_age=[40.0, 52.0],
        X=None,
        Z=None,
        followup=[1.6, 2.3],
        event=[True, False],
        ids=["A", "B"],
    )


def test_hand_oracle():
    model = hand_model("aft-ac", [math.log(4.0), 0.0], 1.0)
    g = [1 - math.exp(-j / 4) for j in (1, 2, 3)]
    # A: years 1..3 with o = 0, 1, 1; B: years 1..2 with o = 0, 0
    hand = (g[0] - 0) ** 2 + (g[1] - 1) ** 2 + (g[2] - 1) ** 2 + (g[0] - 0) ** 2 + (g[1] - 0) ** 2
    assert brier_score(model, _two_subjects(), max_time=3) == hand / 5


def test_grid_layout():
    grid = brier_grid(_two_subjects(), age_scale=False, max_time=3)
    np.testing.assert_array_equal(grid.subject, [0, 0, 0, 1, 1])
    np.testing.assert_array_equal(grid.year, [1, 2, 3, 1, 2])
    np.testing.assert_array_equal(grid.observed, [0, 1, 1, 0, 0])


def test_default_max_time_is_floored_max_exit():
    grid = brier_grid(_two_subjects(), age_scale=False)
    assert grid.max_time == 2
    np.testing.assert_array_equal(grid.year, [1, 2, 1, 2])


def test_age_scale_grid_starts_at_floored_entry_age():
    grid = brier_grid(_two_subjects(), age_scale=True)
    assert grid.max_time == 54
    np.testing.assert_array_equal(grid.year[grid.subject == 0], np.arange(40, 55))
    np.testing.assert_array_equal(grid.year[grid.subject == 1], [52, 53, 54])
    np.testing.assert_allclose(grid.horizon[grid.subject == 1], [0.0, 1.0, 2.0])
    # event at age 41.6 is first counted at year 42
    obs = grid.observed[grid.subject == 0]
    assert obs[:2].tolist() == [0, 0] and obs[2:].all()


def test_perfect_predictor_scores_zero(monkeypatch):
    import raftsurv.evaluate as ev

    cohort = _two_subjects()
    grid = brier_grid(cohort, False, 3)
    monkeypatch.setattr(ev, "predict_event_prob", lambda model, sub, h: grid.observed.copy())
    assert ev.brier_score(hand_model("aft-ac", [0, 0], 1.0), cohort, max_time=3) == 0.0


def test_constant_half_scores_quarter(monkeypatch):
    import raftsurv.evaluate as ev

    monkeypatch.setattr(ev, "predict_event_prob", lambda model, sub, h: np.full(np.shape(h), 0.5))
    assert ev.brier_score(hand_model("aft-ac", [0, 0], 1.0), _two_subjects(), max_time=3) == 0.25


def test_empty_validation_set():
    with pytest.raises(EmptyGridError):
        brier_score(hand_model("aft-ac", [0, 0], 1.0), _two_subjects(), max_time=0)


def test_split_sizes_on_odd_n():
    cohort = generate_cohort(small_config(n=101))
    tr, va, _ = split_cohort(cohort, 0.5, np.random.default_rng(0))
    assert tr.size == 51 and va.size == 50
    assert np.intersect1d(tr, va).size == 0
    assert cohort.event[tr].any() and cohort.event[va].any()


@pytest.fixture(scope="module")
def eval_cohort():
    return generate_cohort(
        small_config(
            n=1200,
            trend_intercept=(100.0, 3.0),
            trend_slope=(1.5, 0.05),
            noise_sd=(12.0, 0.8),
            beta0=4.5,
            beta_z=(-0.025, -0.35),
            seed=3,
        )
    )


def test_single_rep_reproducible(eval_cohort):
    cfg = BrierConfig(n_reps=1, seed=5)
    a, b = run_evaluation(eval_cohort, cfg), run_evaluation(eval_cohort, cfg)
    for key in a.per_rep_scores:
        np.testing.assert_array_equal(a.per_rep_scores[key], b.per_rep_scores[key])
    # row order of the input does not matter because subjects are sorted by id first
    perm = np.random.default_rng(1).permutation(len(eval_cohort))
    c = run_evaluation(eval_cohort.subset(perm), cfg)
    for key in a.per_rep_scores:
        np.testing.assert_array_equal(a.per_rep_scores[key], c.per_rep_scores[key])


def test_parallel_matches_serial(eval_cohort):
    serial = run_evaluation(eval_cohort, BrierConfig(n_reps=2, seed=9, families=("weibull",)))
    parallel = run_evaluation(eval_cohort, BrierConfig(n_reps=2, seed=9, families=("weibull",), n_jobs=2))
    for key in serial.per_rep_scores:
        np.testing.assert_array_equal(serial.per_rep_scores[key], parallel.per_rep_scores[key])


def test_report_shape_and_outputs(eval_cohort, tmp_path):
    cfg = BrierConfig(n_reps=2, seed=2, paradigms=("aft-ac", "aft-na", "raft", "rph"))
    report = run_evaluation(eval_cohort, cfg)
    assert len(report.per_rep_scores) == 12
    assert report.mean("lognormal", "rph") is None
    assert report.n_successful(DistributionFamily.WEIBULL, Paradigm.RPH) == 2
    for f in ("weibull", "lognormal", "loglogistic"):
        assert report.mean(f, "raft") < report.mean(f, "aft-na")
    lines = report.table().splitlines()
    assert len(lines) == 4 and "--" in lines[2]
    report.to_csv(tmp_path / "r.csv")
    rows = (tmp_path / "r.csv").read_text().splitlines()
    assert rows[0] == "family,paradigm,mean,sd,n_successful_reps" and len(rows) == 13
    report.to_json(tmp_path / "r.json")
    assert isinstance(report, BrierReport)


def test_config_validation():
    with pytest.raises(ValueError):
        BrierConfig(n_reps=0)
    with pytest.raises(ValueError):
        BrierConfig(split_fraction=1.0)
    with pytest.raises(ValueError):
        BrierConfig(paradigms=("cox",))
