"""End-to-end acceptance checks; each prints one PASS/FAIL line with its measured value.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines as they happen;
they are also repeated in the terminal summary.
"""

import json
import math
import time
import warnings
from pathlib import Path

import numpy as np
from conftest import hand_model, record_acceptance
from sklearn.exceptions import ConvergenceWarning

from raftsurv import dist
from raftsurv.cli import main as cli_main
from raftsurv.coherence import calibrate_wilson_shape, claim_scan, rescale_time
from raftsurv.dist import ParamSet
from raftsurv.evaluate import BrierConfig, brier_score, run_evaluation
from raftsurv.paradigms import Cohort, train
from raftsurv.residualize import fit_stage1
from raftsurv.simdata import GeneratorConfig, generate_cohort, read_generator_config
from raftsurv.survreg import SurvivalData, fit, grad_loglik, loglik

AGE_TREND_CONFIG = Path(__file__).resolve().parents[1] / "configs" / "age_trend_cohort.cfg"
FAMILIES = ("weibull", "lognormal", "loglogistic")


def test_wilson_paradox(tmp_path, capsys):
    start = time.perf_counter()
    cal = calibrate_wilson_shape()
    out = tmp_path / "wilson.json"
    rc = cli_main(["coherence", "--wilson", "--ages", "50,55", "--out", str(out)])
    elapsed = time.perf_counter() - start
    printed = capsys.readouterr().out
    doc = json.loads(out.read_text())
    ok = (
        abs(cal.p_50_75 - 0.147) <= 0.002
        and abs(cal.p_55_75 - 0.159) <= 0.002
        and rc == 0
        and not all(doc["lower_ok"])
        and "lower inequality" in printed
        and elapsed < 1.0
    )
    record_acceptance(
        "Wilson paradox reproduction",
        ok,
        f"P(50->75)={cal.p_50_75:.4f}, P(55->75)={cal.p_55_75:.4f}, lower violated={not all(doc['lower_ok'])}, {elapsed:.3f}s",
    )
    assert ok


def test_claim_suite():
    betas = (-0.2, -0.05, 0.0, 0.05, 0.2)
    start = time.perf_counter()
    failures = []
    for form in ("aft", "ph"):
        for transform in ("identity", "log1p"):
            report = claim_scan(
                form, transform, beta_grid=betas, age_grid=range(1, 81), rescale_factors=(1e-3, 1.0, 1e3)
            )
            if report.has_violation(0.0):
                failures.append(f"{form}/{transform}: beta=0 violated")
            failures += [f"{form}/{transform}: beta={b} clean" for b in betas if b != 0 and not report.has_violation(b)]
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 10.0
    record_acceptance("Claim suite: only beta = 0 is coherent", ok, "; ".join(failures) or f"4 scans in {elapsed:.3f}s")
    assert ok


def test_brier_ordering_on_synthetic_cohort():
    cohort = generate_cohort(read_generator_config(AGE_TREND_CONFIG))
    start = time.perf_counter()
    report = run_evaluation(cohort, BrierConfig(n_reps=100, seed=1))
    elapsed = time.perf_counter() - start
    means = {f: {p: report.mean(f, p) for p in ("aft-ac", "aft-na", "raft")} for f in FAMILIES}
    ordered = all(m["raft"] is not None and m["raft"] < m["aft-ac"] < m["aft-na"] for m in means.values())
    raft = np.array([means[f]["raft"] for f in FAMILIES])
    spread = (raft.max() - raft.min()) / raft.mean()
    ok = ordered and spread < 0.25 and elapsed < 600
    detail = ", ".join(f"{f} {m['aft-ac']:.4f}/{m['aft-na']:.4f}/{m['raft']:.4f}" for f, m in means.items())
    record_acceptance(
        "Brier ordering RAFT < AFT-AC < AFT-NA",
        ok,
        f"AC/NA/RAFT: {detail}; RAFT spread {100 * spread:.2f}% of mean; {elapsed:.1f}s",
    )
    assert ok


def test_oracle_equivalences():
    checks = {}
    # (a) exponential closed forms
    t = np.array([1.0, 2.0, 3.0, 0.7, 5.5])
    d = np.array([1, 1, 0, 1, 0], bool)
    res = fit(SurvivalData(exit=t, event=d), "weibull", fix_shape=1.0)
    checks["a"] = abs(math.exp(res.coefficients[0]) - t.sum() / d.sum()) < 1e-8
    # (b) stage-1 OLS against the hand solution
    model, resid = fit_stage1([1, 2, 3], [1, 2, 4])
    checks["b"] = (
        abs(model.slope[0] - 1.5) < 1e-10
        and abs(model.intercept[0] + 2 / 3) < 1e-10
        and np.max(np.abs(resid[:, 0] - [1 / 6, -1 / 3, 1 / 6])) < 1e-10
    )
    # (c) Weibull AFT and PH are one model
    cohort = generate_cohort(read_generator_config(AGE_TREND_CONFIG))
    raft, rph = train(cohort, "raft", "weibull"), train(cohort, "rph", "weibull")
    dll = abs(raft.fit.max_loglik - rph.fit.max_loglik)
    dbeta = np.max(np.abs(rph.fit.coefficients + raft.fit.shape * raft.fit.coefficients))
    checks["c"] = dll < 1e-6 and dbeta < 1e-4
    # (d) rescaling time shifts only the intercept
    k = 12.0
    data = SurvivalData(
        exit=cohort.exit_age, event=cohort.event, X=np.column_stack([cohort.X, cohort.Z]), entry=cohort.entry_age
    )
    base, scaled = fit(data, "lognormal"), fit(data.rescaled(k), "lognormal")
    shift = scaled.coefficients[0] - base.coefficients[0]
    rest = np.max(np.abs(scaled.coefficients[1:] - base.coefficients[1:]))
    via_helper = np.max(np.abs(rescale_time(base, k).coefficients - scaled.coefficients))
    checks["d"] = abs(shift - math.log(k)) < 1e-6 and rest < 1e-6 and via_helper < 1e-6
    ok = all(checks.values())
    record_acceptance(
        "Oracle equivalences",
        ok,
        f"(a) {checks['a']} (b) {checks['b']} (c) dll={dll:.2e} dbeta={dbeta:.2e} "
        f"(d) shift-log k={abs(shift - math.log(k)):.2e} others={rest:.2e}",
    )
    assert ok


def _fd_gradient(f, x, h=1e-6):
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h * max(1.0, abs(x[i]))
        g[i] = (f(x + e) - f(x - e)) / (2 * e[i])
    return g


def _gradient_check(rng):
    cohort = generate_cohort(read_generator_config(AGE_TREND_CONFIG)).subset(np.arange(300))
    data = SurvivalData(
        exit=cohort.exit_age,
        event=cohort.event,
        X=np.column_stack([cohort.X, cohort.Z - cohort.Z.mean(0)]),
        entry=cohort.entry_age,
    )
    worst = 0.0
    cells = [(f, "aft") for f in FAMILIES] + [("weibull", "ph")]
    for family, form in cells:
        for _ in range(50):
            x = np.concatenate([[rng.normal(4.5, 0.2)], rng.normal(0, 0.05, 3), [rng.normal(0.5, 0.2)]])
            if form == "ph":
                x[:-1] *= -np.exp(x[-1])
            g = grad_loglik(x, data, family, form)
            fd = _fd_gradient(lambda y: loglik(y, data, family, form), x)
            worst = max(worst, np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1.0)))
    return worst


def _round_trip_check(rng):
    worst = 0.0
    for family in FAMILIES:
        for _ in range(200):
            p = ParamSet(float(np.exp(rng.normal(0, 1.5))), float(np.exp(rng.normal(0, 0.5))))
            q = rng.uniform(1e-6, 1 - 1e-6)
            t = dist.quantile(q, family, p)
            worst = max(
                worst, abs(dist.cdf(t, family, p) - q), abs(dist.quantile(dist.cdf(t, family, p), family, p) - t) / t
            )
    return worst


def _recovery_check(n_seeds=100):
    base = read_generator_config(AGE_TREND_CONFIG).to_dict()
    truth = np.array([base["beta0"], *base["beta_x"], *base["beta_z"], math.log(base["shape"])])
    hits = 0
    for seed in range(n_seeds):
        cfg = GeneratorConfig(**{**base, "n": 2000, "seed": 1000 + seed})
        with warnings.catch_warnings():
            warnings.simplefilter("error", ConvergenceWarning)
            model = train(generate_cohort(cfg), "raft", "weibull")
        est = model.fit.params
        hits += bool(np.all(np.abs(est - truth) <= 3 * model.fit.std_errors))
    return hits / n_seeds


def test_numerical_hygiene():
    rng = np.random.default_rng(5)
    grad_err = _gradient_check(rng)
    rt_err = _round_trip_check(rng)
    coverage = _recovery_check()
    ok = grad_err < 1e-5 and rt_err < 1e-8 and coverage >= 0.95
    record_acceptance(
        "Numerical hygiene",
        ok,
        f"max grad rel err {grad_err:.2e}, quantile/cdf round trip {rt_err:.2e}, "
        f"all parameters within 3 SE in {100 * coverage:.0f}% of seeds",
    )
    assert ok


def test_brier_hand_oracle():
    # A: event 1.6 years after entry, scored at years 1..3 with o = 0, 1, 1
    # B: censored after 2.3 years, scored at years 1..2 with o = 0, 0
    model = hand_model("aft-ac", [math.log(4.0), 0.0], 1.0)
    validation = Cohort(entry_age=[40.0, 52.0], X=None, Z=None, followup=[1.6, 2.3], event=[True, False])
    g1, g2, g3 = (1 - math.exp(-j / 4) for j in (1, 2, 3))
    hand = (g1**2 + (g2 - 1) ** 2 + (g3 - 1) ** 2 + g1**2 + g2**2) / 5
    got = brier_score(model, validation, max_time=3)
    ok = got == hand
    record_acceptance("Brier hand oracle", ok, f"brier_score={got!r}, hand sum / 5={hand!r}")
    assert ok
