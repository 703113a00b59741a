"""Command line driver: ``raftsurv {simulate,fit,predict,evaluate,coherence}``.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical
non-convergence, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .coherence import WILSON_PROFILE, calibrate_wilson_shape, check_inequalities
from .dist import DistributionFamily
from .evaluate import BrierConfig, run_evaluation
from .exceptions import CohortFormatError, RaftSurvError
from .paradigms import Paradigm, TrainedModel, median_time_to_event, predict_event_prob, train
from .simdata import generate_cohort, read_cohort, read_generator_config, write_cohort

logger = logging.getLogger("raftsurv")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NONCONVERGENCE = 3
EXIT_IO = 4


class CLIError(Exception):
    def __init__(self, message, code=EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _manifest(args, **config):
    inputs = {k: str(getattr(args, k)) for k in ("config", "cohort", "model") if getattr(args, k, None)}
    return {
        "subcommand": args.command,
        "inputs": inputs,
        "config": config,
        "seed": config.get("seed"),
        "version": __version__,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def _write_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _sidecar(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".manifest.json")


def parse_ages(text: str) -> np.ndarray:
    """``a:b:step`` (inclusive of ``b``) or a comma-separated list."""
    text = text.strip()
    try:
        if ":" in text:
            parts = [float(p) for p in text.split(":")]
            if len(parts) == 2:
                parts.append(1.0)
            if len(parts) != 3 or parts[2] <= 0:
                raise ValueError
            start, stop, step = parts
            n = int(np.floor((stop - start) / step + 1e-9)) + 1
            return start + step * np.arange(max(n, 0))
        return np.array([float(p) for p in text.split(",") if p.strip()])
    except ValueError:
        raise CLIError(f"cannot parse age grid {text!r}; use a:b:step or a comma list") from None


def _load_model(path) -> TrainedModel:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        return TrainedModel.from_dict(doc)
    except (KeyError, ValueError) as exc:
        raise CLIError(f"{path}: not a valid model document ({exc})") from exc


def cmd_simulate(args) -> int:
    config = read_generator_config(args.config)
    if args.seed is not None:
        config = type(config)(**{**config.to_dict(), "seed": args.seed})
    cohort = generate_cohort(config)
    write_cohort(cohort, args.out)
    _write_json(_sidecar(args.out), _manifest(args, **config.to_dict()))
    print(f"wrote {len(cohort)} subjects ({cohort.n_events} events) to {args.out}")
    return EXIT_OK


def _summary(model: TrainedModel) -> str:
    fit = model.fit
    lines = [
        f"paradigm {model.paradigm.value}  family {model.family.value}  "
        f"converged {fit.converged} after {fit.iterations} iterations",
        f"log-likelihood {fit.max_loglik:.6f}  shape {fit.shape:.6g}",
        f"{'coefficient':<20}{'estimate':>14}{'std.err':>14}",
    ]
    se = fit.coef_std_errors
    for i, name in enumerate(fit.coef_names):
        s = "n/a" if se is None else f"{se[i]:.6g}"
        lines.append(f"{name:<20}{fit.coefficients[i]:>14.6g}{s:>14}")
    if model.stage1 is not None:
        lines.append("stage 1 age trends:")
        for name, b0, b1 in zip(model.stage1.names, model.stage1.intercept, model.stage1.slope):
            lines.append(f"  {name} = {b0:.6g} + {b1:.6g} * age")
    return "\n".join(lines)


def cmd_fit(args) -> int:
    cohort = read_cohort(args.cohort)
    model = train(
        cohort,
        args.paradigm,
        args.family,
        age_transform=args.age_transform,
        fix_shape=args.fix_shape,
        max_iter=args.max_iter,
    )
    doc = model.to_dict()
    doc["manifest"] = _manifest(
        args, paradigm=model.paradigm.value, family=model.family.value,
        age_transform=args.age_transform, fix_shape=args.fix_shape, max_iter=args.max_iter,
    )
    _write_json(args.out, doc)
    print(_summary(model))
    if not model.fit.converged:
        print(f"error: fit did not converge; model written to {args.out} with converged=false", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    return EXIT_OK


def cmd_predict(args) -> int:
    model = _load_model(args.model)
    cohort = read_cohort(args.cohort)
    prob = predict_event_prob(model, cohort, args.horizon)
    try:
        mte = median_time_to_event(model, cohort)
    except OverflowError as exc:
        logger.warning("median unavailable: %s", exc)
        mte = np.full(len(cohort), np.nan)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "entry_age", f"event_prob_{args.horizon:g}y", "median_time_to_event"])
        for i in range(len(cohort)):
            writer.writerow([cohort.ids[i], format(cohort.entry_age[i], ".17g"), format(prob[i], ".17g"), format(mte[i], ".17g")])
    _write_json(_sidecar(args.out), _manifest(args, horizon=args.horizon))
    print(f"wrote predictions for {len(cohort)} subjects to {args.out}")
    return EXIT_OK


def _csv_list(text, coerce):
    return tuple(coerce(v) for v in text.split(",") if v.strip())


def cmd_evaluate(args) -> int:
    cohort = read_cohort(args.cohort)
    if cohort.n_events == 0:
        raise CLIError("cohort has no events; nothing to evaluate (degenerate data)")
    config = BrierConfig(
        n_reps=args.reps,
        split_fraction=args.split_fraction,
        seed=args.seed,
        paradigms=_csv_list(args.paradigms, Paradigm.coerce),
        families=_csv_list(args.families, DistributionFamily.coerce),
        fix_shape=args.fix_shape,
        n_jobs=args.jobs,
    )
    report = run_evaluation(cohort, config)
    out = Path(args.out)
    csv_path, json_path = out.with_suffix(".csv"), out.with_suffix(".json")
    manifest = _manifest(
        args,
        n_reps=config.n_reps,
        split_fraction=config.split_fraction,
        seed=int(config.seed),
        paradigms=[p.value for p in config.paradigms],
        families=[f.value for f in config.families],
        fix_shape=config.fix_shape,
    )
    report.to_csv(csv_path)
    report.to_json(json_path, extra={"manifest": manifest})
    _write_json(_sidecar(csv_path), manifest)
    print("Mean Brier scores")
    print(report.table())
    n_failed = len(report.metadata["failures"])
    if n_failed:
        print(f"{n_failed} fits excluded; see {json_path}", file=sys.stderr)
    if all(m is None for m in report.mean_score.values()):
        print("error: every cell failed", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    return EXIT_OK


def cmd_coherence(args) -> int:
    if args.ages is not None:
        ages = parse_ages(args.ages)
    else:
        ages = np.array([50.0, 55.0]) if args.wilson else parse_ages("30:90:1")
    if ages.size == 0:
        raise CLIError("age grid is empty")
    doc = {}
    if args.wilson:
        cal = calibrate_wilson_shape()
        if not cal.success:
            print(f"warning: Wilson calibration failed: {cal.message}", file=sys.stderr)
        model = cal.model
        target = 75.0 if args.target_age is None else args.target_age
        doc["calibration"] = cal.to_dict()
        doc["profile"] = dict(WILSON_PROFILE)
        print(
            f"Wilson calibration: shape {cal.model.shape:.4f}, {cal.model.time_unit:.2f} time units per year "
            f"(residual {cal.residual:.2g})"
        )
        print(f"P(event between age 50 and 75) = {cal.p_50_75:.3f}")
        print(f"P(event between age 55 and 75) = {cal.p_55_75:.3f}")
    else:
        if args.model is None:
            raise CLIError("coherence needs --model PATH or --wilson")
        model = _load_model(args.model)
        target = args.target_age
    report = check_inequalities(model, ages, target_age=target)
    doc.update(report.to_dict())
    doc["manifest"] = _manifest(args, ages=ages.tolist(), wilson=bool(args.wilson), target_age=target)
    print(report.format_table())
    if report.upper_violated or report.lower_violated:
        kinds = [k for k, v in (("upper", report.upper_violated), ("lower", report.lower_violated)) if v]
        print(f"violations found: {', '.join(kinds)} inequality")
    else:
        print("no violations")
    if args.out:
        _write_json(args.out, doc)
        txt = Path(args.out).with_suffix(".txt")
        txt.write_text(report.format_table() + "\n", encoding="utf-8")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="raftsurv", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic cohort")
    p.add_argument("--config", required=True, help="key = value generator config file")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, help="override the config seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit one paradigm and write the model as JSON")
    p.add_argument("--cohort", required=True)
    p.add_argument("--paradigm", required=True, choices=[m.value for m in Paradigm])
    p.add_argument("--family", required=True, choices=[m.value for m in DistributionFamily])
    p.add_argument("--out", required=True)
    p.add_argument("--age-transform", default="identity", choices=["identity", "log1p"])
    p.add_argument("--fix-shape", type=float)
    p.add_argument("--max-iter", type=int, default=200)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="event probabilities and medians for a cohort")
    p.add_argument("--model", required=True)
    p.add_argument("--cohort", required=True)
    p.add_argument("--horizon", type=float, required=True, help="years since entry")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="repeated-split Brier score table")
    p.add_argument("--cohort", required=True)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split-fraction", type=float, default=0.5)
    p.add_argument("--paradigms", default="aft-ac,aft-na,raft")
    p.add_argument("--families", default="weibull,lognormal,loglogistic")
    p.add_argument("--fix-shape", type=float)
    p.add_argument("--jobs", type=int, help="parallel replicates")
    p.add_argument("--out", required=True, help="output prefix; writes PREFIX.csv and PREFIX.json")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("coherence", help="audit the time-origin inequalities")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--model")
    src.add_argument("--wilson", action="store_true", help="use the calibrated Wilson risk equation")
    p.add_argument("--ages", help="a:b:step or comma list (default 30:90:1; 50,55 with --wilson)")
    p.add_argument("--target-age", type=float, help="also report P(event by this age)")
    p.add_argument("--out", help="JSON report path; an aligned text table is written alongside")
    p.set_defaults(func=cmd_coherence)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (CohortFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (RaftSurvError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def run():
    sys.exit(main())
