"""Command-line front end.

Subcommands: bound (one-off UCBs), calibrate (fixed-sequence calibration
on loss tables), experiment (Monte-Carlo coverage harness), etsc (screen /
calibrate / evaluate early-exit stopping rules).

Exit codes: 0 success with a selection, 1 usage error, 2 data error,
3 abstain. No command mutates its inputs.
"""

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import __version__
from .bounds import BinomialCount, BoundedSample, UcbSpec, clopper_pearson_ucb, ucb
from .etsc import (
    EtscRiskSpec,
    STAGE2_MODES,
    candidate_screening,
    check_disjoint,
    evaluate_rule,
    load_dataset,
    stage2_calibrate,
    thresholds_from_json,
    thresholds_to_json,
)
from .ppi import BudgetSplit, PowerTuning, SemiSupervisedLosses, naive_augmented_calibrate, ss_binary_calibrate, ss_general_calibrate
from .rcps import RiskSpec, fixed_sequence_calibrate, load_loss_table
from .sim import METHODS, ScenarioConfig, config_hash, run_coverage_experiment, run_etsc_experiment

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_ABSTAIN = 3

# conventional experimental defaults; always overridable
CALIBRATE_DEFAULTS = {"alpha": 0.15, "delta": 0.1, "delta1": 0.01, "delta2": 0.09}
ETSC_DEFAULTS = {"alpha": 0.1, "delta": 0.01, "delta1": 0.001, "delta2": 0.009}

_BOUND_METHODS = {
    "hoeffding": "hoeffding",
    "cp": "clopper_pearson",
    "clopper-pearson": "clopper_pearson",
    "wsr": "wsr",
    "wsr-scaled": "wsr_scaled",
    "clt": "clt",
}


class DataError(Exception):
    pass


def _default_seed():
    raw = os.environ.get("RISKCAL_SEED")
    return int(raw) if raw else 0


def _provenance(seed, payload):
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    import hashlib

    return {
        "tool_version": __version__,
        "config_hash": hashlib.sha256(blob).hexdigest()[:16],
        "seed": seed,
    }


def _emit(obj, output):
    text = json.dumps(obj, indent=2)
    if output:
        with open(output, "w") as fh:
            fh.write(text + "\n")
    print(text)


def _read_values(path):
    try:
        with open(path) as fh:
            values = [float(line.strip()) for line in fh if line.strip()]
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read values from {path}: {exc}")
    if not values:
        raise DataError(f"{path}: no values")
    return np.array(values)


def cmd_bound(args):
    method = _BOUND_METHODS[args.method]
    if method == "clopper_pearson" and args.n is not None:
        if args.k is None:
            raise SystemExit(EXIT_USAGE)
        count = BinomialCount(trials=args.n, failures=args.k)
        value = clopper_pearson_ucb(count, args.delta)
        n = args.n
        support = [0.0, 1.0]
    else:
        if args.input is None:
            print("error: --input is required unless using --n/--k with cp", file=sys.stderr)
            raise SystemExit(EXIT_USAGE)
        values = _read_values(args.input)
        sample = BoundedSample(values, args.support_lo, args.support_hi)
        value = ucb(sample, UcbSpec(method, args.delta))
        n = sample.n
        support = [args.support_lo, args.support_hi]
    out = {
        "method": method,
        "delta": args.delta,
        "n": n,
        "support": support,
        "ucb": value,
    }
    if method == "clt":
        out["asymptotic"] = True
    out.update(_provenance(_default_seed(), out))
    _emit(out, args.output)
    return EXIT_OK


def _load_ss(args):
    for name in ("labeled_true", "labeled_imputed", "unlabeled_imputed"):
        if getattr(args, name) is None:
            print(f"error: --{name.replace('_', '-')} is required for this mode", file=sys.stderr)
            raise SystemExit(EXIT_USAGE)
    try:
        lt = load_loss_table(args.labeled_true)
        li = load_loss_table(args.labeled_imputed)
        ui = load_loss_table(args.unlabeled_imputed)
        return SemiSupervisedLosses(lt, li, ui)
    except ValueError as exc:
        raise DataError(str(exc))


def cmd_calibrate(args):
    spec = RiskSpec(args.alpha, args.delta)
    if args.mode == "labeled":
        if args.losses is None:
            print("error: --losses is required for labeled mode", file=sys.stderr)
            raise SystemExit(EXIT_USAGE)
        try:
            table = load_loss_table(args.losses)
        except ValueError as exc:
            raise DataError(str(exc))
        outcome = fixed_sequence_calibrate(table, spec, UcbSpec(_BOUND_METHODS[args.bound], args.delta))
    elif args.mode == "ss-general":
        data = _load_ss(args)
        tuning = PowerTuning(args.lambda_mode, tuning_fraction=args.tuning_fraction)
        outcome = ss_general_calibrate(data, spec, _BOUND_METHODS[args.bound], tuning=tuning)
    elif args.mode == "ss-binary":
        split = BudgetSplit(args.delta1, args.delta2)
        split.check_total(args.delta)
        data = _load_ss(args)
        outcome = ss_binary_calibrate(data, args.alpha, split)
    else:
        print(
            "WARNING: naive mode pools imputed losses without correction; "
            "its risk guarantee is INVALID and it exists only as a baseline.",
            file=sys.stderr,
        )
        data = _load_ss(args)
        outcome = naive_augmented_calibrate(data, spec)
    out = outcome.to_dict()
    out.update(_provenance(_default_seed(), out))
    _emit(out, args.output)
    return EXIT_ABSTAIN if outcome.abstained else EXIT_OK


def _load_experiment_config(path):
    try:
        with open(path, "rb") as fh:
            if path.endswith(".toml"):
                try:
                    import tomllib
                except ImportError:
                    import tomli as tomllib
                raw = tomllib.load(fh)
            else:
                raw = json.load(fh)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)
    except ValueError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)
    methods = raw.pop("methods", ["rcps_labeled_cp", "ss_binary", "ss_general_wsr"])
    trials = raw.pop("trials", 1000)
    try:
        config = ScenarioConfig(**raw)
    except (TypeError, ValueError) as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)
    return config, methods, trials


def cmd_experiment(args):
    config, methods, trials = _load_experiment_config(args.config)
    if args.trials is not None:
        trials = args.trials
    if args.seed is not None:
        config = ScenarioConfig(**{**config.to_dict(), "master_seed": args.seed})
    os.makedirs(args.output_dir, exist_ok=True)
    chash = config_hash(config)
    if config.kind == "etsc_basic":
        modes = [m for m in methods if m in STAGE2_MODES]
        if not modes:
            print("error: etsc_basic config needs stage-2 modes in `methods`", file=sys.stderr)
            raise SystemExit(EXIT_USAGE)
        report = run_etsc_experiment(config, modes, trials)
        payload = {"config": config.to_dict(), "trials": trials, "results": report}
        payload.update(_provenance(config.master_seed, config.to_dict()))
        with open(os.path.join(args.output_dir, "report.json"), "w") as fh:
            json.dump(payload, fh, indent=2)
        for mode in modes:
            print(f"{mode}: max conditional risk over trials "
                  f"{max(report[mode]['max_risk']):.4f}")
        return EXIT_OK
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        print(f"error: unknown methods {unknown}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)
    reports = run_coverage_experiment(config, methods, trials)
    payload = {
        "config": config.to_dict(),
        "trials": trials,
        "reports": {m: r.to_dict() for m, r in reports.items()},
    }
    payload.update(_provenance(config.master_seed, config.to_dict()))
    with open(os.path.join(args.output_dir, "report.json"), "w") as fh:
        json.dump(payload, fh, indent=2)
    csv_path = os.path.join(args.output_dir, "report.csv")
    fields = [
        "method",
        "config_hash",
        "trials",
        "violation_rate",
        "abstain_rate",
        "mean_true_risk",
        "std_true_risk",
        "mean_selected_index",
        "std_selected_index",
    ]
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for m in methods:
            d = reports[m].to_dict()
            writer.writerow([d[f] for f in fields])
    for m in methods:
        r = reports[m]
        print(
            f"{m}: violation_rate={r.violation_rate:.4f} "
            f"mean_true_risk={r.mean_true_risk:.4f} abstain={r.abstain_rate:.3f}"
        )
    return EXIT_OK


def _etsc_spec(args):
    split = None
    if args.delta1 is not None or args.delta2 is not None:
        if args.delta1 is None or args.delta2 is None:
            print("error: provide both --delta1 and --delta2", file=sys.stderr)
            raise SystemExit(EXIT_USAGE)
        split = BudgetSplit(args.delta1, args.delta2)
        split.check_total(args.delta)
    return EtscRiskSpec(
        alpha=args.alpha,
        delta=args.delta,
        split=split,
        screen_resolution=args.resolution,
    )


def cmd_etsc(args):
    try:
        if args.etsc_command == "screen":
            data = load_dataset(args.samples)
            spec = _etsc_spec(args)
            eta = candidate_screening(data, spec)
            out = {"thresholds": json.loads(thresholds_to_json(eta)), "alpha": args.alpha}
            out.update(_provenance(_default_seed(), out))
            _emit(out, args.output)
            return EXIT_OK
        if args.etsc_command == "calibrate":
            labeled = load_dataset(args.samples)
            unlabeled = load_dataset(args.unlabeled) if args.unlabeled else None
            if args.stage1 is not None:
                stage1 = load_dataset(args.stage1)
                try:
                    check_disjoint(stage1, labeled)
                except ValueError as exc:
                    raise DataError(str(exc))
            with open(args.candidate) as fh:
                payload = json.load(fh)
            raw = payload["thresholds"] if isinstance(payload, dict) else payload
            eta = thresholds_from_json(json.dumps(raw))
            spec = _etsc_spec(args)
            if args.mode == "binary_cp" and spec.split is None:
                spec = EtscRiskSpec(
                    alpha=args.alpha,
                    delta=args.delta,
                    split=BudgetSplit(
                        ETSC_DEFAULTS["delta1"] * args.delta / ETSC_DEFAULTS["delta"],
                        ETSC_DEFAULTS["delta2"] * args.delta / ETSC_DEFAULTS["delta"],
                    ),
                    screen_resolution=args.resolution,
                )
            q = stage2_calibrate(labeled, unlabeled, eta, spec, mode=args.mode)
            out = {
                "thresholds": json.loads(thresholds_to_json(q)),
                "mode": args.mode,
                "alpha": args.alpha,
                "delta": args.delta,
                "asymptotic": args.mode == "general_clt",
            }
            out.update(_provenance(_default_seed(), out))
            _emit(out, args.output)
            return EXIT_OK
        # evaluate
        data = load_dataset(args.samples)
        with open(args.thresholds) as fh:
            payload = json.load(fh)
        raw = payload["thresholds"] if isinstance(payload, dict) else payload
        q = thresholds_from_json(json.dumps(raw))
        report = evaluate_rule(data, q)
        report.update(_provenance(_default_seed(), report))
        _emit(report, args.output)
        return EXIT_OK
    except (OSError, KeyError) as exc:
        raise DataError(str(exc))


def build_parser():
    parser = argparse.ArgumentParser(
        prog="riskcal",
        description="Semi-supervised calibration toolkit for distribution-free risk control.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bound", help="compute a one-sided upper confidence bound")
    p.add_argument("--method", required=True, choices=sorted(_BOUND_METHODS))
    p.add_argument("--delta", type=float, default=0.1, help="error level (default 0.1)")
    p.add_argument("--input", help="text file with one value per line")
    p.add_argument("--n", type=int, help="trials (Clopper-Pearson shortcut)")
    p.add_argument("--k", type=int, help="failures (Clopper-Pearson shortcut)")
    p.add_argument("--support-lo", type=float, default=0.0)
    p.add_argument("--support-hi", type=float, default=1.0)
    p.add_argument("--output", help="also write the JSON result here")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("calibrate", help="fixed-sequence calibration on loss tables")
    p.add_argument("--mode", required=True, choices=["labeled", "ss-general", "ss-binary", "naive"])
    p.add_argument("--losses", help="loss table CSV (labeled mode)")
    p.add_argument("--labeled-true", help="labeled true-loss CSV")
    p.add_argument("--labeled-imputed", help="labeled imputed-loss CSV")
    p.add_argument("--unlabeled-imputed", help="unlabeled imputed-loss CSV")
    p.add_argument("--alpha", type=float, default=CALIBRATE_DEFAULTS["alpha"])
    p.add_argument("--delta", type=float, default=CALIBRATE_DEFAULTS["delta"])
    p.add_argument("--delta1", type=float, default=CALIBRATE_DEFAULTS["delta1"])
    p.add_argument("--delta2", type=float, default=CALIBRATE_DEFAULTS["delta2"])
    p.add_argument("--bound", default="cp", choices=sorted(_BOUND_METHODS))
    p.add_argument("--lambda-mode", default="fixed_one", choices=["fixed_one", "clt_inline", "wsr_split"])
    p.add_argument("--tuning-fraction", type=float, default=0.1)
    p.add_argument("--output", help="write the outcome JSON here")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("experiment", help="run a Monte-Carlo coverage experiment")
    p.add_argument("--config", required=True, help="scenario config (TOML or JSON)")
    p.add_argument("--trials", type=int, help="override the config's trial count")
    p.add_argument("--seed", type=int, help="override the config's master seed")
    p.add_argument("--jobs", type=int, default=1, help="reserved; output is identical for any value")
    p.add_argument("--output-dir", default=".", help="where to write report.json / report.csv")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("etsc", help="early time-series classification calibration")
    esub = p.add_subparsers(dest="etsc_command", required=True)

    def _levels(q):
        q.add_argument("--alpha", type=float, default=ETSC_DEFAULTS["alpha"])
        q.add_argument("--delta", type=float, default=ETSC_DEFAULTS["delta"])
        q.add_argument("--delta1", type=float)
        q.add_argument("--delta2", type=float)
        q.add_argument("--resolution", type=float, default=0.01)
        q.add_argument("--output")

    q = esub.add_parser("screen", help="stage-1 candidate screening")
    q.add_argument("--samples", required=True, help="stage-1 labeled samples JSON")
    _levels(q)

    q = esub.add_parser("calibrate", help="stage-2 calibration of the threshold vector")
    q.add_argument("--samples", required=True, help="stage-2 labeled samples JSON")
    q.add_argument("--unlabeled", help="unlabeled samples JSON")
    q.add_argument("--stage1", help="stage-1 samples JSON, for the disjointness check")
    q.add_argument("--candidate", required=True, help="candidate thresholds JSON from screen")
    q.add_argument("--mode", default="binary_cp", choices=list(STAGE2_MODES))
    _levels(q)

    q = esub.add_parser("evaluate", help="halt curve and conditional risk of a rule")
    q.add_argument("--samples", required=True, help="labeled samples JSON")
    q.add_argument("--thresholds", required=True, help="threshold vector JSON")
    _levels(q)

    p.set_defaults(func=cmd_etsc)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
