"""Command-line entry point: ``clfvar {train,sweep,compare,groups,duration,tune}``.

Exit codes: 0 success, 1 configuration or input error, 2 divergence.
"""

import argparse
import datetime
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from . import config as cfgmod
from .harness import avg_var_reduction, duration_study, group_study, summarize, sweep
from .reporting import fmt_float, write_csv, write_json
from .trainer import BATCH_FIELDS, EPOCH_FIELDS, train
from .tuner import TRIAL_FIELDS, run_tuning

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2


class CliError(Exception):
    pass


def _timestamp(args):
    if args.no_timestamp:
        return None
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


def _out_dir(args, exp=None):
    out = args.out or (exp.output if exp is not None else None)
    if not out:
        raise CliError("no output directory: pass --out or set 'output' in the config")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_run(run, out, config_hash, no_timestamp=False):
    stem = out / f"run_seed{run.seed}"
    write_csv(stem.with_suffix(".csv"), EPOCH_FIELDS, run.rows)
    doc = {
        "seed": run.seed,
        "task": run.task,
        "metric": run.metric,
        "final": run.final,
        "epochs_completed": len(run.rows),
        "divergent": run.divergent,
        "diagnostic": run.diagnostic,
        "config_hash": config_hash,
        "wall_time": None if no_timestamp else run.wall_time,
    }
    write_json(stem.with_suffix(".json"), doc)
    if run.batch_rows is not None:
        write_csv(out / f"run_seed{run.seed}_batches.csv", BATCH_FIELDS, run.batch_rows)


def _write_sweep(result, out, exp, args):
    for run in result.runs:
        write_run(run, out, exp.config_hash, args.no_timestamp)
    (out / "metrics.txt").write_text(
        "".join(f"{fmt_float(v)}\n" for v in result.final_metrics()), encoding="utf-8"
    )


def _sweep_seeds(args, exp):
    seeds = cfgmod.parse_seeds(args.seeds) if args.seeds else exp.seeds
    if len(seeds) < 2:
        raise CliError("a sweep needs at least two seeds")
    if len(set(seeds)) != len(seeds):
        raise CliError(f"duplicate seeds in {args.seeds or exp.seeds}")
    return seeds


def cmd_train(args):
    exp = cfgmod.load(args.config)
    data = cfgmod.build_data(exp)
    out = _out_dir(args, exp)
    run = train(exp.train, data, args.seed, log_batches=args.verbose)
    write_run(run, out, exp.config_hash, args.no_timestamp)
    if run.divergent:
        print(f"seed {run.seed}: {run.diagnostic}", file=sys.stderr)
        return EXIT_DIVERGED
    print(f"seed {run.seed}: {run.metric} = {run.final_metric:.6g}")
    return EXIT_OK


def cmd_sweep(args):
    exp = cfgmod.load(args.config)
    seeds = _sweep_seeds(args, exp)
    data = cfgmod.build_data(exp)
    out = _out_dir(args, exp)
    result = sweep(exp.train, data, seeds, args.jobs)
    _write_sweep(result, out, exp, args)
    s = exp.sections["sweep"]
    exclude = args.exclude_divergent or s["exclude_divergent"]
    if result.divergent_seeds and not exclude:
        print(f"divergent seeds {result.divergent_seeds}; rerun with --exclude-divergent", file=sys.stderr)
        return EXIT_DIVERGED
    summary = summarize(result, s["bound"], exclude)
    write_json(
        out / "summary.json",
        {
            "config_hash": exp.config_hash,
            "seeds": seeds,
            "summary": summary.to_dict(),
            "final_metrics": result.final_metrics(),
            "divergent_seeds": result.divergent_seeds,
            "generated_at": _timestamp(args),
        },
    )
    print(f"{summary.metric}: mean {summary.mean_metric:.6g}, SD {summary.sd_metric:.6g} ± {summary.sd_err:.3g}")
    return EXIT_OK


def _read_summary(directory):
    path = Path(directory) / "summary.json"
    if not path.is_file():
        raise CliError(f"missing {path}")
    return json.loads(path.read_text(encoding="utf-8"))


def cmd_compare(args):
    base = _read_summary(args.baseline)
    clf = _read_summary(args.clf)
    out = _out_dir(args)
    doc = {"baseline_config_hash": base.get("config_hash"), "clf_config_hash": clf.get("config_hash")}
    for key, sd, err in (("metric", "sd_metric", "sd_err"), ("loss", "loss_sd", "loss_sd_err")):
        b, c = base["summary"], clf["summary"]
        red = avg_var_reduction((b[sd], b[err]), (c[sd], c[err]))
        doc[key] = {
            "baseline": {"sd": b[sd], "err": b[err]},
            "clf": {"sd": c[sd], "err": c[err]},
            "upper_bound_reduction_pct": 100.0 * red.upper,
            "lower_bound_reduction_pct": None if red.lower is None else 100.0 * red.lower,
            "bounds_used": red.used,
            "avg_var_reduction_pct": red.average,
        }
    doc["generated_at"] = _timestamp(args)
    write_json(out / "reduction.json", doc)
    print(f"average variability reduction: {doc['metric']['avg_var_reduction_pct']:.1f}%")
    return EXIT_OK


def _read_pool(path):
    path = Path(path)
    if not path.is_file():
        raise CliError(f"missing pool file {path}")
    values = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if line.strip():
            try:
                values.append(float(line))
            except ValueError:
                raise CliError(f"{path}: line {lineno}: not a number") from None
    return values


GROUP_FIELDS = (
    "group_size",
    "n_samples",
    "mean_a",
    "mean_sd_a",
    "mean_b",
    "mean_sd_b",
    "fraction_a_lower_sd",
    "fraction_b_lower_sd",
    "lower_sd_group",
)


def cmd_groups(args):
    a, b = _read_pool(args.pool_a), _read_pool(args.pool_b)
    sizes = cfgmod.parse_int_list(args.sizes)
    results = group_study(a, b, sizes, args.samples, args.seed)
    out = _out_dir(args)
    rows = [
        (
            r.group_size,
            r.n_samples,
            r.mean_of_group_means_a,
            r.mean_of_group_sds_a,
            r.mean_of_group_means_b,
            r.mean_of_group_sds_b,
            r.fraction_a_lower_sd,
            r.fraction_b_lower_sd,
            r.lower_sd_group,
        )
        for r in results
    ]
    write_csv(out / "groups.csv", GROUP_FIELDS, rows)
    return EXIT_OK


DURATION_FIELDS = ("window", "n_seeds", "mean", "sd", "min", "q1", "median", "q3", "max")


def cmd_duration(args):
    exp = cfgmod.load(args.config)
    train_cfg = exp.train
    if args.epochs is not None:
        train_cfg = replace(train_cfg, epochs=args.epochs, clf=replace(train_cfg.clf, activation_window=0))
    seeds = _sweep_seeds(args, exp)
    windows = cfgmod.parse_int_list(args.windows)
    bad = [w for w in windows if not 0 <= w <= train_cfg.epochs]
    if bad:
        raise CliError(f"windows {bad} exceed {train_cfg.epochs} epochs")
    data = cfgmod.build_data(exp)
    out = _out_dir(args, exp)
    s = exp.sections["sweep"]
    exclude = args.exclude_divergent or s["exclude_divergent"]
    entries = duration_study(train_cfg, data, windows, seeds, args.jobs, s["bound"], exclude)
    rows = []
    for e in entries:
        sub = out / f"window{e.window}"
        sub.mkdir(exist_ok=True)
        for run in e.sweep.runs:
            write_run(run, sub, exp.config_hash, args.no_timestamp)
        rows.append((e.window, e.summary.n_seeds, e.summary.mean_metric, e.summary.sd_metric, *e.five))
    write_csv(out / "duration.csv", DURATION_FIELDS, rows)
    return EXIT_OK


def cmd_tune(args):
    exp = cfgmod.load(args.config)
    tuner = exp.tuner
    if args.trials is not None:
        tuner = replace(tuner, n_trials=args.trials)
    data = cfgmod.build_data(exp)
    out = _out_dir(args, exp)
    result = run_tuning(tuner, exp.train, data, args.seed, args.jobs)
    rows = [tuple(getattr(t, f) for f in TRIAL_FIELDS) for t in result.history]
    write_csv(out / "tuning_history.csv", TRIAL_FIELDS, rows)
    best = result.best
    window = tuner.activation_window
    if window is None:
        window = tuner.epochs if tuner.epochs is not None else exp.train.epochs
    write_json(
        out / "best_params.json",
        {
            "trial": best.trial,
            "lambda_v": best.lambda_v,
            "lambda_s": best.lambda_s,
            "lambda_wd": best.lambda_wd,
            "score": best.score,
            "mean_acc": best.mean_acc,
            "sd_acc": best.sd_acc,
            "metric_source": result.metric_source,
            "tuner_seed": args.seed,
            "config_hash": exp.config_hash,
            "clf": {
                "lambda_s": best.lambda_s,
                "lambda_v": best.lambda_v,
                "lambda_wd": best.lambda_wd,
                "activation_window": window,
            },
        },
    )
    print(f"best trial {best.trial}: score {best.score:.4g} ({result.metric_source} accuracy)")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="clfvar", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True, jobs=False):
        if config:
            p.add_argument("--config", required=True, help="experiment config (JSON)")
        p.add_argument("--out", help="output directory (default: config 'output')")
        p.add_argument("--no-timestamp", action="store_true", help="omit wall-clock fields")
        if jobs:
            p.add_argument("--jobs", type=int, default=1, help="parallel training runs")

    p = sub.add_parser("train", help="train one seed")
    common(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--verbose", action="store_true", help="also write per-batch loss rows")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="train across seeds and summarise")
    common(p, jobs=True)
    p.add_argument("--seeds", help="'a..b' or comma list (default: config sweep.seeds)")
    p.add_argument("--exclude-divergent", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="variability reduction between two sweeps")
    common(p, config=False)
    p.add_argument("--baseline", required=True, help="sweep directory without the composite loss")
    p.add_argument("--clf", required=True, help="sweep directory with the composite loss")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("groups", help="subset-group SD comparison of two metric pools")
    common(p, config=False)
    p.add_argument("--pool-a", required=True, help="one metric per line")
    p.add_argument("--pool-b", required=True, help="one metric per line")
    p.add_argument("--sizes", default="5,10,15")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_groups)

    p = sub.add_parser("duration", help="sweep per activation window")
    common(p, jobs=True)
    p.add_argument("--windows", default="50,150,250,350,450")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seeds", help="'a..b' or comma list (default: config sweep.seeds)")
    p.add_argument("--exclude-divergent", action="store_true")
    p.set_defaults(func=cmd_duration)

    p = sub.add_parser("tune", help="random log-uniform search over loss weights")
    common(p, jobs=True)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_tune)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, cfgmod.ConfigError, ValueError, OSError) as exc:
        print(f"clfvar {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
