"""Command-line entry point: ``tractshape <command> [options]``.

Exit status is 0 on success, 1 when the input data or configuration is
invalid and 2 for usage errors.  Logs go to standard error; results go to
files, except ``report`` which prints its table to standard output.
"""

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .cnn.train import TrainConfig
from .errors import ConfigError, TractShapeError
from .io.tables import load_phenotypes
from .measures import MeasureKind
from .pipeline.config import EnetConfig, TaskSpec, load_config, parse_flat_config
from .pipeline.experiment import (
    Cohort,
    Comparison,
    EvalReport,
    compare_experiments,
    eligible_subjects,
    fold_metrics,
    run_stages,
    summarize,
    train_measure_model,
    target_values,
)
from .pipeline.features import extract_directory, load_feature_dir, write_feature_dir
from .pipeline.folds import make_folds
from .pipeline.report import render_comparison, render_report
from .synth import cohort_spec_from_config, gen_cohort

log = logging.getLogger("tractshape")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _positive(value):
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return n


def build_parser():
    p = _Parser(prog="tractshape", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic cohort")
    s.add_argument("--config", required=True, help="flat key = value cohort config")
    s.add_argument("--out", required=True, help="output cohort directory")
    s.add_argument("--seed", type=int, help="seed (overrides the config value)")

    s = sub.add_parser("extract", help="compute per-measure feature CSVs for a cohort directory")
    s.add_argument("--data", required=True, help="cohort directory (subject directories, or a subjects/ folder)")
    s.add_argument("--out", required=True, help="directory for the feature CSVs")
    s.add_argument("--normalize", action="store_true", help="also write brain-size normalized (-N) measures")
    s.add_argument("--n-clusters", type=_positive, help="clusters per subject (default: layout.cfg or 1516)")
    s.add_argument("--jobs", type=_positive, default=1, help="worker processes")

    s = sub.add_parser("train", help="cross-validated predictions of single measures")
    s.add_argument("--features", required=True, help="directory of feature CSVs")
    s.add_argument("--phenotypes", required=True, help="phenotype CSV")
    s.add_argument("--task", required=True, help="sex, age, tpvt, torrt or tfat")
    s.add_argument("--model", required=True, choices=("cnn", "enet"))
    s.add_argument("--measures", required=True, help="comma separated measure names, e.g. FA,Length-N")
    s.add_argument("--folds", type=_positive, default=5)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--jobs", type=_positive, default=1, help="worker processes")
    s.add_argument("--epochs", type=_positive, help="CNN epochs (default 300)")

    s = sub.add_parser("experiment", help="full two-stage fusion experiment from a config file")
    s.add_argument("--config", required=True, help="flat key = value experiment config")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--jobs", type=_positive, help="worker processes (overrides the config value)")

    s = sub.add_parser("compare", help="rmANOVA and paired t-tests across experiment reports")
    s.add_argument("--reports", nargs="+", required=True, help="report.json files (two or more)")
    s.add_argument("--out", required=True, help="output comparison JSON")

    s = sub.add_parser("report", help="render a report or comparison JSON as a text table")
    s.add_argument("--in", dest="input", required=True, help="report.json or comparison JSON")
    return p


def _load_cohort(features_dir, phenotypes_path, measures, n_clusters=None):
    features = load_feature_dir(features_dir, measures, n_clusters)
    phenotypes = load_phenotypes(Path(phenotypes_path).read_bytes())
    return Cohort(features, phenotypes)


def cmd_synth(args):
    raw = parse_flat_config(Path(args.config).read_text())
    spec = cohort_spec_from_config(raw, args.seed)
    log.info("synth: seed=%d config=%s", spec.seed, json.dumps(raw, sort_keys=True))
    cohort = gen_cohort(spec, args.out)
    log.info("wrote %d subjects to %s", len(cohort.subjects), args.out)


def cmd_extract(args):
    log.info("extract: data=%s normalize=%s n_clusters=%s jobs=%d", args.data, args.normalize, args.n_clusters, args.jobs)
    features = extract_directory(args.data, args.normalize, args.n_clusters, args.jobs)
    for path in write_feature_dir(features, args.out):
        log.info("wrote %s", path)


def cmd_train(args):
    task = TaskSpec(args.task.strip().lower())
    try:
        measures = [MeasureKind.parse(m) for m in args.measures.split(",") if m.strip()]
    except TractShapeError as exc:
        raise ConfigError(str(exc))
    if not measures:
        raise ConfigError("no measures given")
    if args.model == "enet" and task.kind == "classification":
        raise ConfigError("ElasticNet cannot be used for classification tasks")
    train_cfg = TrainConfig(seed=args.seed, **({"epochs": args.epochs} if args.epochs else {}))
    log.info(
        "train: task=%s model=%s measures=%s folds=%d seed=%d",
        task.target, args.model, ",".join(m.value for m in measures), args.folds, args.seed,
    )
    cohort = _load_cohort(args.features, args.phenotypes, measures)
    ids = eligible_subjects(cohort, task, measures)
    folds = make_folds(ids, args.folds, args.seed)
    targets = dict(zip(ids, target_values(cohort.phenotypes, task, ids).tolist()))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {"task": task.target, "metric": task.metric, "model": args.model, "seed": args.seed,
               "folds": args.folds, "fold_hash": folds.digest(), "measures": {}}
    for m in measures:
        pset = train_measure_model(
            cohort.features[m], targets, task, args.model, folds, args.seed, train_cfg, EnetConfig(), args.jobs
        )
        values = fold_metrics(pset, targets)
        mean, std = summarize(values)
        summary["measures"][m.value] = {"fold_values": values, "mean": mean, "std": std}
        lines = ["subject_id,fold,prediction" if pset.values.ndim == 1 else "subject_id,fold,p0,p1"]
        for sid, v in zip(pset.subject_ids, pset.values):
            cells = [f"{x:.17g}" for x in np.atleast_1d(v)]
            lines.append(",".join([sid, str(folds.folds[sid]), *cells]))
        (out / f"predictions_{m.value}.csv").write_text("\n".join(lines) + "\n")
        log.info("%s %s: %.4f ± %.4f", m.value, task.metric, mean, std)
    (out / "metrics.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")


def cmd_experiment(args):
    config_path = Path(args.config)
    config = load_config(config_path.read_text(), base_dir=str(config_path.parent))
    if args.jobs:
        config = replace(config, jobs=args.jobs)
    if not config.features or not config.phenotypes:
        raise ConfigError("experiment config needs 'features' and 'phenotypes' paths")
    log.info("experiment config: %s", json.dumps(config.echo(), sort_keys=True))
    cohort = _load_cohort(config.features, config.phenotypes, config.measures, config.n_clusters)
    result = run_stages(cohort, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(result.report.to_json())
    (out / "report.txt").write_text(render_report(result.report))
    log.info("%s %s: %.4f ± %.4f", config.name, config.task.metric, result.report.mean, result.report.std)


def cmd_compare(args):
    if len(args.reports) < 2:
        raise ConfigError("compare needs at least two reports")
    reports = [EvalReport.from_json(Path(p).read_text()) for p in args.reports]
    log.info("compare: %s", ", ".join(r.label for r in reports))
    comparison = compare_experiments(reports)
    Path(args.out).write_text(comparison.to_json())
    log.info("rmANOVA F=%.4f p=%.4g", comparison.anova["F"], comparison.anova["p"])


def cmd_report(args):
    data = json.loads(Path(args.input).read_text())
    if "anova" in data:
        text = render_comparison(Comparison(**data))
    else:
        text = render_report(EvalReport.from_json(json.dumps(data)))
    sys.stdout.write(text)


COMMANDS = {
    "synth": cmd_synth,
    "extract": cmd_extract,
    "train": cmd_train,
    "experiment": cmd_experiment,
    "compare": cmd_compare,
    "report": cmd_report,
}


def run_command(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        COMMANDS[args.command](args)
    except (TractShapeError, OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"tractshape {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run_command())


if __name__ == "__main__":
    main()
