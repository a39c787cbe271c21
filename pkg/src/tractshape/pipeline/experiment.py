"""Cross-validated per-measure training and the two-stage prediction fusion."""

import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .. import stats
from ..cnn.model import cnn_predict
from ..cnn.train import TrainConfig, train_cnn
from ..errors import ConfigError, InvalidInputError, StatisticsError
from ..io.tables import write_feature_csv
from ..linear import enet_fit, enet_predict, enet_tune_alpha
from ..measures import FeatureMatrix, MeasureKind
from ..normalize import minmax_rows
from .config import EnetConfig, ExperimentConfig, TaskSpec
from .folds import FoldAssignment, make_folds

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PredictionSet:
    """Out-of-fold predictions for every subject of a fold assignment.

    ``values`` is ``(n, 2)`` class probabilities for classification and
    ``(n,)`` for regression, ordered like ``folds.subject_ids``.
    ``train_ids[f]`` records the subjects that trained the model for fold ``f``.
    """

    task: TaskSpec
    folds: FoldAssignment
    values: np.ndarray
    train_ids: Tuple[Tuple[str, ...], ...]
    measures: Tuple[str, ...]
    model: str

    @property
    def subject_ids(self):
        return self.folds.subject_ids

    @property
    def labels(self):
        if self.task.kind != "classification":
            raise InvalidInputError("labels are only defined for classification predictions")
        # argmax returns the first maximum, so ties go to class 0
        return np.argmax(self.values, axis=1)

    def point_estimates(self):
        return self.labels if self.task.kind == "classification" else self.values


@dataclass
class Cohort:
    features: Dict[MeasureKind, FeatureMatrix]
    phenotypes: Dict[str, object]


def derive_seed(seed, *keys):
    return int(np.random.SeedSequence([int(seed), *[int(k) for k in keys]]).generate_state(1)[0])


def measure_code(measure):
    return list(MeasureKind).index(measure)


def _fit_predict(job):
    """One (measure, fold) model: fit on the training rows and predict the held-out rows."""
    model_kind, task_kind, X_train, y_train, X_test, seed, train_cfg, enet_cfg = job
    if model_kind == "enet":
        alpha = enet_tune_alpha(
            X_train,
            y_train,
            grid=enet_cfg.alpha_grid,
            inner_k=enet_cfg.inner_folds,
            seed=seed,
            l1_ratio=enet_cfg.l1_ratio,
            tol=enet_cfg.tol,
            max_iter=enet_cfg.max_iter,
        )
        model = enet_fit(X_train, y_train, alpha, enet_cfg.l1_ratio, enet_cfg.tol, enet_cfg.max_iter)
        return enet_predict(model, X_test)
    cfg = TrainConfig(**{**vars(train_cfg), "seed": seed})
    model, _ = train_cnn(X_train, y_train, task_kind, cfg)
    return cnn_predict(model, X_test)


def _run_jobs(jobs, n_workers):
    if n_workers <= 1 or len(jobs) <= 1:
        return [_fit_predict(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(_fit_predict, jobs))


def target_values(phenotypes, task, ids):
    values = [phenotypes[s].get(task.target) for s in ids]
    if task.kind == "classification":
        return np.array(values, dtype=np.int64)
    return np.array(values, dtype=np.float64)


def _jobs_for(features, targets, task, model_kind, folds, seed, train_cfg, enet_cfg):
    if model_kind == "enet" and task.kind == "classification":
        raise ConfigError("ElasticNet cannot be used for classification tasks")
    ids = folds.subject_ids
    X = minmax_rows(features.rows(ids))
    y = np.array([targets[s] for s in ids])
    jobs, test_masks, train_ids = [], [], []
    for f in range(folds.k):
        test = np.array([folds.folds[s] == f for s in ids])
        jobs.append(
            (
                model_kind,
                task.kind,
                X[~test],
                y[~test],
                X[test],
                derive_seed(seed, measure_code(features.measure), f),
                train_cfg,
                enet_cfg,
            )
        )
        test_masks.append(test)
        train_ids.append(tuple(s for s, t in zip(ids, test) if not t))
    return jobs, test_masks, tuple(train_ids)


def _assemble(features, task, model_kind, folds, outputs, test_masks, train_ids):
    n = len(folds.subject_ids)
    values = np.zeros((n, 2)) if task.kind == "classification" else np.zeros(n)
    for out, test in zip(outputs, test_masks):
        values[test] = out
    return PredictionSet(task, folds, values, train_ids, (features.measure.value,), model_kind)


def train_measure_model(
    features, targets, task, model_kind, folds, seed, train_cfg=None, enet_cfg=None, jobs=1
):
    """Out-of-fold predictions of one measure: each fold is predicted by a model trained on the rest.

    ``targets`` maps subject id to the task target for every subject in ``folds``.
    """
    jobs_, masks, train_ids = _jobs_for(
        features, targets, task, model_kind, folds, seed, train_cfg or TrainConfig(), enet_cfg or EnetConfig()
    )
    return _assemble(features, task, model_kind, folds, _run_jobs(jobs_, jobs), masks, train_ids)


def fuse_predictions(sets, task=None):
    """Average regression predictions or class-probability pairs (soft vote)."""
    sets = list(sets)
    if not sets:
        raise InvalidInputError("nothing to fuse")
    first = sets[0]
    task = task or first.task
    for s in sets:
        if s.task != task:
            raise InvalidInputError(f"cannot fuse {s.task.target} predictions into a {task.target} task")
        if s.folds.digest() != first.folds.digest():
            raise InvalidInputError("prediction sets were produced with different fold assignments")
        if s.train_ids != first.train_ids:
            raise InvalidInputError("prediction sets disagree on training subjects")
    if len(sets) == 1:
        return first
    values = np.mean(np.stack([s.values for s in sets]), axis=0)
    measures = tuple(m for s in sets for m in s.measures)
    models = sorted({s.model for s in sets})
    return PredictionSet(task, first.folds, values, first.train_ids, measures, "+".join(models))


def fold_metric(task, predictions, truth):
    """Task metric on one fold; Pearson r of a constant prediction is reported as 0."""
    if task.metric == "Acc":
        return stats.accuracy(predictions, truth)
    if task.metric == "MAE":
        return stats.mae(predictions, truth)
    try:
        return stats.pearson_r(predictions, truth)
    except StatisticsError:
        log.warning("constant predictions in a fold; Pearson r reported as 0")
        return 0.0


def fold_metrics(pset, targets):
    ids = pset.subject_ids
    truth = np.array([targets[s] for s in ids])
    est = pset.point_estimates()
    out = []
    for f in range(pset.folds.k):
        mask = np.array([pset.folds.folds[s] == f for s in ids])
        out.append(fold_metric(pset.task, est[mask], truth[mask]))
    return out


def summarize(values):
    v = np.asarray(values, dtype=np.float64)
    return float(v.mean()), float(v.std(ddof=1)) if len(v) > 1 else 0.0


@dataclass
class EvalReport:
    label: str
    task: str
    metric: str
    model: str
    fold_values: List[float]
    mean: float
    std: float
    fold_hash: str
    features_hash: Dict[str, str]
    n_subjects: int
    categories: List[Tuple[str, List[str]]]
    per_measure: Dict[str, List[float]] = field(default_factory=dict)
    per_category: Dict[str, List[float]] = field(default_factory=dict)
    predictions: Dict[str, object] = field(default_factory=dict)
    config: Dict[str, object] = field(default_factory=dict)

    def to_json(self):
        return json.dumps(self.__dict__, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        d["categories"] = [(n, list(ms)) for n, ms in d["categories"]]
        return cls(**d)


@dataclass
class ExperimentResult:
    report: EvalReport
    measure_sets: Dict[MeasureKind, PredictionSet]
    category_sets: Dict[str, PredictionSet]
    fused: PredictionSet
    targets: Dict[str, object]


def feature_hash(matrix):
    return hashlib.sha256(write_feature_csv(matrix)).hexdigest()


def eligible_subjects(cohort, task, measures):
    """Subjects with the task target present; raises if features and phenotypes disagree."""
    target = task.target
    pheno_ids = set(cohort.phenotypes)
    problems = []
    for m in measures:
        if m not in cohort.features:
            raise InvalidInputError(f"no features available for measure {m.value}")
        ids = set(cohort.features[m].subject_ids)
        lacking = sorted(pheno_ids - ids)
        extra = sorted(ids - pheno_ids)
        if lacking:
            problems.append(f"{m.value} features missing subjects: {', '.join(lacking[:20])}")
        if extra:
            problems.append(f"subjects without phenotypes in {m.value}: {', '.join(extra[:20])}")
    if problems:
        raise InvalidInputError("; ".join(problems))
    keep = sorted(s for s in pheno_ids if cohort.phenotypes[s].get(target) is not None)
    dropped = len(pheno_ids) - len(keep)
    if dropped:
        log.info("dropping %d subjects without a %s value", dropped, target)
    return keep


def run_stages(cohort, config, folds=None):
    """Train per-measure models, fuse within and then across categories, and score every stage."""
    ids = eligible_subjects(cohort, config.task, config.measures)
    folds = folds or make_folds(ids, config.folds, config.seed)
    if set(folds.subject_ids) != set(ids):
        raise InvalidInputError("fold assignment does not cover exactly the eligible subjects")
    targets = dict(zip(ids, target_values(cohort.phenotypes, config.task, ids).tolist()))
    log.info(
        "experiment %s: task=%s model=%s seed=%d folds=%d subjects=%d",
        config.name, config.task.target, config.model, config.seed, config.folds, len(ids),
    )

    all_jobs, layout = [], []
    for m in config.measures:
        jobs, masks, train_ids = _jobs_for(
            cohort.features[m], targets, config.task, config.model, folds, config.seed, config.train, config.enet
        )
        layout.append((m, len(all_jobs), len(jobs), masks, train_ids))
        all_jobs.extend(jobs)
    outputs = _run_jobs(all_jobs, config.jobs)

    measure_sets = {}
    for m, start, count, masks, train_ids in layout:
        measure_sets[m] = _assemble(
            cohort.features[m], config.task, config.model, folds, outputs[start : start + count], masks, train_ids
        )
    category_sets = {
        name: fuse_predictions([measure_sets[m] for m in ms], config.task) for name, ms in config.categories
    }
    fused = fuse_predictions(list(category_sets.values()), config.task)

    values = fold_metrics(fused, targets)
    mean, std = summarize(values)
    preds = fused.values.tolist()
    report = EvalReport(
        label=config.name,
        task=config.task.target,
        metric=config.task.metric,
        model=config.model,
        fold_values=values,
        mean=mean,
        std=std,
        fold_hash=folds.digest(),
        features_hash={m.value: feature_hash(cohort.features[m]) for m in config.measures},
        n_subjects=len(ids),
        categories=[(n, [m.value for m in ms]) for n, ms in config.categories],
        per_measure={m.value: fold_metrics(s, targets) for m, s in measure_sets.items()},
        per_category={n: fold_metrics(s, targets) for n, s in category_sets.items()},
        predictions=dict(zip(fused.subject_ids, preds)),
        config=config.echo(),
    )
    return ExperimentResult(report, measure_sets, category_sets, fused, targets)


def run_experiment(cohort, config, folds=None):
    return run_stages(cohort, config, folds).report


@dataclass
class Comparison:
    task: str
    metric: str
    labels: List[str]
    table: List[List[float]]
    anova: Dict[str, float]
    pairwise: List[Dict[str, object]]

    def to_json(self):
        return json.dumps(self.__dict__, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


def compare_experiments(reports):
    """Repeated-measures ANOVA over methods (folds as blocks) plus pairwise paired t-tests."""
    reports = list(reports)
    if len(reports) < 2:
        raise InvalidInputError("need at least two reports to compare")
    first = reports[0]
    for r in reports[1:]:
        if r.task != first.task:
            raise InvalidInputError(f"reports are for different tasks ({first.task} vs {r.task})")
        if r.fold_hash != first.fold_hash:
            raise InvalidInputError(f"report {r.label!r} used a different fold assignment")
        for m, h in r.features_hash.items():
            if m in first.features_hash and first.features_hash[m] != h:
                raise InvalidInputError(f"report {r.label!r} was computed from different {m} features")
    table = np.array([r.fold_values for r in reports]).T  # folds x methods
    aov = stats.rm_anova(table)
    pairs = []
    for i in range(len(reports)):
        for j in range(i + 1, len(reports)):
            t = stats.paired_t_test(table[:, i], table[:, j])
            pairs.append(
                {
                    "a": reports[i].label,
                    "b": reports[j].label,
                    "t": t.statistic,
                    "df": t.df,
                    "p": t.p_value,
                    "mean_difference": float(np.mean(table[:, i] - table[:, j])),
                    "marker": stats.significance_marker(t.p_value),
                }
            )
    return Comparison(
        task=first.task,
        metric=first.metric,
        labels=[r.label for r in reports],
        table=table.tolist(),
        anova={
            "F": aov.statistic,
            "df1": aov.df,
            "df2": aov.df2,
            "p": aov.p_value,
            "marker": stats.significance_marker(aov.p_value),
        },
        pairwise=pairs,
    )
