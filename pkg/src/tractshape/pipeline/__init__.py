from .config import DEFAULT_CATEGORIES, EnetConfig, ExperimentConfig, TaskSpec, load_config, parse_flat_config
from .experiment import (
    Cohort,
    Comparison,
    EvalReport,
    ExperimentResult,
    PredictionSet,
    compare_experiments,
    fold_metrics,
    fuse_predictions,
    run_experiment,
    run_stages,
    train_measure_model,
)
from .folds import FoldAssignment, make_folds
from .report import format_score, render_comparison, render_report
