"""Task definitions and the flat ``key = value`` experiment configuration."""

import configparser
import os
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

from ..cnn.train import TrainConfig
from ..errors import ConfigError, InvalidInputError
from ..linear import ALPHA_GRID
from ..measures import MeasureKind

_TASKS = {
    "sex": ("classification", "Acc"),
    "age": ("regression", "MAE"),
    "tpvt": ("regression", "PearsonR"),
    "torrt": ("regression", "PearsonR"),
    "tfat": ("regression", "PearsonR"),
}
_TASK_LABEL = {"sex": "Sex (Acc%)", "age": "Age (MAE)", "tpvt": "TPVT (r)", "torrt": "TORRT (r)", "tfat": "TFAT (r)"}

DEFAULT_CATEGORIES = (
    ("Microstructure", (MeasureKind.FA, MeasureKind.MD)),
    ("Connectivity", (MeasureKind.NOS,)),
    ("Shape", (MeasureKind.LENGTH, MeasureKind.DIAMETER, MeasureKind.ELONGATION)),
)


@dataclass(frozen=True)
class TaskSpec:
    target: str

    def __post_init__(self):
        if self.target not in _TASKS:
            raise ConfigError(f"unknown task {self.target!r}; expected one of {sorted(_TASKS)}")

    @property
    def kind(self):
        return _TASKS[self.target][0]

    @property
    def metric(self):
        return _TASKS[self.target][1]

    @property
    def label(self):
        return _TASK_LABEL[self.target]

    @property
    def higher_is_better(self):
        return self.metric != "MAE"


@dataclass(frozen=True)
class EnetConfig:
    l1_ratio: float = 0.5
    alpha_grid: Tuple[float, ...] = ALPHA_GRID
    inner_folds: int = 5
    tol: float = 1e-4
    max_iter: int = 1000


@dataclass(frozen=True)
class ExperimentConfig:
    task: TaskSpec
    seed: int
    model: str = "enet"
    categories: Tuple[Tuple[str, Tuple[MeasureKind, ...]], ...] = DEFAULT_CATEGORIES
    folds: int = 5
    train: TrainConfig = field(default_factory=TrainConfig)
    enet: EnetConfig = field(default_factory=EnetConfig)
    jobs: int = 1
    features: Optional[str] = None
    phenotypes: Optional[str] = None
    n_clusters: Optional[int] = None
    label: Optional[str] = None

    def __post_init__(self):
        if self.model not in ("cnn", "enet"):
            raise ConfigError(f"model must be 'cnn' or 'enet', got {self.model!r}")
        if self.model == "enet" and self.task.kind == "classification":
            raise ConfigError("ElasticNet supports regression tasks only")
        if self.folds < 2:
            raise ConfigError(f"folds must be >= 2, got {self.folds}")
        if not self.categories:
            raise ConfigError("at least one category is required")
        names = [c[0] for c in self.categories]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate category names in {names}")
        for name, measures in self.categories:
            if not measures:
                raise ConfigError(f"category {name!r} has no measures")
            if len({m.normalized for m in measures}) > 1:
                raise ConfigError(f"category {name!r} mixes raw and normalized measures")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    @property
    def measures(self) -> List[MeasureKind]:
        seen = []
        for _, ms in self.categories:
            for m in ms:
                if m not in seen:
                    seen.append(m)
        return seen

    @property
    def name(self):
        if self.label:
            return self.label
        return " ".join(c[0] for c in self.categories) + f" [{self.model}]"

    def echo(self):
        """Plain-data view of the configuration for reports and logs."""
        return {
            "task": self.task.target,
            "model": self.model,
            "seed": self.seed,
            "folds": self.folds,
            "categories": [[n, [m.value for m in ms]] for n, ms in self.categories],
            "train": {k: (list(v) if isinstance(v, tuple) else v) for k, v in vars(self.train).items()},
            "enet": {k: (list(v) if isinstance(v, tuple) else v) for k, v in vars(self.enet).items()},
            "label": self.name,
        }


def _bool(value):
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"cannot interpret {value!r} as a boolean")


def _measures(text):
    try:
        return tuple(MeasureKind.parse(m) for m in text.split(",") if m.strip())
    except InvalidInputError as exc:
        raise ConfigError(str(exc))


def parse_flat_config(text):
    """Parse ``key = value`` lines (``#`` comments allowed) into a dict of strings."""
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}")
    return dict(parser["config"])


_TRAIN_KEYS = {
    "learning_rate": float,
    "batch_size": int,
    "epochs": int,
    "momentum": float,
    "channels": int,
    "clip_norm": float,
}
_ENET_KEYS = {"l1_ratio": float, "inner_folds": int, "tol": float, "max_iter": int}


def load_config(text, base_dir=None):
    """Build an :class:`ExperimentConfig` from flat config text.

    Recognised keys: task, model, seed (required), folds, jobs, categories,
    ``category.<Name>`` (optional for the built-in Microstructure, Connectivity
    and Shape categories), normalize, features, phenotypes, n_clusters, label,
    the CNN keys learning_rate, batch_size, epochs, momentum, channels,
    hidden, clip_norm, standardize_targets and the ElasticNet keys l1_ratio,
    alpha_grid, inner_folds, tol, max_iter.
    """
    raw = parse_flat_config(text)
    known = {
        "task", "model", "seed", "folds", "jobs", "categories", "normalize", "features",
        "phenotypes", "n_clusters", "label", "hidden", "standardize_targets", "alpha_grid",
    } | set(_TRAIN_KEYS) | set(_ENET_KEYS)
    unknown = [k for k in raw if k not in known and not k.startswith("category.")]
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for key in ("task", "seed"):
        if key not in raw:
            raise ConfigError(f"config is missing required key {key!r}")

    try:
        if "categories" in raw:
            names = [n.strip() for n in raw["categories"].split(",") if n.strip()]
            builtin = dict(DEFAULT_CATEGORIES)
            cats = []
            for n in names:
                key = f"category.{n}"
                if key in raw:
                    cats.append((n, _measures(raw[key])))
                elif n in builtin:
                    cats.append((n, builtin[n]))
                else:
                    raise ConfigError(f"category {n!r} listed but {key} is not defined")
        else:
            cats = list(DEFAULT_CATEGORIES)
        if "normalize" in raw and _bool(raw["normalize"]):
            cats = [
                (n if ms[0].category == "Microstructure" else f"{n}-N",
                 tuple(m if m.category == "Microstructure" else m.to_normalized() for m in ms))
                for n, ms in cats
            ]

        train = TrainConfig()
        updates = {k: conv(raw[k]) for k, conv in _TRAIN_KEYS.items() if k in raw}
        if "hidden" in raw:
            updates["hidden"] = tuple(int(h) for h in raw["hidden"].split(","))
        if "standardize_targets" in raw:
            updates["standardize_targets"] = _bool(raw["standardize_targets"])
        train = replace(train, seed=int(raw["seed"]), **updates)

        enet_updates = {k: conv(raw[k]) for k, conv in _ENET_KEYS.items() if k in raw}
        if "alpha_grid" in raw:
            enet_updates["alpha_grid"] = tuple(float(a) for a in raw["alpha_grid"].split(","))
        enet = replace(EnetConfig(), **enet_updates)

        def path(key):
            if key not in raw:
                return None
            if base_dir is None:
                return raw[key]
            return os.path.normpath(os.path.join(base_dir, raw[key]))

        return ExperimentConfig(
            task=TaskSpec(raw["task"].strip().lower()),
            seed=int(raw["seed"]),
            model=raw.get("model", "enet").strip().lower(),
            categories=tuple(cats),
            folds=int(raw.get("folds", 5)),
            train=train,
            enet=enet,
            jobs=int(raw.get("jobs", 1)),
            features=path("features"),
            phenotypes=path("phenotypes"),
            n_clusters=int(raw["n_clusters"]) if "n_clusters" in raw else None,
            label=raw.get("label"),
        )
    except (ValueError, InvalidInputError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid config value: {exc}")
