"""Feature extraction over a directory of subjects, and feature-CSV directories."""

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from ..errors import InvalidInputError
from ..io.cluster import LayoutConfig, load_subject
from ..io.tables import read_feature_csv, write_feature_csv
from ..measures import NORMALIZABLE, FeatureMatrix, MeasureKind, extract_features, missing_mask
from ..normalize import brain_size_normalize

log = logging.getLogger(__name__)


def subject_dirs(data_dir):
    """Subject directories of a cohort: ``data_dir/subjects/*`` if present, else ``data_dir/*``."""
    root = Path(data_dir)
    if not root.is_dir():
        raise InvalidInputError(f"data directory {root} does not exist")
    base = root / "subjects" if (root / "subjects").is_dir() else root
    dirs = sorted(p for p in base.iterdir() if p.is_dir() and not p.name.startswith("."))
    if not dirs:
        raise InvalidInputError(f"no subject directories found under {base}")
    return dirs


def read_layout(data_dir, n_clusters=None):
    """Cluster count from the argument, else from ``layout.cfg`` in the cohort root, else the atlas default."""
    if n_clusters is None:
        cfg = Path(data_dir) / "layout.cfg"
        if cfg.is_file():
            from .config import parse_flat_config

            raw = parse_flat_config(cfg.read_text())
            if "n_clusters" in raw:
                n_clusters = int(raw["n_clusters"])
    return LayoutConfig(n_clusters=n_clusters) if n_clusters else LayoutConfig()


def subject_vectors(path, layout, normalize=False):
    subject = load_subject(path, layout)
    vectors = extract_features(subject)
    if normalize:
        mask = missing_mask(subject)
        for kind in NORMALIZABLE:
            vec, norm_kind = brain_size_normalize(vectors[kind], mask, kind)
            vectors[norm_kind] = vec
    return subject.subject_id, vectors


def _subject_job(args):
    return subject_vectors(*args)


def extract_directory(data_dir, normalize=False, n_clusters=None, jobs=1):
    """One FeatureMatrix per measure for every subject directory; order follows subject id."""
    layout = read_layout(data_dir, n_clusters)
    args = [(d, layout, normalize) for d in subject_dirs(data_dir)]
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_subject_job, args, chunksize=4))
    else:
        results = [_subject_job(a) for a in args]
    results.sort(key=lambda r: r[0])
    ids = tuple(r[0] for r in results)
    kinds = list(results[0][1])
    log.info("extracted %d measures for %d subjects (%d clusters)", len(kinds), len(ids), layout.n_clusters)
    return {k: FeatureMatrix(k, ids, np.vstack([r[1][k] for r in results])) for k in kinds}


def feature_path(directory, measure):
    return Path(directory) / f"{MeasureKind.parse(str(measure)).value}.csv"


def write_feature_dir(features, directory):
    os.makedirs(directory, exist_ok=True)
    paths = []
    for kind, matrix in features.items():
        path = feature_path(directory, kind)
        path.write_bytes(write_feature_csv(matrix))
        paths.append(path)
    return paths


def load_feature_dir(directory, measures, n_clusters=None):
    out = {}
    for m in measures:
        path = feature_path(directory, m)
        if not path.is_file():
            raise InvalidInputError(f"feature file {path} not found")
        out[MeasureKind.parse(str(m))] = read_feature_csv(path.read_bytes(), m, n_clusters)
    return out
