"""Synthetic fiber bundles and cohorts with known shape parameters and planted phenotype signal.

A bundle is a centerline (straight or circular arc) copied once per
streamline and shifted by an isotropic Gaussian offset in the plane normal to
the centerline at its midpoint.  The midpoint covariance then has largest
eigenvalue close to ``sigma**2``, so the expected diameter is ``2 * sigma``.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import ConfigError, InvalidInputError
from .io.cluster import FiberCluster, LayoutConfig, PhenotypeRecord, SubjectData, write_subject
from .io.tables import write_phenotypes
from .measures import MeasureKind, extract_features, missing_mask
from .normalize import brain_size_normalize, minmax_rows

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BundleSpec:
    length: float = 50.0
    curvature: str = "straight"
    sigma: float = 1.5
    n_streamlines: int = 100
    n_points: int = 20
    jitter: float = 0.0
    seed: int = 0
    arc_angle: float = math.pi / 2
    center: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    direction: Tuple[float, float, float] = (1.0, 0.0, 0.0)
    fa: Tuple[float, float] = (0.45, 0.05)
    md: Tuple[float, float] = (7.5e-4, 5e-5)
    cluster_id: int = 1

    def __post_init__(self):
        if not self.length > 0:
            raise InvalidInputError(f"bundle length must be positive, got {self.length}")
        if self.sigma < 0 or self.jitter < 0:
            raise InvalidInputError("sigma and jitter must be non-negative")
        if self.n_streamlines < 1 or self.n_points < 2:
            raise InvalidInputError("need at least one streamline and two points per streamline")
        if self.curvature not in ("straight", "arc"):
            raise InvalidInputError(f"curvature must be 'straight' or 'arc', got {self.curvature!r}")


def _frame(direction):
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    helper = np.eye(3)[int(np.argmin(np.abs(d)))]
    u = np.cross(d, helper)
    u /= np.linalg.norm(u)
    return d, u, np.cross(d, u)


def centerline(spec):
    """Centerline points and the unit tangent at its arc-length midpoint."""
    d, u, _ = _frame(spec.direction)
    s = np.linspace(-0.5, 0.5, spec.n_points) * spec.length
    c = np.asarray(spec.center, dtype=np.float64)
    if spec.curvature == "straight":
        return c + s[:, None] * d, d
    radius = spec.length / spec.arc_angle
    theta = s / radius
    # arc through c, tangent d at the middle, bending towards u
    pts = c + radius * np.sin(theta)[:, None] * d + radius * (1 - np.cos(theta))[:, None] * u
    return pts, d


def gen_bundle(spec):
    rng = np.random.default_rng(spec.seed)
    line, tangent = centerline(spec)
    _, u, v = _frame(tangent)
    n, k = spec.n_streamlines, spec.n_points
    offsets = spec.sigma * (rng.standard_normal((n, 1)) * u + rng.standard_normal((n, 1)) * v)
    pts = line[None, :, :] + offsets[:, None, :]
    if spec.jitter > 0:
        pts = pts + spec.jitter * rng.standard_normal(pts.shape)
    fa = np.clip(spec.fa[0] + spec.fa[1] * rng.standard_normal((n, k)), 0.0, 1.0)
    md = np.abs(spec.md[0] + spec.md[1] * rng.standard_normal((n, k)))
    return FiberCluster(spec.cluster_id, list(pts), {"FA": list(fa), "MD": list(md)})


@dataclass(frozen=True)
class PhenotypeSpec:
    """Target = offset + sum of beta * feature + Gaussian noise, features as the models see them."""

    offset: float
    coefficients: Dict[Tuple[str, int], float] = field(default_factory=dict)
    ceiling_r: Optional[float] = 0.85
    noise_sd: Optional[float] = None


# offsets only place values in a plausible range; the signal is left unscaled
DEFAULT_PHENOTYPES = {"age": 29.0, "tpvt": 117.0, "torrt": 117.0, "tfat": 112.0}


@dataclass(frozen=True)
class CohortSpec:
    n_subjects: int = 200
    n_clusters: int = 32
    pad_to: Optional[int] = None
    seed: int = 0
    n_points: int = 16
    length_range: Tuple[float, float] = (40.0, 120.0)
    sigma_range: Tuple[float, float] = (1.0, 4.0)
    nos_range: Tuple[int, int] = (100, 300)
    length_cv: float = 0.10
    sigma_cv: float = 0.03
    nos_cv: float = 0.20
    missing_rate: float = 0.0
    planted_clusters: Tuple[int, ...] = (4, 9, 14, 19, 24, 29)
    planted_measures: Tuple[str, ...] = ("Length",)
    ceiling_r: Optional[float] = 0.85
    phenotypes: Optional[Dict[str, PhenotypeSpec]] = None

    def __post_init__(self):
        if self.n_subjects < 10:
            raise ConfigError(f"a cohort needs at least 10 subjects, got {self.n_subjects}")
        if self.n_clusters < 1:
            raise ConfigError("n_clusters must be >= 1")
        if self.pad_to is not None and self.pad_to < self.n_clusters:
            raise ConfigError("pad_to must be >= n_clusters")
        if any(not 1 <= c <= self.n_clusters for c in self.planted_clusters):
            raise ConfigError("planted clusters must lie in 1..n_clusters")

    def phenotype_specs(self):
        if self.phenotypes is not None:
            return self.phenotypes
        rng = np.random.default_rng([self.seed, 7])
        specs = {}
        for name, offset in DEFAULT_PHENOTYPES.items():
            # planted measures are cycled over the planted clusters
            coefs = {
                (self.planted_measures[i % len(self.planted_measures)], c): float(
                    rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 1.5)
                )
                for i, c in enumerate(self.planted_clusters)
            }
            specs[name] = PhenotypeSpec(offset, coefs, self.ceiling_r)
        return specs

    @property
    def total_clusters(self):
        return self.pad_to or self.n_clusters


@dataclass
class Cohort:
    subjects: List[SubjectData]
    truth: Dict[str, object]


def _templates(spec):
    rng = np.random.default_rng([spec.seed, 1])
    out = []
    for cid in range(1, spec.n_clusters + 1):
        direction = rng.standard_normal(3)
        out.append(
            {
                "length": float(rng.uniform(*spec.length_range)),
                "sigma": float(rng.uniform(*spec.sigma_range)),
                "nos": int(rng.integers(spec.nos_range[0], spec.nos_range[1] + 1)),
                "curvature": "arc" if cid % 2 == 0 else "straight",
                "center": tuple(float(x) for x in rng.uniform(-50, 50, 3)),
                "direction": tuple(float(x) for x in direction / np.linalg.norm(direction)),
                "fa": float(rng.uniform(0.35, 0.6)),
                "md": float(rng.uniform(6.5e-4, 9e-4)),
            }
        )
    return out


def _subject_clusters(spec, templates, index):
    rng = np.random.default_rng([spec.seed, 2, index])
    clusters, params = [], []
    for cid, t in enumerate(templates, start=1):
        if spec.missing_rate and rng.uniform() < spec.missing_rate:
            clusters.append(FiberCluster(cid))
            params.append(None)
            continue
        length = t["length"] * max(0.2, 1.0 + spec.length_cv * rng.standard_normal())
        sigma = t["sigma"] * max(0.2, 1.0 + spec.sigma_cv * rng.standard_normal())
        nos = max(1, int(round(t["nos"] * math.exp(spec.nos_cv * rng.standard_normal()))))
        fa = t["fa"] + 0.02 * rng.standard_normal()
        md = t["md"] + 3e-5 * rng.standard_normal()
        bundle = BundleSpec(
            length=length,
            curvature=t["curvature"],
            sigma=sigma,
            n_streamlines=nos,
            n_points=spec.n_points,
            seed=int(rng.integers(2**63)),
            center=t["center"],
            direction=t["direction"],
            fa=(fa, 0.05),
            md=(md, 5e-5),
            cluster_id=cid,
        )
        clusters.append(gen_bundle(bundle))
        params.append({"length": length, "sigma": sigma, "n_streamlines": nos, "fa": fa, "md": md})
    for cid in range(spec.n_clusters + 1, spec.total_clusters + 1):
        clusters.append(FiberCluster(cid))
    return clusters, params


def model_inputs(subjects, measure):
    """Subjects x clusters matrix of one measure as the models consume it (row-wise max-min scaled)."""
    kind = MeasureKind.parse(measure)
    rows = []
    for subject in subjects:
        vec = extract_features(subject)[kind.base]
        if kind.normalized:
            vec = brain_size_normalize(vec, missing_mask(subject))
        rows.append(vec)
    return minmax_rows(np.vstack(rows))


def gen_cohort(spec, out_dir=None):
    """Generate subjects, their phenotypes and a ground-truth record.

    When ``out_dir`` is given the cohort is also written there: one directory
    per subject under ``subjects/``, ``phenotypes.csv``, ``ground_truth.json``
    and ``layout.cfg``.
    """
    templates = _templates(spec)
    ids = [f"sub-{i + 1:04d}" for i in range(spec.n_subjects)]
    all_clusters, all_params = [], []
    for i in range(spec.n_subjects):
        clusters, params = _subject_clusters(spec, templates, i)
        all_clusters.append(clusters)
        all_params.append(params)
    bare = [SubjectData(sid, cl) for sid, cl in zip(ids, all_clusters)]

    pheno_specs = spec.phenotype_specs()
    inputs = {}
    values, noise_sds = {}, {}
    noise_rng = np.random.default_rng([spec.seed, 3])
    for name in sorted(pheno_specs):
        ps = pheno_specs[name]
        signal = np.zeros(spec.n_subjects)
        for (measure, cid), beta in sorted(ps.coefficients.items()):
            if measure not in inputs:
                inputs[measure] = model_inputs(bare, measure)
            signal += beta * inputs[measure][:, cid - 1]
        noise = noise_rng.standard_normal(spec.n_subjects)
        sig_sd = float(signal.std())
        if ps.noise_sd is not None:
            noise_sd = ps.noise_sd
        elif sig_sd == 0:
            noise_sd = 1.0
        elif ps.ceiling_r is not None:
            # noise uncorrelated with the signal in-sample, so corr(signal, target) equals the ceiling exactly
            centered = signal - signal.mean()
            noise = noise - noise.mean()
            noise -= centered * (noise @ centered) / (centered @ centered)
            noise /= noise.std()
            noise_sd = sig_sd * math.sqrt(1.0 / ps.ceiling_r**2 - 1.0)
        else:
            noise_sd = 0.0
        values[name] = ps.offset + signal + noise_sd * noise
        noise_sds[name] = noise_sd

    # sex: thresholded logistic score of the standardized first phenotype plus noise
    first = values[sorted(values)[0]] if values else np.zeros(spec.n_subjects)
    score = (first - first.mean()) / (first.std() or 1.0) + 0.5 * noise_rng.standard_normal(spec.n_subjects)
    sex = (1.0 / (1.0 + np.exp(-3.0 * score)) >= 0.5).astype(int)

    subjects = []
    for i, sid in enumerate(ids):
        rec = PhenotypeRecord(
            sex=int(sex[i]),
            **{name: float(values[name][i]) for name in ("age", "tpvt", "torrt", "tfat") if name in values},
        )
        subjects.append(SubjectData(sid, all_clusters[i], rec))

    truth = {
        "spec": _spec_dict(spec),
        "templates": templates,
        "coefficients": {
            name: [[m, cid, beta] for (m, cid), beta in sorted(ps.coefficients.items())]
            for name, ps in pheno_specs.items()
        },
        "noise_sd": noise_sds,
        "bundles": {sid: all_params[i] for i, sid in enumerate(ids)},
    }
    cohort = Cohort(subjects, truth)
    if out_dir is not None:
        write_cohort(cohort, out_dir, spec)
    return cohort


def _spec_dict(spec):
    d = asdict(spec)
    d.pop("phenotypes", None)
    return d


def write_cohort(cohort, out_dir, spec):
    root = Path(out_dir)
    layout = LayoutConfig(n_clusters=spec.total_clusters)
    for s in cohort.subjects:
        write_subject(s, root / "subjects" / s.subject_id, layout)
    (root / "phenotypes.csv").write_bytes(write_phenotypes({s.subject_id: s.phenotypes for s in cohort.subjects}))
    (root / "ground_truth.json").write_text(json.dumps(cohort.truth, indent=1, sort_keys=True) + "\n")
    (root / "layout.cfg").write_text(f"n_clusters = {spec.total_clusters}\n")


_SPEC_KEYS = {
    "n_subjects": int,
    "n_clusters": int,
    "pad_to": int,
    "seed": int,
    "n_points": int,
    "length_cv": float,
    "sigma_cv": float,
    "nos_cv": float,
    "missing_rate": float,
    "ceiling_r": float,
}


def cohort_spec_from_config(raw, seed=None):
    """Build a CohortSpec from a parsed flat config dict."""
    unknown = [k for k in raw if k not in _SPEC_KEYS and k not in ("planted_clusters", "planted_measures", "length_range", "sigma_range", "nos_range")]
    if unknown:
        raise ConfigError(f"unknown cohort config keys: {', '.join(sorted(unknown))}")
    kwargs = {}
    try:
        for key, conv in _SPEC_KEYS.items():
            if key in raw:
                kwargs[key] = conv(raw[key].strip())
        if "planted_measures" in raw:
            kwargs["planted_measures"] = tuple(m.strip() for m in raw["planted_measures"].split(",") if m.strip())
        if "planted_clusters" in raw:
            kwargs["planted_clusters"] = tuple(int(c) for c in raw["planted_clusters"].split(",") if c.strip())
        for key, conv in (("length_range", float), ("sigma_range", float), ("nos_range", int)):
            if key in raw:
                lo, hi = (conv(x) for x in raw[key].split(","))
                kwargs[key] = (lo, hi)
    except ValueError as exc:
        raise ConfigError(f"invalid cohort config value: {exc}")
    if seed is not None:
        kwargs["seed"] = int(seed)
    if "seed" not in kwargs:
        raise ConfigError("cohort config needs a seed (config key or --seed)")
    spec = CohortSpec(**kwargs)
    try:
        for m in spec.planted_measures:
            MeasureKind.parse(m)
    except InvalidInputError as exc:
        raise ConfigError(str(exc))
    return spec
