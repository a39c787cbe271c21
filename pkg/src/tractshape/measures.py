"""Per-cluster microstructure, connectivity and shape measures.

Shape measures follow the usual bundle-shape conventions: length is the mean
streamline arc length, diameter is ``2 * sqrt(e_max)`` where ``e_max`` is the
largest eigenvalue of the sample covariance of streamline midpoints, and
elongation is length over diameter.
"""

import enum
import math
from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

import numpy as np

from .errors import InvalidInputError, MissingChannelError
from .io.cluster import CHANNELS

ELONGATION_EPS = 1e-9


class MeasureKind(enum.Enum):
    FA = "FA"
    MD = "MD"
    NOS = "NoS"
    LENGTH = "Length"
    DIAMETER = "Diameter"
    ELONGATION = "Elongation"
    NOS_N = "NoS-N"
    LENGTH_N = "Length-N"
    DIAMETER_N = "Diameter-N"
    ELONGATION_N = "Elongation-N"

    @classmethod
    def parse(cls, name):
        key = str(name).strip()
        for kind in cls:
            if kind.value.lower() == key.lower() or kind.name.lower() == key.lower():
                return kind
        raise InvalidInputError(f"unknown measure {name!r}")

    @property
    def normalized(self):
        return self.value.endswith("-N")

    @property
    def base(self):
        return MeasureKind(self.value[:-2]) if self.normalized else self

    @property
    def category(self):
        base = self.base
        if base in (MeasureKind.FA, MeasureKind.MD):
            return "Microstructure"
        if base is MeasureKind.NOS:
            return "Connectivity"
        return "Shape"

    def to_normalized(self):
        if self.normalized:
            return self
        if self.category == "Microstructure":
            raise InvalidInputError(f"{self.value} has no brain-size normalized variant")
        return MeasureKind(self.value + "-N")

    def __str__(self):
        return self.value


RAW_MEASURES = (
    MeasureKind.FA,
    MeasureKind.MD,
    MeasureKind.NOS,
    MeasureKind.LENGTH,
    MeasureKind.DIAMETER,
    MeasureKind.ELONGATION,
)
NORMALIZABLE = (MeasureKind.NOS, MeasureKind.LENGTH, MeasureKind.DIAMETER, MeasureKind.ELONGATION)


@dataclass(frozen=True)
class ClusterMeasures:
    length: float = 0.0
    diameter: float = 0.0
    elongation: float = 0.0
    nos: int = 0
    fa: float = 0.0
    md: float = 0.0


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """One measure for many subjects: ``values[i, j]`` is cluster ``j + 1`` of ``subject_ids[i]``."""

    measure: MeasureKind
    subject_ids: Tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        ids = tuple(str(s) for s in self.subject_ids)
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2 or vals.shape[0] != len(ids):
            raise InvalidInputError(f"values shape {vals.shape} does not match {len(ids)} subjects")
        if len(set(ids)) != len(ids):
            raise InvalidInputError("duplicate subject ids in feature matrix")
        if not np.all(np.isfinite(vals)):
            raise InvalidInputError("feature matrix contains non-finite values")
        object.__setattr__(self, "subject_ids", ids)
        object.__setattr__(self, "values", vals)

    @property
    def n_clusters(self):
        return self.values.shape[1]

    def rows(self, ids):
        index = {s: i for i, s in enumerate(self.subject_ids)}
        missing = [s for s in ids if s not in index]
        if missing:
            raise InvalidInputError(f"subjects missing from {self.measure} features: {missing[:10]}")
        return self.values[[index[s] for s in ids]]

    def __eq__(self, other):
        if not isinstance(other, FeatureMatrix):
            return NotImplemented
        return (
            self.measure == other.measure
            and self.subject_ids == other.subject_ids
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


def streamline_length(points):
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) < 2:
        return 0.0
    return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))


def streamline_midpoint(points):
    """Point at half the arc length, interpolated linearly inside its segment."""
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) == 1:
        return pts[0].copy()
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate(([0.0], np.cumsum(seg)))
    half = cum[-1] / 2.0
    if cum[-1] == 0.0:
        return pts[0].copy()
    j = int(np.searchsorted(cum, half, side="right")) - 1
    j = min(max(j, 0), len(seg) - 1)
    t = (half - cum[j]) / seg[j] if seg[j] > 0 else 0.0
    return pts[j] + t * (pts[j + 1] - pts[j])


def _lengths_and_midpoints(streamlines):
    """Vectorised arc lengths and arc-length midpoints for a list of streamlines."""
    counts = np.array([len(s) for s in streamlines])
    pts = np.concatenate([np.asarray(s, dtype=np.float64) for s in streamlines])
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    ends = starts + counts - 1

    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    seg[starts[1:] - 1] = 0.0  # joins between consecutive streamlines
    # arc length is non-decreasing across the whole concatenation, so one
    # searchsorted locates every midpoint segment
    cum = np.zeros(len(pts))
    cum[1:] = np.cumsum(seg)
    lengths = cum[ends] - cum[starts]

    mids = pts[starts].copy()
    multi = (counts > 1) & (lengths > 0)
    if multi.any():
        s, e = starts[multi], ends[multi]
        target = cum[s] + lengths[multi] / 2.0
        j = np.clip(np.searchsorted(cum, target, side="right") - 1, s, e - 1)
        seglen = seg[j]
        safe = np.where(seglen > 0, seglen, 1.0)
        t = np.where(seglen > 0, (target - cum[j]) / safe, 0.0)
        mids[multi] = pts[j] + t[:, None] * (pts[j + 1] - pts[j])
    return lengths, mids


def sym3_eig_max(m):
    """Largest eigenvalue of a symmetric 3x3 matrix in closed (trigonometric) form."""
    a = np.asarray(m, dtype=np.float64)
    if a.shape != (3, 3):
        raise InvalidInputError(f"expected a 3x3 matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("matrix has non-finite entries")
    scale = float(np.max(np.abs(a)))
    if scale == 0.0:
        return 0.0
    if np.max(np.abs(a - a.T)) > 1e-9 * scale:
        raise InvalidInputError("matrix is not symmetric")
    a = (a + a.T) / (2.0 * scale)

    off = a[0, 1] ** 2 + a[0, 2] ** 2 + a[1, 2] ** 2
    if off == 0.0:
        return float(np.max(np.diag(a))) * scale

    q = np.trace(a) / 3.0
    b = a - q * np.eye(3)
    p = math.sqrt((b[0, 0] ** 2 + b[1, 1] ** 2 + b[2, 2] ** 2 + 2.0 * off) / 6.0)
    b /= p
    r = (
        b[0, 0] * (b[1, 1] * b[2, 2] - b[1, 2] * b[2, 1])
        - b[0, 1] * (b[1, 0] * b[2, 2] - b[1, 2] * b[2, 0])
        + b[0, 2] * (b[1, 0] * b[2, 1] - b[1, 1] * b[2, 0])
    ) / 2.0
    phi = math.acos(min(1.0, max(-1.0, r))) / 3.0
    top = q + 2.0 * p * math.cos(phi)
    low = q + 2.0 * p * math.cos(phi + 2.0 * math.pi / 3.0)
    mid = 3.0 * q - top - low

    if top - mid < mid - low:
        # top pair nearly degenerate: acos loses half the digits there, so
        # deflate the well separated smallest eigenvector and solve the 2x2 block
        top = _top_of_complement(a, low)
    return float(top) * scale


def _top_of_complement(a, low):
    shifted = a - low * np.eye(3)
    rows = shifted
    cands = [np.cross(rows[0], rows[1]), np.cross(rows[0], rows[2]), np.cross(rows[1], rows[2])]
    v = max(cands, key=lambda c: float(c @ c))
    norm = math.sqrt(float(v @ v))
    if norm == 0.0:
        # shifted matrix has rank <= 1: the two larger eigenvalues are equal to low plus trace
        return low + float(np.trace(shifted))
    v = v / norm
    helper = np.eye(3)[int(np.argmin(np.abs(v)))]
    u = np.cross(v, helper)
    u /= math.sqrt(float(u @ u))
    w = np.cross(v, u)
    auu, aww, auw = u @ a @ u, w @ a @ w, u @ a @ w
    return (auu + aww) / 2.0 + math.hypot((auu - aww) / 2.0, auw)


def _covariance_eig_max(mids):
    centered = mids - mids.mean(axis=0)
    cov = centered.T @ centered / (len(mids) - 1)
    return max(sym3_eig_max(cov), 0.0)


def midpoint_covariance(cluster):
    """Sample covariance (denominator n - 1) of streamline midpoints."""
    if cluster.n_streamlines < 2:
        return np.zeros((3, 3))
    _, mids = _lengths_and_midpoints(cluster.streamlines)
    centered = mids - mids.mean(axis=0)
    return centered.T @ centered / (len(mids) - 1)


def _diameter_from_midpoints(mids):
    if len(mids) < 2:
        return 0.0
    return 2.0 * math.sqrt(_covariance_eig_max(mids))


def cluster_diameter(cluster):
    if cluster.n_streamlines < 2:
        return 0.0
    _, mids = _lengths_and_midpoints(cluster.streamlines)
    return _diameter_from_midpoints(mids)


def _elongation(mean_length, diameter, n):
    if n <= 1 or diameter <= ELONGATION_EPS:
        return 0.0
    return mean_length / diameter


def cluster_elongation(cluster):
    n = cluster.n_streamlines
    if n <= 1:
        return 0.0
    lengths, mids = _lengths_and_midpoints(cluster.streamlines)
    return _elongation(float(lengths.mean()), _diameter_from_midpoints(mids), n)


def cluster_scalar_mean(cluster, channel):
    """Mean of a scalar channel pooled over every point of every streamline."""
    if cluster.missing:
        return 0.0
    if channel not in cluster.scalars:
        raise MissingChannelError(f"cluster {cluster.cluster_id} has no {channel!r} channel")
    values = np.concatenate(cluster.scalars[channel]).astype(np.float64)
    return float(values.sum()) / len(values)


def cluster_measures(cluster, channels=CHANNELS):
    """All six measures of one cluster; missing clusters give all zeros.

    ``channels`` lists the scalar channels to average; omit one to leave its
    field at zero.
    """
    n = cluster.n_streamlines
    if n == 0:
        return ClusterMeasures()
    lengths, mids = _lengths_and_midpoints(cluster.streamlines)
    length = float(lengths.mean())
    diameter = _diameter_from_midpoints(mids) if n > 1 else 0.0
    fa = cluster_scalar_mean(cluster, "FA") if "FA" in channels else 0.0
    md = cluster_scalar_mean(cluster, "MD") if "MD" in channels else 0.0
    return ClusterMeasures(
        length=length,
        diameter=diameter,
        elongation=_elongation(length, diameter, n),
        nos=n,
        fa=fa,
        md=md,
    )


_FIELD = {
    MeasureKind.FA: "fa",
    MeasureKind.MD: "md",
    MeasureKind.NOS: "nos",
    MeasureKind.LENGTH: "length",
    MeasureKind.DIAMETER: "diameter",
    MeasureKind.ELONGATION: "elongation",
}


def extract_features(subject, channels=CHANNELS) -> Dict[MeasureKind, np.ndarray]:
    """Raw measure vectors for one subject; entry ``i`` belongs to cluster ``i + 1``."""
    per_cluster = [cluster_measures(c, channels) for c in subject.clusters]
    return {
        kind: np.array([float(getattr(m, attr)) for m in per_cluster])
        for kind, attr in _FIELD.items()
    }


def missing_mask(subject):
    return np.array([c.missing for c in subject.clusters])


def stack_features(ids: Sequence[str], vectors: Sequence[Dict[MeasureKind, np.ndarray]]):
    """Stack per-subject measure dictionaries into one FeatureMatrix per measure."""
    kinds = list(vectors[0]) if vectors else list(RAW_MEASURES)
    return {
        k: FeatureMatrix(k, tuple(ids), np.vstack([v[k] for v in vectors]) if vectors else np.zeros((0, 0)))
        for k in kinds
    }
