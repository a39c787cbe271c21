"""In-memory fiber clusters and the on-disk subject directory layout."""

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..errors import AlignmentError, InvalidInputError
from .tck import parse_tck, parse_tsf, write_tck, write_tsf

N_CLUSTERS = 1516
CHANNELS = ("FA", "MD")


def as_streamline(points, index=None):
    """Validate and return a read-only ``(n, 3)`` float array."""
    pts = np.asarray(points)
    if pts.dtype.kind != "f":
        pts = pts.astype(np.float64)
    where = "" if index is None else f" {index}"
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise InvalidInputError(f"streamline{where} must have shape (n, 3), got {pts.shape}")
    if len(pts) == 0:
        raise InvalidInputError(f"streamline{where} has no points")
    if not np.isfinite(pts).all():
        raise InvalidInputError(f"streamline{where} has non-finite coordinates")
    pts = pts.copy()
    pts.flags.writeable = False
    return pts


@dataclass(frozen=True, eq=False)
class FiberCluster:
    """Streamlines of one atlas cluster plus aligned per-point scalar channels.

    A cluster with no streamlines is a *missing* cluster.
    """

    cluster_id: int
    streamlines: Tuple[np.ndarray, ...] = ()
    scalars: Dict[str, Tuple[np.ndarray, ...]] = field(default_factory=dict)

    def __post_init__(self):
        if int(self.cluster_id) < 1:
            raise InvalidInputError(f"cluster_id must be >= 1, got {self.cluster_id}")
        lines = tuple(as_streamline(s, i) for i, s in enumerate(self.streamlines))
        object.__setattr__(self, "streamlines", lines)
        channels = {}
        for name, values in self.scalars.items():
            channels[name] = _aligned(lines, name, values)
        object.__setattr__(self, "scalars", channels)

    @property
    def n_streamlines(self):
        return len(self.streamlines)

    @property
    def missing(self):
        return not self.streamlines

    def __eq__(self, other):
        if not isinstance(other, FiberCluster):
            return NotImplemented
        if self.cluster_id != other.cluster_id or len(self.streamlines) != len(other.streamlines):
            return False
        if set(self.scalars) != set(other.scalars):
            return False
        if not all(np.array_equal(a, b) for a, b in zip(self.streamlines, other.streamlines)):
            return False
        return all(
            np.array_equal(a, b)
            for name in self.scalars
            for a, b in zip(self.scalars[name], other.scalars[name])
        )

    __hash__ = None


def _aligned(streamlines, name, values):
    values = list(values)
    if len(values) != len(streamlines):
        raise AlignmentError(
            f"channel {name!r} has {len(values)} value lists for {len(streamlines)} streamlines"
        )
    out = []
    for i, (s, v) in enumerate(zip(streamlines, values)):
        arr = np.asarray(v)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        arr = arr.reshape(-1).copy()
        if len(arr) != len(s):
            raise AlignmentError(
                f"channel {name!r}: streamline {i} has {len(s)} points but {len(arr)} values",
                index=i,
            )
        if not np.isfinite(arr).all():
            raise InvalidInputError(f"channel {name!r}: streamline {i} has non-finite values")
        arr.flags.writeable = False
        out.append(arr)
    return tuple(out)


def attach_scalars(cluster, name, values):
    """Return a copy of ``cluster`` with channel ``name`` set (replacing any previous one)."""
    channels = dict(cluster.scalars)
    channels[name] = _aligned(cluster.streamlines, name, values)
    return FiberCluster(cluster.cluster_id, cluster.streamlines, channels)


@dataclass(frozen=True)
class PhenotypeRecord:
    sex: Optional[int] = None
    age: Optional[float] = None
    tpvt: Optional[float] = None
    torrt: Optional[float] = None
    tfat: Optional[float] = None

    def get(self, target):
        return getattr(self, target)


@dataclass(frozen=True, eq=False)
class SubjectData:
    subject_id: str
    clusters: List[FiberCluster]
    phenotypes: PhenotypeRecord = PhenotypeRecord()

    def __post_init__(self):
        if not self.subject_id:
            raise InvalidInputError("subject_id must be non-empty")
        for i, c in enumerate(self.clusters):
            if c.cluster_id != i + 1:
                raise InvalidInputError(f"cluster slot {i} holds cluster_id {c.cluster_id}")

    @property
    def n_clusters(self):
        return len(self.clusters)

    def __eq__(self, other):
        if not isinstance(other, SubjectData):
            return NotImplemented
        return (
            self.subject_id == other.subject_id
            and self.phenotypes == other.phenotypes
            and self.clusters == other.clusters
        )

    __hash__ = None


@dataclass(frozen=True)
class LayoutConfig:
    """Where cluster geometry and scalar files live inside a subject directory."""

    n_clusters: int = N_CLUSTERS
    clusters_dir: str = "clusters"
    scalars_dir: str = "scalars"
    channels: Tuple[str, ...] = CHANNELS

    def cluster_name(self, cid):
        return f"cluster_{cid:05d}.tck"

    def scalar_name(self, cid, channel):
        return f"cluster_{cid:05d}.{channel.lower()}.tsf"


def _read(path):
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror or exc}") from exc


def load_subject(dir_path, layout=None, subject_id=None, phenotypes=None):
    """Load every cluster of one subject; absent cluster files become missing clusters."""
    layout = layout or LayoutConfig()
    root = Path(dir_path)
    cdir = root / layout.clusters_dir
    sdir = root / layout.scalars_dir

    known_scalars = {
        layout.scalar_name(cid, ch): (cid, ch)
        for cid in range(1, layout.n_clusters + 1)
        for ch in layout.channels
    }
    if sdir.is_dir():
        for name in sorted(os.listdir(sdir)):
            if not name.endswith(".tsf"):
                continue
            if name not in known_scalars:
                raise InvalidInputError(f"unexpected scalar file {sdir / name}")
            cid, _ = known_scalars[name]
            if not (cdir / layout.cluster_name(cid)).is_file():
                raise InvalidInputError(
                    f"scalar file {sdir / name} has no matching cluster file {layout.cluster_name(cid)}"
                )

    clusters = []
    for cid in range(1, layout.n_clusters + 1):
        path = cdir / layout.cluster_name(cid)
        if not path.is_file():
            clusters.append(FiberCluster(cid))
            continue
        streamlines = parse_tck(_read(path))
        channels = {}
        for ch in layout.channels:
            spath = sdir / layout.scalar_name(cid, ch)
            if spath.is_file():
                values = parse_tsf(_read(spath))
                try:
                    channels[ch] = _aligned(streamlines, ch, values)
                except AlignmentError as exc:
                    raise AlignmentError(f"{spath}: {exc}", index=exc.index) from exc
        clusters.append(FiberCluster(cid, streamlines, channels))

    return SubjectData(subject_id or root.name, clusters, phenotypes or PhenotypeRecord())


def write_subject(subject, dir_path, layout=None):
    """Write a subject in the directory layout read by :func:`load_subject`."""
    layout = layout or LayoutConfig(n_clusters=subject.n_clusters)
    root = Path(dir_path)
    cdir = root / layout.clusters_dir
    sdir = root / layout.scalars_dir
    cdir.mkdir(parents=True, exist_ok=True)
    for c in subject.clusters:
        if c.missing:
            continue
        (cdir / layout.cluster_name(c.cluster_id)).write_bytes(write_tck(c.streamlines))
        for ch, values in c.scalars.items():
            sdir.mkdir(parents=True, exist_ok=True)
            (sdir / layout.scalar_name(c.cluster_id, ch)).write_bytes(write_tsf(values))
