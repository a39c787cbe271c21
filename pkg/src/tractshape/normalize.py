"""Brain-size normalization and per-subject max-min scaling of measure vectors."""

import numpy as np

from .errors import NormalizationError
from .measures import MeasureKind


def brain_size_normalize(values, missing_mask, kind=None):
    """Divide a measure vector by its mean over the subject's non-missing clusters.

    Missing clusters stay at zero.  Returns the normalized vector, or a
    ``(vector, kind)`` pair when ``kind`` is given.
    """
    v = np.asarray(values, dtype=np.float64)
    missing = np.asarray(missing_mask, dtype=bool)
    if missing.shape != v.shape:
        raise NormalizationError(f"mask shape {missing.shape} does not match vector shape {v.shape}")
    present = ~missing
    if not present.any():
        raise NormalizationError("all clusters are missing; no reference value")
    ref = v[present].mean()
    if ref <= 0:
        if np.any(v[present] > 0) or ref < 0:
            raise NormalizationError(f"degenerate reference value {ref!r}")
        out = np.zeros_like(v)
    else:
        out = np.where(present, v / ref, 0.0)
    if kind is None:
        return out
    return out, MeasureKind(kind).to_normalized()


def minmax_normalize(values):
    """Rescale to [0, 1] over all entries; a constant vector maps to zeros."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


def minmax_rows(matrix):
    """Row-wise :func:`minmax_normalize` for a subjects x clusters array."""
    m = np.asarray(matrix, dtype=np.float64)
    lo = m.min(axis=1, keepdims=True)
    span = m.max(axis=1, keepdims=True) - lo
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (m - lo) / safe, 0.0)
