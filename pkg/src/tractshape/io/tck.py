"""Reading and writing MRtrix-style ``.tck`` track files and ``.tsf`` scalar files.

Both formats share the same layout: a text header of ``key: value`` lines that
starts with a magic line and ends with ``END``, followed (at the byte offset
given by ``file: . <offset>``) by a float32 payload.  Tracks are stored as
xyz triplets; scalar files store one value per point.  A NaN record closes a
streamline, an Inf record closes the stream.
"""

import logging

import numpy as np

from ..errors import (
    CorruptDataError,
    InvalidInputError,
    MalformedHeaderError,
    TruncatedDataError,
    UnsupportedFormatError,
)

log = logging.getLogger(__name__)

TCK_MAGIC = "mrtrix tracks"
TSF_MAGIC = "mrtrix track scalars"

_DTYPES = {"Float32LE": "<f4", "Float32BE": ">f4"}


def _parse_header(data, magic):
    """Return (fields, header_end) where header_end is the byte after ``END\\n``."""
    pos = 0
    lines = []
    while True:
        nl = data.find(b"\n", pos)
        if nl < 0:
            raise MalformedHeaderError("header is not terminated by an END line")
        raw = data[pos:nl]
        pos = nl + 1
        try:
            line = raw.decode("utf-8").rstrip("\r")
        except UnicodeDecodeError:
            raise MalformedHeaderError(f"non-text byte in header line {len(lines) + 1}")
        if not lines:
            if line != magic:
                raise MalformedHeaderError(f"expected magic line {magic!r}, got {line[:40]!r}")
            lines.append(line)
            continue
        if line == "END":
            break
        lines.append(line)

    fields = {}
    for line in lines[1:]:
        if not line.strip():
            continue
        key, sep, value = line.partition(":")
        if not sep:
            raise MalformedHeaderError(f"header line without ':' separator: {line!r}")
        fields.setdefault(key.strip(), []).append(value.strip())
    return fields, pos


def _payload(data, magic, width):
    """Decode the header and return the payload as an (m, width) float array."""
    data = bytes(data)
    fields, header_end = _parse_header(data, magic)

    if "datatype" not in fields:
        raise MalformedHeaderError("header has no datatype field")
    datatype = fields["datatype"][-1]
    if datatype not in _DTYPES:
        raise UnsupportedFormatError(f"unsupported datatype {datatype!r}")

    if "file" not in fields:
        raise MalformedHeaderError("header has no 'file: . <offset>' field")
    parts = fields["file"][-1].split()
    if len(parts) != 2 or parts[0] != ".":
        raise MalformedHeaderError(f"cannot interpret file field {fields['file'][-1]!r}")
    try:
        offset = int(parts[1])
    except ValueError:
        raise MalformedHeaderError(f"non-integer data offset {parts[1]!r}")
    if offset < header_end:
        raise MalformedHeaderError(f"data offset {offset} lies inside the header ({header_end} bytes)")
    if offset > len(data):
        raise TruncatedDataError(f"data offset {offset} beyond end of file ({len(data)} bytes)")

    record = 4 * width
    body = data[offset:]
    whole = len(body) // record
    values = np.frombuffer(body[: whole * record], dtype=_DTYPES[datatype]).reshape(whole, width)

    inf_rows = np.all(np.isposinf(values), axis=1)
    hits = np.flatnonzero(inf_rows)
    if hits.size == 0:
        if len(body) % record:
            raise TruncatedDataError(f"payload ends with a partial record ({len(body) % record} stray bytes)")
        raise TruncatedDataError("payload has no Inf terminator")
    values = values[: hits[0]]
    return fields, values.astype(np.float32)


def _split(values, width, what):
    nan_rows = np.all(np.isnan(values), axis=1)
    bad = ~nan_rows & ~np.all(np.isfinite(values), axis=1)
    if bad.any():
        raise CorruptDataError(f"non-finite {what} at record {int(np.flatnonzero(bad)[0])}")

    out = []
    start = 0
    for stop in np.flatnonzero(nan_rows):
        if stop == start:
            raise CorruptDataError(f"empty streamline before record {int(stop)}")
        out.append(values[start:stop])
        start = stop + 1
    if start < len(values):
        out.append(values[start:])
    return out


def _check_count(fields, n):
    if "count" in fields:
        try:
            declared = int(fields["count"][-1])
        except ValueError:
            raise MalformedHeaderError(f"non-integer count {fields['count'][-1]!r}")
        if declared != n:
            log.warning("header declares count %d but payload holds %d streamlines", declared, n)


def parse_tck(data):
    """Parse a track file into a list of ``(n_points, 3)`` float32 arrays."""
    fields, values = _payload(data, TCK_MAGIC, 3)
    streamlines = [s.copy() for s in _split(values, 3, "coordinate")]
    _check_count(fields, len(streamlines))
    return streamlines


def parse_tsf(data):
    """Parse a track-scalar file into a list of 1-D float32 arrays, one per streamline."""
    fields, values = _payload(data, TSF_MAGIC, 1)
    scalars = [s[:, 0].copy() for s in _split(values, 1, "scalar value")]
    _check_count(fields, len(scalars))
    return scalars


def _header(magic, count, extra=None):
    base = [magic, "datatype: Float32LE", f"count: {count}"]
    for key, value in (extra or {}).items():
        base.append(f"{key}: {value}")
    # the offset is part of the header it points past, so iterate until stable
    offset = 0
    while True:
        text = "\n".join(base + [f"file: . {offset}", "END"]) + "\n"
        size = len(text.encode("utf-8"))
        if size == offset:
            return text.encode("utf-8")
        offset = size


def _encode(magic, chunks, width, extra):
    header = _header(magic, len(chunks), extra)
    sep = np.full((1, width), np.nan, dtype="<f4")
    parts = []
    limit = np.finfo(np.float32).max
    for i, chunk in enumerate(chunks):
        if np.abs(chunk).max() > limit:
            raise InvalidInputError(f"record {i} has values outside the float32 range")
        parts.append(chunk.astype("<f4"))
        parts.append(sep)
    parts.append(np.full((1, width), np.inf, dtype="<f4"))
    return header + np.concatenate(parts).tobytes()


def write_tck(streamlines, extra_fields=None):
    """Serialise streamlines as Float32LE track-file bytes."""
    chunks = []
    for i, s in enumerate(streamlines):
        pts = np.asarray(s, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise InvalidInputError(f"streamline {i} must have shape (n, 3), got {pts.shape}")
        if len(pts) == 0:
            raise InvalidInputError(f"streamline {i} is empty")
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError(f"streamline {i} has non-finite coordinates")
        chunks.append(pts)
    return _encode(TCK_MAGIC, chunks, 3, extra_fields)


def write_tsf(scalars, extra_fields=None):
    """Serialise per-streamline scalar lists as Float32LE track-scalar bytes."""
    chunks = []
    for i, v in enumerate(scalars):
        vals = np.asarray(v, dtype=np.float64).reshape(-1)
        if len(vals) == 0:
            raise InvalidInputError(f"scalar list {i} is empty")
        if not np.all(np.isfinite(vals)):
            raise InvalidInputError(f"scalar list {i} has non-finite values")
        chunks.append(vals[:, None])
    return _encode(TSF_MAGIC, chunks, 1, extra_fields)
