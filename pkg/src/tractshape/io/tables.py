"""CSV persistence for phenotype tables and per-measure feature matrices."""

import csv
import io
import math

import numpy as np

from ..errors import CsvFormatError
from .cluster import N_CLUSTERS, PhenotypeRecord

PHENOTYPE_COLUMNS = ["subject_id", "sex", "age", "tpvt", "torrt", "tfat"]
_SEX = {"F": 0, "M": 1, "0": 0, "1": 1}


def _text(data):
    if isinstance(data, (bytes, bytearray)):
        try:
            return bytes(data).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CsvFormatError(f"CSV is not valid UTF-8: {exc}")
    return data


def load_phenotypes(data, age_range=(0.0, 120.0)):
    """Parse a phenotype CSV into ``{subject_id: PhenotypeRecord}``."""
    reader = csv.reader(io.StringIO(_text(data)))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != PHENOTYPE_COLUMNS:
        raise CsvFormatError(f"phenotype header must be {','.join(PHENOTYPE_COLUMNS)}", row=1)

    records = {}
    for rowno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(PHENOTYPE_COLUMNS):
            raise CsvFormatError(f"row {rowno}: expected {len(PHENOTYPE_COLUMNS)} cells, got {len(row)}", row=rowno)
        sid = row[0].strip()
        if not sid:
            raise CsvFormatError(f"row {rowno}: empty subject_id", row=rowno)
        if sid in records:
            raise CsvFormatError(f"row {rowno}: duplicate subject_id {sid!r}", row=rowno)

        sex_cell = row[1].strip()
        if sex_cell and sex_cell.upper() not in _SEX:
            raise CsvFormatError(f"row {rowno}: cannot parse sex {sex_cell!r}", row=rowno)
        sex = _SEX[sex_cell.upper()] if sex_cell else None

        nums = {}
        for name, cell in zip(PHENOTYPE_COLUMNS[2:], row[2:]):
            cell = cell.strip()
            if not cell:
                nums[name] = None
                continue
            try:
                value = float(cell)
            except ValueError:
                raise CsvFormatError(f"row {rowno}: cannot parse {name} value {cell!r}", row=rowno)
            if not math.isfinite(value):
                raise CsvFormatError(f"row {rowno}: non-finite {name} value {cell!r}", row=rowno)
            nums[name] = value
        age = nums["age"]
        if age is not None and not (age_range[0] <= age <= age_range[1]):
            raise CsvFormatError(f"row {rowno}: age {age} outside plausible range {age_range}", row=rowno)
        records[sid] = PhenotypeRecord(sex=sex, **nums)
    return records


def write_phenotypes(records):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PHENOTYPE_COLUMNS)
    for sid, rec in records.items():
        cells = [sid, "" if rec.sex is None else ("M" if rec.sex == 1 else "F")]
        for name in PHENOTYPE_COLUMNS[2:]:
            value = getattr(rec, name)
            cells.append("" if value is None else repr(float(value)))
        w.writerow(cells)
    return buf.getvalue().encode("utf-8")


def cluster_columns(n):
    return [f"c{i:04d}" for i in range(1, n + 1)]


def write_feature_csv(matrix, measure=None):
    """Serialise a FeatureMatrix; floats use 17 significant digits so reading back is lossless."""
    from ..measures import MeasureKind

    if measure is not None and MeasureKind.parse(str(measure)) != matrix.measure:
        raise CsvFormatError(f"matrix holds {matrix.measure}, not {measure}")
    buf = io.StringIO()
    buf.write(",".join(["subject_id"] + cluster_columns(matrix.n_clusters)) + "\n")
    for sid, row in zip(matrix.subject_ids, matrix.values):
        buf.write(sid + "," + ",".join(f"{x:.17g}" for x in row) + "\n")
    return buf.getvalue().encode("utf-8")


def read_feature_csv(data, measure, n_clusters=N_CLUSTERS):
    """Parse a feature CSV.  ``n_clusters=None`` accepts any contiguous ``c0001..`` header."""
    from ..measures import FeatureMatrix, MeasureKind

    reader = csv.reader(io.StringIO(_text(data)))
    header = next(reader, None)
    if not header or header[0] != "subject_id":
        raise CsvFormatError("feature CSV must start with a subject_id column", row=1)
    n = len(header) - 1
    if n_clusters is not None and n != n_clusters:
        raise CsvFormatError(f"expected {n_clusters} cluster columns, found {n}", row=1)
    if header[1:] != cluster_columns(n):
        raise CsvFormatError("cluster columns must be c0001..cNNNN in order", row=1)

    ids, rows = [], []
    for rowno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != n + 1:
            raise CsvFormatError(f"row {rowno}: expected {n + 1} cells, got {len(row)}", row=rowno)
        try:
            rows.append([float(x) for x in row[1:]])
        except ValueError as exc:
            raise CsvFormatError(f"row {rowno}: {exc}", row=rowno)
        ids.append(row[0])
    values = np.array(rows, dtype=np.float64).reshape(len(ids), n)
    try:
        return FeatureMatrix(MeasureKind.parse(str(measure)), tuple(ids), values)
    except ValueError as exc:
        raise CsvFormatError(str(exc))
