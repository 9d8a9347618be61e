"""Survey data model: records, datasets, table cells, and CSV ingestion.

A dataset holds a univariate positive outcome (e.g. salary), a pair of
categorical design codes (field, gender) treated as public, a stratum code
(equal to field in all supported designs), and sampling weights w with
optional inclusion probabilities pi (w = 1/pi).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field as dc_field

import numpy as np


class DataError(ValueError):
    """Invalid or inconsistent survey data."""


@dataclass(frozen=True)
class SurveyRecord:
    y: float
    field: object
    gender: object
    stratum: object
    w: float
    pi: float | None = None

    def __post_init__(self):
        if not (self.y > 0):
            raise DataError(f"outcome must be positive, got {self.y}")
        if not (self.w > 0):
            raise DataError(f"weight must be positive, got {self.w}")
        if self.pi is not None and not (0.0 < self.pi <= 1.0):
            raise DataError(f"inclusion probability must be in (0, 1], got {self.pi}")


@dataclass(frozen=True)
class CellId:
    """One cell of the F x G table layout.

    kind is one of "interior" (field, gender), "field_margin" (field, all
    genders), "gender_margin" (gender, all fields) or "grand".  For F=8, G=2
    there are 16 + 8 + 2 + 1 = 27 cells.
    """

    kind: str
    field: int | None = None
    gender: int | None = None

    def key(self):
        return (self.kind, self.field, self.gender)


def all_cells(n_fields, n_genders):
    """All cells in canonical order: interior, field margins, gender margins, grand."""
    cells = [CellId("interior", f, g) for f in range(n_fields) for g in range(n_genders)]
    cells += [CellId("field_margin", f, None) for f in range(n_fields)]
    cells += [CellId("gender_margin", None, g) for g in range(n_genders)]
    cells.append(CellId("grand"))
    return cells


def interior_cells(n_fields, n_genders):
    return [c for c in all_cells(n_fields, n_genders) if c.kind == "interior"]


class SurveyDataset:
    """Array-backed immutable survey sample.

    Categorical codes are stored as 0-based level indices together with the
    original labels.  The design matrix uses dummy coding with an explicit
    intercept; the first field and first gender levels are the references.
    """

    def __init__(self, y, field_idx, gender_idx, field_levels, gender_levels,
                 w, pi=None, stratum_idx=None, stratum_levels=None):
        self.y = np.asarray(y, dtype=np.float64)
        self.field_idx = np.asarray(field_idx, dtype=np.intp)
        self.gender_idx = np.asarray(gender_idx, dtype=np.intp)
        self.field_levels = list(field_levels)
        self.gender_levels = list(gender_levels)
        self.w = np.asarray(w, dtype=np.float64)
        self.pi = None if pi is None else np.asarray(pi, dtype=np.float64)
        if stratum_idx is None:
            self.stratum_idx = self.field_idx.copy()
            self.stratum_levels = list(field_levels)
        else:
            self.stratum_idx = np.asarray(stratum_idx, dtype=np.intp)
            self.stratum_levels = list(stratum_levels)
        self._validate()
        for arr in (self.y, self.field_idx, self.gender_idx, self.w,
                    self.stratum_idx) + (() if self.pi is None else (self.pi,)):
            arr.setflags(write=False)

    def _validate(self):
        n = self.n
        if n < 1:
            raise DataError("dataset must contain at least one record")
        for name, arr in [("field", self.field_idx), ("gender", self.gender_idx),
                          ("weight", self.w), ("stratum", self.stratum_idx)]:
            if len(arr) != n:
                raise DataError(f"{name} column length {len(arr)} != n {n}")
        if np.any(self.y <= 0) or not np.all(np.isfinite(self.y)):
            bad = int(np.flatnonzero(~((self.y > 0) & np.isfinite(self.y)))[0])
            raise DataError(f"record {bad}: outcome must be positive and finite")
        if np.any(self.w <= 0) or not np.all(np.isfinite(self.w)):
            bad = int(np.flatnonzero(~((self.w > 0) & np.isfinite(self.w)))[0])
            raise DataError(f"record {bad}: weight must be positive and finite")
        if self.pi is not None:
            ok = (self.pi > 0) & (self.pi <= 1.0)
            if not np.all(ok):
                bad = int(np.flatnonzero(~ok)[0])
                raise DataError(f"record {bad}: pi must be in (0, 1]")
        if self.field_idx.min() < 0 or self.field_idx.max() >= len(self.field_levels):
            raise DataError("field code out of declared range")
        if self.gender_idx.min() < 0 or self.gender_idx.max() >= len(self.gender_levels):
            raise DataError("gender code out of declared range")

    @property
    def n(self):
        return len(self.y)

    @property
    def n_fields(self):
        return len(self.field_levels)

    @property
    def n_genders(self):
        return len(self.gender_levels)

    @property
    def n_strata(self):
        return len(self.stratum_levels)

    def stratum_counts(self):
        return np.bincount(self.stratum_idx, minlength=self.n_strata)

    def design_matrix(self, interactions=False):
        """Intercept + dummy columns for field and gender (reference = level 0),
        optionally with field x gender interaction columns.
        """
        n, F, G = self.n, self.n_fields, self.n_genders
        cols = [np.ones(n)]
        for f in range(1, F):
            cols.append((self.field_idx == f).astype(np.float64))
        for g in range(1, G):
            cols.append((self.gender_idx == g).astype(np.float64))
        if interactions:
            for f in range(1, F):
                for g in range(1, G):
                    cols.append(((self.field_idx == f) & (self.gender_idx == g))
                                .astype(np.float64))
        X = np.column_stack(cols)
        if np.linalg.matrix_rank(X) < X.shape[1]:
            raise DataError("design matrix is rank deficient for this encoding")
        return X

    def cell_mask(self, cell):
        if cell.kind == "interior":
            return (self.field_idx == cell.field) & (self.gender_idx == cell.gender)
        if cell.kind == "field_margin":
            return self.field_idx == cell.field
        if cell.kind == "gender_margin":
            return self.gender_idx == cell.gender
        if cell.kind == "grand":
            return np.ones(self.n, dtype=bool)
        raise DataError(f"unknown cell kind {cell.kind!r}")

    def cells(self):
        return all_cells(self.n_fields, self.n_genders)

    def records(self):
        for i in range(self.n):
            yield SurveyRecord(
                y=float(self.y[i]),
                field=self.field_levels[self.field_idx[i]],
                gender=self.gender_levels[self.gender_idx[i]],
                stratum=self.stratum_levels[self.stratum_idx[i]],
                w=float(self.w[i]),
                pi=None if self.pi is None else float(self.pi[i]),
            )

    def replace(self, y=None, w=None, pi=None):
        """Copy with substituted outcome/weight columns (design columns shared)."""
        return SurveyDataset(
            y=self.y if y is None else y,
            field_idx=self.field_idx,
            gender_idx=self.gender_idx,
            field_levels=self.field_levels,
            gender_levels=self.gender_levels,
            w=self.w if w is None else w,
            pi=self.pi if pi is None else pi,
            stratum_idx=self.stratum_idx,
            stratum_levels=self.stratum_levels,
        )


DEFAULT_SCHEMA = {"y": "y", "field": "field", "gender": "gender",
                  "weight": "weight", "pi": "pi", "stratum": None}


def _parse_positive(value, what, row_num):
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise DataError(f"row {row_num}: cannot parse {what} value {value!r}")
    if not np.isfinite(x) or x <= 0:
        raise DataError(f"row {row_num}: {what} must be positive, got {value!r}")
    return x


def load_csv(path, schema=None):
    """Load a survey sample from a UTF-8 CSV file with a header row.

    schema maps the roles y/field/gender/weight/pi/stratum onto column names;
    at least one of weight and pi must be present.  If only pi is given,
    w = 1/pi; if only w is given, pi = min(1, 1/w).  Parse errors report the
    offending data row number (header = row 0).
    """
    sch = dict(DEFAULT_SCHEMA)
    if schema:
        sch.update(schema)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for role in ("y", "field", "gender"):
            if sch[role] not in header:
                raise DataError(f"missing required column {sch[role]!r} for {role}")
        has_w = sch["weight"] in header
        has_pi = sch["pi"] is not None and sch["pi"] in header
        if not (has_w or has_pi):
            raise DataError("need a weight column, a pi column, or both")
        has_stratum = sch["stratum"] is not None and sch["stratum"] in header

        y, fields, genders, strata, w, pi = [], [], [], [], [], []
        for row_num, row in enumerate(reader, start=1):
            y.append(_parse_positive(row[sch["y"]], "outcome", row_num))
            fields.append(row[sch["field"]].strip())
            genders.append(row[sch["gender"]].strip())
            if has_stratum:
                strata.append(row[sch["stratum"]].strip())
            if has_w:
                w.append(_parse_positive(row[sch["weight"]], "weight", row_num))
            if has_pi:
                p = _parse_positive(row[sch["pi"]], "pi", row_num)
                if p > 1.0:
                    raise DataError(f"row {row_num}: pi must be in (0, 1], got {p}")
                pi.append(p)

    if not y:
        raise DataError("file contains no data rows")
    w = np.array(w) if has_w else 1.0 / np.array(pi)
    pi = np.array(pi) if has_pi else np.minimum(1.0, 1.0 / w)

    def encode(labels):
        levels = sorted(set(labels), key=_level_sort_key)
        index = {lab: i for i, lab in enumerate(levels)}
        return np.array([index[lab] for lab in labels], dtype=np.intp), levels

    field_idx, field_levels = encode(fields)
    gender_idx, gender_levels = encode(genders)
    if has_stratum:
        stratum_idx, stratum_levels = encode(strata)
    else:
        stratum_idx, stratum_levels = None, None
    return SurveyDataset(np.array(y), field_idx, gender_idx, field_levels,
                         gender_levels, w, pi, stratum_idx, stratum_levels)


def save_csv(dataset, path):
    """Write a dataset using the default schema column names."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = ["y", "field", "gender", "weight"]
        if dataset.pi is not None:
            header.append("pi")
        writer.writerow(header)
        for i in range(dataset.n):
            row = [repr(float(dataset.y[i])),
                   dataset.field_levels[dataset.field_idx[i]],
                   dataset.gender_levels[dataset.gender_idx[i]],
                   repr(float(dataset.w[i]))]
            if dataset.pi is not None:
                row.append(repr(float(dataset.pi[i])))
            writer.writerow(row)


def _level_sort_key(label):
    try:
        return (0, float(label), "")
    except (TypeError, ValueError):
        return (1, 0.0, str(label))


def transform(record):
    """Log transform of a record's outcome and weight: (log y, log w)."""
    if record.y <= 0 or record.w <= 0:
        raise DataError("transform requires positive outcome and weight")
    return float(np.log(record.y)), float(np.log(record.w))


def back_transform(yt, wt):
    """Inverse of transform: (exp(yt), exp(wt))."""
    return float(np.exp(yt)), float(np.exp(wt))


def transform_arrays(y, w):
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if np.any(y <= 0) or np.any(w <= 0):
        raise DataError("transform requires positive outcome and weight")
    return np.log(y), np.log(w)
