"""Dataset container and CSV ingestion.

On-disk format: UTF-8 comma-separated values with a header row naming the
columns and ``.`` as the decimal separator.  Feature columns come first:

* multiclass      last column is a 1-based integer class index,
* multilabel      last column is a semicolon-joined list of 1-based indices
                  (empty cell means no labels),
* regression      the trailing ``q`` columns are real-valued targets,
* sign            last column is +1 or -1 (binary scoring, q = 1).

Numeric fields round-trip bit-exactly: floats are written with Python's
shortest round-trip repr and parsed with ``float``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError

__all__ = ["Dataset", "load_dataset", "save_dataset"]

_TASKS = ("multiclass", "multilabel", "regression", "sign")


@dataclass
class Dataset:
    X: np.ndarray  # (n, d) float
    Y: np.ndarray  # task-dependent label array
    task: str
    q: int
    k: int | None = None  # multilabel sparsity cap
    feature_names: list[str] | None = None

    def __post_init__(self):
        if self.task not in _TASKS:
            raise DataFormatError(f"unknown task {self.task!r}")
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim != 2:
            raise DataFormatError("X must be a 2-d matrix")
        if not np.isfinite(self.X).all():
            raise DataFormatError("features must be finite")
        n = self.X.shape[0]
        if self.task == "multiclass":
            self.Y = np.asarray(self.Y, dtype=np.int64)
            if self.Y.shape != (n,):
                raise DataFormatError("label count does not match row count")
            if n and (self.Y.min() < 1 or self.Y.max() > self.q):
                raise DataFormatError(f"class labels must lie in 1..{self.q}")
        elif self.task == "sign":
            self.Y = np.asarray(self.Y, dtype=float)
            if self.Y.shape != (n,) or (n and not np.isin(self.Y, (-1.0, 1.0)).all()):
                raise DataFormatError("sign labels must be -1 or +1, one per row")
            if self.q != 1:
                raise DataFormatError("sign task requires q = 1")
        else:
            self.Y = np.asarray(self.Y, dtype=float)
            if self.Y.shape != (n, self.q):
                raise DataFormatError("label matrix must be (n, q)")
            if not np.isfinite(self.Y).all():
                raise DataFormatError("labels must be finite")
            if self.task == "multilabel":
                if not np.isin(self.Y, (0.0, 1.0)).all():
                    raise DataFormatError("multilabel targets must be 0/1")
                if self.k is not None and n and self.Y.sum(axis=1).max() > self.k:
                    raise DataFormatError(f"multilabel rows exceed k={self.k}")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


def _parse_float(cell: str, path, line, col):
    try:
        val = float(cell)
    except ValueError:
        raise DataFormatError(f"{path}:{line}: column {col!r}: not a number: {cell!r}")
    if not np.isfinite(val):
        raise DataFormatError(f"{path}:{line}: column {col!r}: non-finite value")
    return val


def load_dataset(path, task: str, q: int | None = None, k: int | None = None) -> Dataset:
    """Load a CSV file; ``q`` is required for regression and otherwise inferred
    as the largest label index when omitted.
    """
    if task not in _TASKS:
        raise DataFormatError(f"unknown task {task!r}")
    if task == "regression" and q is None:
        raise DataFormatError("regression requires q (number of target columns)")

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if len(rows) < 2:
        raise DataFormatError(f"{path}: no rows")
    header, body = rows[0], rows[1:]
    n_label_cols = q if task == "regression" else 1
    d = len(header) - n_label_cols
    if d < 1:
        raise DataFormatError(f"{path}: need at least one feature column")

    X = np.empty((len(body), d))
    raw_labels = []
    for i, row in enumerate(body):
        line = i + 2
        if len(row) != len(header):
            raise DataFormatError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
        for jcol in range(d):
            X[i, jcol] = _parse_float(row[jcol], path, line, header[jcol])
        raw_labels.append(row[d:])

    if task == "multiclass":
        Y = np.empty(len(body), dtype=np.int64)
        for i, cells in enumerate(raw_labels):
            try:
                Y[i] = int(cells[0])
            except ValueError:
                raise DataFormatError(f"{path}:{i + 2}: bad class label {cells[0]!r}")
        if q is None:
            q = int(Y.max(initial=1))
        if Y.min() < 1 or Y.max() > q:
            raise DataFormatError(f"{path}: class labels must lie in 1..{q} (1-based)")
    elif task == "sign":
        q = 1
        Y = np.empty(len(body))
        for i, cells in enumerate(raw_labels):
            Y[i] = _parse_float(cells[0], path, i + 2, header[d])
    elif task == "multilabel":
        idx_rows = []
        max_idx = 0
        for i, cells in enumerate(raw_labels):
            cell = cells[0].strip()
            idxs = []
            if cell:
                for part in cell.split(";"):
                    try:
                        idxs.append(int(part))
                    except ValueError:
                        raise DataFormatError(f"{path}:{i + 2}: bad label index {part!r}")
            if idxs and min(idxs) < 1:
                raise DataFormatError(f"{path}:{i + 2}: label indices are 1-based")
            max_idx = max(max_idx, max(idxs, default=0))
            idx_rows.append(idxs)
        if q is None:
            q = max(max_idx, 1)
        if max_idx > q:
            raise DataFormatError(f"{path}: label index {max_idx} exceeds q={q}")
        Y = np.zeros((len(body), q))
        for i, idxs in enumerate(idx_rows):
            Y[i, np.array(idxs, dtype=int) - 1] = 1.0
        if k is None:
            k = max(int(Y.sum(axis=1).max(initial=1)), 1)
    else:  # regression
        Y = np.empty((len(body), q))
        for i, cells in enumerate(raw_labels):
            for jcol in range(q):
                Y[i, jcol] = _parse_float(cells[jcol], path, i + 2, header[d + jcol])

    return Dataset(X=X, Y=Y, task=task, q=int(q), k=k, feature_names=header[:d])


def save_dataset(ds: Dataset, path) -> None:
    """Write a dataset back to CSV in the format read by :func:`load_dataset`."""
    names = ds.feature_names or [f"x{j}" for j in range(ds.d)]
    if ds.task == "regression":
        header = names + [f"y{j + 1}" for j in range(ds.q)]
    else:
        header = names + ["label"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(ds.n):
            row = [repr(float(v)) for v in ds.X[i]]
            if ds.task == "multiclass":
                row.append(str(int(ds.Y[i])))
            elif ds.task == "sign":
                row.append(str(int(ds.Y[i])))
            elif ds.task == "multilabel":
                row.append(";".join(str(j + 1) for j in np.nonzero(ds.Y[i])[0]))
            else:
                row.extend(repr(float(v)) for v in ds.Y[i])
            writer.writerow(row)
