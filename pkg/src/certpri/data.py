"""Test-input datasets and their CSV format.

Columns are ``f0..f{d-1}`` for features, then either an integer ``label``
column or regression targets ``t0..t{k-1}``. Empty cells are missing and are
filled with the mean of the column's present values.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._io import atomic_write_text


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray | None = None
    targets: np.ndarray | None = None

    def __post_init__(self):
        x = np.array(self.inputs, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise DatasetError(f"inputs must be a non-empty N x d matrix, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise DatasetError("inputs contain non-finite values")
        object.__setattr__(self, "inputs", x)
        if self.labels is not None and self.targets is not None:
            raise DatasetError("a dataset carries labels or targets, not both")
        if self.labels is not None:
            y = np.array(self.labels)
            if y.shape != (x.shape[0],):
                raise DatasetError("need exactly one label per input")
            if not np.all(y == np.round(y)) or np.any(y < 0):
                raise DatasetError("labels must be non-negative integers")
            object.__setattr__(self, "labels", y.astype(np.int64))
        if self.targets is not None:
            t = np.array(self.targets, dtype=np.float64)
            if t.ndim == 1:
                t = t[:, None]
            if t.shape[0] != x.shape[0]:
                raise DatasetError("need exactly one target row per input")
            object.__setattr__(self, "targets", t)

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def feature_bound(self) -> float:
        """max |x| over the whole dataset; the reference for relative radii."""
        return float(np.max(np.abs(self.inputs)))

    @property
    def feature_scale(self) -> np.ndarray:
        """Per-feature max |x|, with 1 substituted for all-zero columns."""
        scale = np.max(np.abs(self.inputs), axis=0)
        return np.where(scale > 0, scale, 1.0)

    def validate_labels(self, num_classes: int) -> None:
        if self.labels is not None and np.any(self.labels >= num_classes):
            bad = int(np.argmax(self.labels >= num_classes))
            raise DatasetError(f"row {bad}: label {self.labels[bad]} outside [0, {num_classes})")

    def without_labels(self) -> "Dataset":
        return Dataset(self.inputs)


_FEATURE = re.compile(r"^f(\d+)$")
_TARGET = re.compile(r"^t(\d+)$")


def _indexed_columns(header, pattern, kind):
    idx = {}
    for col, name in enumerate(header):
        m = pattern.match(name)
        if m:
            idx[int(m.group(1))] = col
    if sorted(idx) != list(range(len(idx))):
        raise DatasetError(f"{kind} columns must be numbered contiguously from 0")
    return [idx[i] for i in range(len(idx))]


def _fill_missing(block: np.ndarray, names) -> np.ndarray:
    missing = np.isnan(block)
    if missing.any():
        present = ~missing
        counts = present.sum(axis=0)
        if np.any(counts[missing.any(axis=0)] == 0):
            col = int(np.argmax((counts == 0) & missing.any(axis=0)))
            raise DatasetError(f"column {names[col]} has no values to take a mean from")
        means = np.where(present, block, 0.0).sum(axis=0) / np.maximum(counts, 1)
        block = np.where(missing, means, block)
    return block


def parse_dataset(text: str, num_classes: int | None = None) -> Dataset:
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r]
    if not rows:
        raise DatasetError("empty dataset file")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise DatasetError("dataset has a header but no rows")
    fcols = _indexed_columns(header, _FEATURE, "feature")
    tcols = _indexed_columns(header, _TARGET, "target")
    if not fcols:
        raise DatasetError("no feature columns (expected f0, f1, ...)")
    lcol = header.index("label") if "label" in header else None
    if lcol is not None and tcols:
        raise DatasetError("file has both a label column and target columns")

    width = len(header)
    cells = np.full((len(body), width), np.nan)
    for r, row in enumerate(body, start=2):
        if len(row) != width:
            raise DatasetError(f"line {r}: {len(row)} cells, header has {width}")
        for c, cell in enumerate(row):
            cell = cell.strip()
            if cell:
                try:
                    cells[r - 2, c] = float(cell)
                except ValueError:
                    raise DatasetError(f"line {r}, column {header[c]}: not a number: {cell!r}") from None

    inputs = _fill_missing(cells[:, fcols], [header[c] for c in fcols])
    labels = targets = None
    if lcol is not None:
        labels = cells[:, lcol]
        if np.isnan(labels).any():
            raise DatasetError(f"line {int(np.argmax(np.isnan(labels))) + 2}: missing label")
        if np.any(labels != np.round(labels)) or np.any(labels < 0):
            raise DatasetError("labels must be non-negative integers")
    elif tcols:
        targets = _fill_missing(cells[:, tcols], [header[c] for c in tcols])
    ds = Dataset(inputs, labels, targets)
    if num_classes is not None:
        ds.validate_labels(num_classes)
    return ds


def load_dataset(path, num_classes: int | None = None) -> Dataset:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise DatasetError(f"dataset is not UTF-8: {exc}") from exc
    return parse_dataset(text, num_classes)


def format_dataset(ds: Dataset) -> str:
    header = [f"f{i}" for i in range(ds.dim)]
    extra = None
    if ds.labels is not None:
        header.append("label")
        extra = ds.labels[:, None]
    elif ds.targets is not None:
        header += [f"t{i}" for i in range(ds.targets.shape[1])]
        extra = ds.targets
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for i in range(len(ds)):
        row = [repr(float(v)) for v in ds.inputs[i]]
        if ds.labels is not None:
            row.append(str(int(ds.labels[i])))
        elif extra is not None:
            row += [repr(float(v)) for v in extra[i]]
        w.writerow(row)
    return buf.getvalue()


def save_dataset(ds: Dataset, path) -> None:
    atomic_write_text(Path(path), format_dataset(ds))
