"""Desk-scale datasets: Gaussian blobs, synthetic series, CSV ingestion."""

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np


class CsvFormatError(ValueError):
    def __init__(self, path, line, message):
        super().__init__(f"{path}: line {line}: {message}")
        self.path = str(path)
        self.line = line


@dataclass(frozen=True, eq=False)
class ClassificationDataset:
    inputs: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        inputs = np.ascontiguousarray(self.inputs, dtype=np.float64)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if inputs.ndim != 2 or labels.shape != (inputs.shape[0],):
            raise ValueError("inputs must be n x d and labels length n")
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_classes):
            raise ValueError(f"labels must lie in 0..{self.n_classes - 1}")
        inputs.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.inputs.shape[0]

    def __eq__(self, other):
        return (
            isinstance(other, ClassificationDataset)
            and self.n_classes == other.n_classes
            and np.array_equal(self.inputs, other.inputs)
            and np.array_equal(self.labels, other.labels)
        )

    def subset(self, idx):
        return ClassificationDataset(self.inputs[idx], self.labels[idx], self.n_classes)


@dataclass(frozen=True, eq=False)
class ForecastDataset:
    """Sliding windows over a univariate series.

    ``inputs`` holds one lookback window per row and ``targets`` the
    following ``horizon`` values; ``starts`` records each window's offset
    into ``series``.
    """

    series: np.ndarray
    lookback: int
    horizon: int
    stride: int = 1
    starts: np.ndarray = field(default=None)

    def __post_init__(self):
        series = np.ascontiguousarray(self.series, dtype=np.float64).ravel()
        series.setflags(write=False)
        object.__setattr__(self, "series", series)
        if self.starts is None:
            span = self.lookback + self.horizon
            starts = np.arange(0, series.size - span + 1, self.stride, dtype=np.int64)
            object.__setattr__(self, "starts", starts)

    def __len__(self):
        return self.starts.size

    def __eq__(self, other):
        return (
            isinstance(other, ForecastDataset)
            and (self.lookback, self.horizon, self.stride)
            == (other.lookback, other.horizon, other.stride)
            and np.array_equal(self.series, other.series)
            and np.array_equal(self.starts, other.starts)
        )

    @property
    def inputs(self):
        idx = self.starts[:, None] + np.arange(self.lookback)
        return self.series[idx]

    @property
    def targets(self):
        idx = self.starts[:, None] + self.lookback + np.arange(self.horizon)
        return self.series[idx]

    def subset(self, idx):
        return ForecastDataset(
            self.series, self.lookback, self.horizon, self.stride, self.starts[idx]
        )


@dataclass(frozen=True)
class DataSplits:
    train: object
    test: object
    val: Optional[object] = None

    @property
    def task(self):
        return "classification" if isinstance(self.train, ClassificationDataset) else "regression"


def _class_centers(n_classes, dim, radius):
    centers = np.zeros((n_classes, dim))
    for k in range(n_classes):
        angle = 2.0 * math.pi * k / n_classes
        if dim == 1:
            centers[k, 0] = radius * (2.0 * k / (n_classes - 1) - 1.0)
        else:
            centers[k, 0] = radius * math.cos(angle)
            centers[k, 1] = radius * math.sin(angle)
    return centers


def make_blobs(rng, n_per_class, n_classes, dim, spread, radius=1.0):
    """Gaussian clusters around centres on a circle in the first two axes.

    Rows are interleaved by class (0, 1, ..., K-1, 0, 1, ...), so any
    contiguous prefix is close to balanced.
    """
    if n_classes < 2 or dim < 1 or n_per_class < 1:
        raise ValueError("need n_classes >= 2, dim >= 1, n_per_class >= 1")
    if spread <= 0:
        raise ValueError("spread must be positive")
    centers = _class_centers(n_classes, dim, radius)
    n = n_per_class * n_classes
    labels = np.tile(np.arange(n_classes, dtype=np.int64), n_per_class)
    inputs = np.empty((n, dim))
    for i in range(n):
        for d in range(dim):
            inputs[i, d] = rng.gaussian(centers[labels[i], d], spread)
    return ClassificationDataset(inputs, labels, n_classes)


def blob_centers(n_classes, dim, radius=1.0):
    return _class_centers(n_classes, dim, radius)


@dataclass(frozen=True)
class SeriesShape:
    amp1: float = 1.0
    period1: float = 24.0
    amp2: float = 0.5
    period2: float = 168.0
    slope: float = 0.0


def make_series(rng, n, noise, shape=SeriesShape()):
    """Two sinusoids plus a linear trend plus Gaussian noise."""
    if n <= 0:
        raise ValueError("n must be positive")
    if noise < 0:
        raise ValueError("noise must be non-negative")
    t = np.arange(n, dtype=np.float64)
    clean = (
        shape.amp1 * np.sin(2.0 * math.pi * t / shape.period1)
        + shape.amp2 * np.sin(2.0 * math.pi * t / shape.period2)
        + shape.slope * t
    )
    if noise == 0:
        return clean
    return clean + rng.gaussian_array(n, 0.0, noise)


def window(series, lookback, horizon, stride=1):
    series = np.asarray(series, dtype=np.float64).ravel()
    if lookback < 1 or horizon < 1 or stride < 1:
        raise ValueError("lookback, horizon and stride must be positive")
    if lookback + horizon > series.size:
        raise ValueError(
            f"window of {lookback}+{horizon} does not fit a series of length {series.size}"
        )
    return ForecastDataset(series, lookback, horizon, stride)


def split_indices(n, fractions):
    """Contiguous, exhaustive, non-overlapping index blocks."""
    total = float(sum(fractions))
    bounds = [0]
    acc = 0.0
    for f in fractions[:-1]:
        acc += f
        bounds.append(int(round(n * acc / total)))
    bounds.append(n)
    return [np.arange(lo, hi, dtype=np.int64) for lo, hi in zip(bounds[:-1], bounds[1:])]


def split_forecast(ds, fractions=(12, 4, 4)):
    """Chronological train/val/test split of the windows (default 60/20/20)."""
    train, val, test = split_indices(len(ds), fractions)
    if min(train.size, val.size, test.size) == 0:
        raise ValueError("series too short for a three-way split")
    return DataSplits(ds.subset(train), ds.subset(test), ds.subset(val))


def split_classification(ds, test_fraction, val_fraction=0.0):
    parts = [1.0 - test_fraction - val_fraction, val_fraction, test_fraction]
    train, val, test = split_indices(len(ds), parts)
    train_ds = ds.subset(train)
    missing = set(range(ds.n_classes)) - set(np.unique(train_ds.labels).tolist())
    if missing:
        raise ValueError(f"training split lacks classes {sorted(missing)}")
    return DataSplits(train_ds, ds.subset(test), ds.subset(val) if val.size else None)


@dataclass(frozen=True)
class CsvSchema:
    """Column layout of a CSV file.

    ``kind`` is ``"classification"`` (feature columns plus an integer label
    column) or ``"forecast"`` (a single target column windowed into
    ``lookback``/``horizon`` pairs).
    """

    kind: str
    target: str
    features: tuple = ()
    n_classes: Optional[int] = None
    lookback: int = 0
    horizon: int = 0
    stride: int = 1


def load_csv(path, schema):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise CsvFormatError(path, 1, "missing header row") from None
        wanted = list(schema.features) + [schema.target]
        for col in wanted:
            if col not in header:
                raise CsvFormatError(path, 1, f"missing column {col!r}")
        cols = [header.index(c) for c in wanted]
        rows = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise CsvFormatError(path, line, f"expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(row[c]) for c in cols])
            except ValueError as exc:
                raise CsvFormatError(path, line, f"non-numeric cell ({exc})") from None
            if not all(math.isfinite(v) for v in rows[-1]):
                raise CsvFormatError(path, line, "non-finite cell")
            if schema.kind == "classification":
                label = rows[-1][-1]
                if label != int(label) or not 0 <= label < (schema.n_classes or 0):
                    raise CsvFormatError(
                        path, line, f"label {row[cols[-1]]!r} outside 0..{(schema.n_classes or 0) - 1}"
                    )
    data = np.array(rows, dtype=np.float64).reshape(len(rows), len(wanted))
    if schema.kind == "classification":
        return ClassificationDataset(data[:, :-1], data[:, -1].astype(np.int64), schema.n_classes)
    if schema.kind == "forecast":
        return window(data[:, -1], schema.lookback, schema.horizon, schema.stride)
    raise ValueError(f"unknown CSV kind {schema.kind!r}")


def export_csv(ds, path, schema):
    """Write ``ds`` in the layout ``load_csv(path, schema)`` reads back."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if schema.kind == "classification":
            writer.writerow(list(schema.features) + [schema.target])
            for x, y in zip(ds.inputs, ds.labels):
                writer.writerow([repr(float(v)) for v in x] + [int(y)])
        else:
            writer.writerow([schema.target])
            for v in ds.series:
                writer.writerow([repr(float(v))])
