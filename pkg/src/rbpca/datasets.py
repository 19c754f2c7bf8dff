"""Sample streams: the cubic numerical example, fault injection, z-scoring, CSV I/O."""

from __future__ import annotations

import csv
import re
from importlib import resources
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DataError, ParameterError

NOISE_STD = 0.1


@dataclass(frozen=True, eq=False)
class SampleStream:
    """An ordered set of samples, one per row, with optional fault labels."""

    X: np.ndarray
    labels: np.ndarray | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        if X.ndim != 2:
            raise DataError(f"samples must form a 2-D array, got shape {X.shape}")
        X.setflags(write=False)
        object.__setattr__(self, "X", X)
        if self.labels is not None:
            labels = np.array(self.labels, dtype=bool)
            if labels.shape != (X.shape[0],):
                raise DataError(f"{labels.shape[0]} labels for {X.shape[0]} samples")
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def D(self):
        return self.X.shape[1]

    def head(self, k):
        return SampleStream(self.X[:k], None if self.labels is None else self.labels[:k],
                            dict(self.provenance))


def process_curve(t):
    """Noise-free point(s) of the numerical example at latent value(s) ``t``."""
    t = np.asarray(t, dtype=float)
    return np.stack([t, t**2 - 3 * t, -t**3 + 3 * t**2], axis=-1)


def gen_numerical_example(n, seed, noise=True):
    """Three-variable nonlinear process driven by a latent ``t``.

    ``x = (t, t^2 - 3t, -t^3 + 3t^2) + e`` with ``t ~ U[0.01, 2]`` and
    ``e_j ~ N(0, 0.01)``. All draws come from ``default_rng(seed)``: first the
    ``t`` values, then the noise block.
    """
    if n < 1:
        raise ParameterError(f"n must be positive, got {n!r}")
    rng = np.random.default_rng(seed)
    t = rng.uniform(0.01, 2.0, size=n)
    X = process_curve(t)
    if noise:
        X = X + rng.normal(0.0, NOISE_STD, size=(n, 3))
    return SampleStream(X, np.zeros(n, dtype=bool),
                        {"generator": "numerical-example", "n": n, "seed": seed,
                         "noise": noise})


def _fault_region(stream, start):
    if not 1 <= start <= stream.n:
        raise ParameterError(f"fault start must be in [1, {stream.n}], got {start!r}")
    return np.arange(stream.n) >= start - 1


def _with_fault(stream, X, start, kind):
    labels = np.zeros(stream.n, dtype=bool) if stream.labels is None else stream.labels.copy()
    labels[start - 1:] = True
    prov = dict(stream.provenance)
    prov["fault"] = kind
    prov["fault_start"] = start
    return SampleStream(X, labels, prov)


def inject_fault1(stream, start=201, step=-0.5):
    """Step change of ``step`` on the first variable from sample ``start`` (1-based) on."""
    mask = _fault_region(stream, start)
    X = stream.X.copy()
    X[mask, 0] += step
    return _with_fault(stream, X, start, "fault1")


def inject_fault2(stream, start=201, slope=0.01):
    """Ramp ``slope * (j - start + 1)`` added to the second variable for ``j >= start``."""
    mask = _fault_region(stream, start)
    X = stream.X.copy()
    j = np.arange(1, stream.n + 1)
    X[mask, 1] += slope * (j[mask] - (start - 1))
    return _with_fault(stream, X, start, "fault2")


FAULTS = {"fault1": inject_fault1, "fault2": inject_fault2}


def zscore_fit(X):
    """Per-variable mean and sample standard deviation (``ddof=1``)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DataError("z-scoring needs at least two samples")
    mean = X.mean(axis=0)
    std = X.std(axis=0, ddof=1)
    bad = np.flatnonzero(~(std > 0))
    if bad.size:
        raise DataError(f"variable {int(bad[0])} has zero variance in the training data")
    return mean, std


def zscore_apply(X, mean, std):
    X = np.asarray(X, dtype=float)
    if X.shape[-1] != len(mean):
        raise DataError(f"expected {len(mean)} variables, got {X.shape[-1]}")
    return (X - mean) / std


_NUMBER = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")


def _parse_cell(text, row, col):
    text = text.strip()
    if not _NUMBER.fullmatch(text):
        raise DataError(f"row {row}, column {col}: non-numeric cell {text!r}")
    return float(text)


def iter_csv_rows(path, label_column=None):
    """Yield ``(features, label)`` per data row without loading the whole file.

    Row numbers in error messages count the header as row 1.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        label_idx = None
        if label_column is not None:
            if label_column not in header:
                raise DataError(f"{path}: label column {label_column!r} not found")
            label_idx = header.index(label_column)
        feature_cols = [i for i in range(len(header)) if i != label_idx]
        yield header, feature_cols
        for rowno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {rowno} has {len(row)} cells, header has {len(header)}")
            values = [_parse_cell(row[i], rowno, header[i]) for i in feature_cols]
            label = None
            if label_idx is not None:
                cell = row[label_idx].strip()
                if cell not in ("0", "1"):
                    raise DataError(f"{path}: row {rowno}, label {cell!r} is not 0 or 1")
                label = cell == "1"
            yield np.array(values), label


def load_labeled_csv(path, label_column=None):
    """Read a header-first numeric CSV into a :class:`SampleStream`."""
    rows = iter_csv_rows(path, label_column)
    header, feature_cols = next(rows)
    X, labels = [], []
    for values, label in rows:
        X.append(values)
        labels.append(label)
    X = np.array(X, dtype=float).reshape(len(X), len(feature_cols))
    return SampleStream(X, np.array(labels, dtype=bool) if label_column is not None else None,
                        {"path": str(path), "columns": [header[i] for i in feature_cols]})


def write_csv(stream, path, columns=None, label_column="label"):
    """Write a stream with 17 significant digits so values survive a round trip."""
    columns = columns or [f"x{i + 1}" for i in range(stream.D)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(columns) + ([label_column] if stream.labels is not None else []))
        for k in range(stream.n):
            cells = [f"{v:.17g}" for v in stream.X[k]]
            if stream.labels is not None:
                cells.append("1" if stream.labels[k] else "0")
            writer.writerow(cells)
    return Path(path)



#: Bundled 100-sample synthetic files mimicking external dataset layouts, with
#: their label columns: 41 measured plus 11 manipulated variables (``tep``) and
#: 38 server metrics (``smd``). Rows 61-100 carry a fault.
BUNDLED = {"tep": "fault", "smd": "label"}


def bundled_csv(name):
    """Path of a bundled synthetic CSV (``"tep"`` or ``"smd"``)."""
    if name not in BUNDLED:
        raise ParameterError(f"unknown bundled dataset {name!r}; expected one of {sorted(BUNDLED)}")
    return Path(str(resources.files("rbpca") / "data" / f"{name}_synthetic.csv"))
