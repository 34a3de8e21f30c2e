"""Observation matrices, pairwise distances and neighbor ranks."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Sequence

import numpy as np
from scipy.spatial.distance import pdist, squareform

METRICS = {
    "euclidean": "euclidean",
    "squared_euclidean": "sqeuclidean",
    "l1": "cityblock",
}

RANK_SENTINEL = 0


class DataError(ValueError):
    """Malformed input data."""


@dataclass(frozen=True)
class Dataset:
    """N observations in d dimensions, in the order they were read.

    ``labels`` holds 1 (sample X) or 2 (sample Y) per row, or is ``None`` when
    the rows are a time-ordered sequence.
    """

    values: np.ndarray
    row_ids: tuple = ()
    labels: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise DataError("values must be a 2-d array")
        if values.shape[0] < 2:
            raise DataError(f"need at least 2 observations, got {values.shape[0]}")
        if not np.all(np.isfinite(values)):
            raise DataError("values contain non-finite entries")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if not self.row_ids:
            object.__setattr__(self, "row_ids", tuple(range(1, values.shape[0] + 1)))
        elif len(self.row_ids) != values.shape[0]:
            raise DataError("row_ids length does not match number of rows")
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int8)
            if labels.shape != (values.shape[0],):
                raise DataError("labels length does not match number of rows")
            if not np.all((labels == 1) | (labels == 2)):
                raise DataError("labels must be 1 or 2")
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def m(self) -> int:
        if self.labels is None:
            raise DataError("dataset has no labels")
        return int(np.sum(self.labels == 1))

    @property
    def n(self) -> int:
        if self.labels is None:
            raise DataError("dataset has no labels")
        return int(np.sum(self.labels == 2))

    def split(self) -> tuple[Dataset, Dataset]:
        """Return the X and Y parts of a labelled dataset."""
        if self.labels is None:
            raise DataError("dataset has no labels")
        ids = np.array(self.row_ids, dtype=object)
        x, y = self.labels == 1, self.labels == 2
        return (
            Dataset(self.values[x], tuple(ids[x])),
            Dataset(self.values[y], tuple(ids[y])),
        )


@dataclass(frozen=True)
class DistanceMatrix:
    values: np.ndarray
    metric: str = "euclidean"

    @property
    def N(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class RankMatrix:
    """``values[i, j]`` is the rank of D(Z_i, Z_j) among row i's distances.

    Ranks run from 1 to N-1; the diagonal holds ``RANK_SENTINEL``.
    """

    values: np.ndarray = field(repr=False)

    @property
    def N(self) -> int:
        return self.values.shape[0]


def pool(x: Dataset, y: Dataset) -> Dataset:
    """Stack X above Y and label the rows 1 / 2."""
    if x.d != y.d:
        raise DataError(f"dimension mismatch: {x.d} vs {y.d}")
    values = np.vstack([x.values, y.values])
    labels = np.r_[np.ones(x.N, np.int8), np.full(y.N, 2, np.int8)]
    return Dataset(values, labels=labels)


def load_dataset(
    source: str | Path | IO[str] | bytes,
    *,
    header: bool = False,
    label_column: str | int | None = None,
    x_label: str = "X",
    y_label: str = "Y",
    delimiter: str = ",",
) -> Dataset:
    """Parse CSV into a :class:`Dataset`.

    ``source`` is a file path, an open text/binary stream, or raw bytes.

    ``label_column`` names the column holding sample labels (a header name,
    or a 0-based index when there is no header). Label values must equal
    ``x_label`` or ``y_label``.
    """
    if isinstance(source, bytes):
        text = source.decode()
    elif isinstance(source, (str, Path)):
        text = Path(source).read_text()
    else:
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode()

    rows = [r for r in csv.reader(io.StringIO(text), delimiter=delimiter) if any(c.strip() for c in r)]
    if header and rows:
        names = [c.strip() for c in rows[0]]
        rows = rows[1:]
    else:
        names = None
    if not rows:
        raise DataError("empty input")

    width = len(rows[0])
    for lineno, row in enumerate(rows, start=2 if header else 1):
        if len(row) != width:
            raise DataError(f"ragged row at line {lineno}: {len(row)} cells, expected {width}")

    label_idx = None
    if label_column is not None:
        if isinstance(label_column, int):
            label_idx = label_column
        elif names is not None and label_column in names:
            label_idx = names.index(label_column)
        elif names is None and str(label_column).lstrip("-").isdigit():
            label_idx = int(label_column)
        else:
            raise DataError(f"label column {label_column!r} not found")
        if not -width <= label_idx < width:
            raise DataError(f"label column index {label_idx} out of range")
        label_idx %= width

    values, labels = [], []
    for lineno, row in enumerate(rows, start=2 if header else 1):
        numeric = []
        for col, cell in enumerate(row):
            if col == label_idx:
                tag = cell.strip()
                if tag == x_label:
                    labels.append(1)
                elif tag == y_label:
                    labels.append(2)
                else:
                    raise DataError(f"unknown label value {tag!r} at line {lineno}")
                continue
            try:
                numeric.append(float(cell))
            except ValueError:
                raise DataError(f"non-numeric cell {cell.strip()!r} at line {lineno}, column {col + 1}") from None
        values.append(numeric)

    arr = np.array(values, dtype=float)
    if arr.shape[1] == 0:
        raise DataError("no numeric columns")
    return Dataset(arr, labels=np.array(labels) if label_idx is not None else None)


def pairwise_distances(ds: Dataset | np.ndarray, metric: str = "euclidean") -> DistanceMatrix:
    """Full symmetric distance matrix with an exact zero diagonal."""
    values = ds.values if isinstance(ds, Dataset) else np.asarray(ds, dtype=float)
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; choose from {sorted(METRICS)}")
    if values.shape[0] < 2:
        raise DataError("need at least 2 observations")
    with np.errstate(over="raise"):
        try:
            dm = squareform(pdist(values, METRICS[metric]))
        except FloatingPointError:
            raise DataError("overflow while computing distances") from None
    if not np.all(np.isfinite(dm)):
        raise DataError("overflow while computing distances")
    return DistanceMatrix(dm, metric)


def neighbor_ranks(dm: DistanceMatrix | np.ndarray) -> RankMatrix:
    """Rank each row's off-diagonal distances, ascending.

    Ties go to the smaller column index. Since only the ordering within a
    row matters, the result is unchanged by any strictly increasing map of
    the distances.
    """
    d = dm.values if isinstance(dm, DistanceMatrix) else np.asarray(dm, dtype=float)
    n = d.shape[0]
    work = d.astype(float, copy=True)
    np.fill_diagonal(work, np.inf)
    order = np.argsort(work, axis=1, kind="stable")
    ranks = np.empty((n, n), dtype=np.int32)
    rows = np.arange(n)[:, None]
    ranks[rows, order] = np.arange(1, n + 1, dtype=np.int32)[None, :]
    np.fill_diagonal(ranks, RANK_SENTINEL)
    return RankMatrix(ranks)


def ranks_from_values(values: np.ndarray | Dataset, metric: str = "euclidean") -> RankMatrix:
    return neighbor_ranks(pairwise_distances(values, metric))


def as_labels(labels: Sequence[int] | np.ndarray) -> np.ndarray:
    return np.asarray(labels, dtype=np.int8)
