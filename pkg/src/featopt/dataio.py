"""CSV ingestion, feature standardization, and deterministic splitting.

Input files are UTF-8 comma-separated with a header row and numeric cells;
the target lives in the last column unless overridden. Missing or
unparseable cells are rejected with their position rather than imputed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataLoadError, InvalidArgumentError
from .mathcore import RandomSource

CLASSIFICATION = "classification"
REGRESSION = "regression"

# A column is treated as class labels when every value is integral and the
# number of distinct values stays at or below this bound.
MAX_INFERRED_CLASSES = 32


@dataclass
class Dataset:
    features: np.ndarray  # n x k_orig
    targets: np.ndarray  # n, float (regression) or int (classification)
    task: str
    feature_names: list[str] = field(default_factory=list)
    n_classes: int = 0
    name: str = "dataset"

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class SplitSpec:
    """Disjoint row index lists covering the whole dataset."""

    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    seed: int


def load_csv(path, target_col=None, task: str = "auto") -> Dataset:
    """Parse a CSV file into a dataset.

    ``target_col`` may be a column name or integer index; default is the
    last column. ``task`` is inferred unless forced: classification when
    the target is integral with few distinct values, regression otherwise.
    Class labels are re-indexed densely to 0..C-1 in sorted order.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            rows = [(reader.line_num, row) for row in reader if row]
    except OSError as exc:
        raise DataLoadError(f"cannot read {path}: {exc}") from exc
    if len(rows) < 2:
        raise DataLoadError(f"{path}: file has no data rows")
    header = [h.strip() for h in rows[0][1]]
    n_cols = len(header)

    if target_col is None:
        target_idx = n_cols - 1
    elif isinstance(target_col, int) or str(target_col).lstrip("-").isdigit():
        target_idx = int(target_col)
        if not -n_cols <= target_idx < n_cols:
            raise DataLoadError(f"target column index {target_col} out of range")
        target_idx %= n_cols
    else:
        if target_col not in header:
            raise DataLoadError(f"target column {target_col!r} not in header")
        target_idx = header.index(target_col)

    parsed = np.empty((len(rows) - 1, n_cols), dtype=np.float64)
    for i, (line_num, row) in enumerate(rows[1:]):
        if len(row) != n_cols:
            raise DataLoadError(
                f"{path}: line {line_num} has {len(row)} cells, expected {n_cols}"
            )
        for j, cell in enumerate(row):
            text = cell.strip()
            if not text:
                raise DataLoadError(
                    f"{path}: missing value at line {line_num}, column {header[j]!r}"
                )
            try:
                parsed[i, j] = float(text)
            except ValueError:
                raise DataLoadError(
                    f"{path}: cannot parse {cell!r} at line {line_num}, column {header[j]!r}"
                ) from None

    target = parsed[:, target_idx]
    feature_cols = [j for j in range(n_cols) if j != target_idx]
    features = parsed[:, feature_cols]
    names = [header[j] for j in feature_cols]

    if task == "auto":
        integral = np.all(target == np.floor(target))
        distinct = np.unique(target).size
        task = CLASSIFICATION if integral and distinct <= MAX_INFERRED_CLASSES else REGRESSION
    if task == CLASSIFICATION:
        classes = np.unique(target)
        lookup = {value: idx for idx, value in enumerate(classes.tolist())}
        labels = np.asarray([lookup[v] for v in target.tolist()], dtype=np.int64)
        return Dataset(
            features=features,
            targets=labels,
            task=CLASSIFICATION,
            feature_names=names,
            n_classes=len(classes),
            name=str(path),
        )
    if task != REGRESSION:
        raise DataLoadError(f"unknown task {task!r}")
    return Dataset(
        features=features,
        targets=target.copy(),
        task=REGRESSION,
        feature_names=names,
        name=str(path),
    )


@dataclass
class Standardizer:
    """Train-split z-scoring; zero-variance columns pass through unscaled."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, train_rows: np.ndarray) -> "Standardizer":
        mean = train_rows.mean(axis=0)
        std = train_rows.std(axis=0)
        constant = std < 1e-12
        scale = np.where(constant, 1.0, std)
        mean = np.where(constant, 0.0, mean)
        return cls(mean=mean, scale=scale)

    def transform(self, rows: np.ndarray) -> np.ndarray:
        return (rows - self.mean) / self.scale

    def inverse_transform(self, rows: np.ndarray) -> np.ndarray:
        return rows * self.scale + self.mean


def standardize_split(
    dataset: Dataset, ratios=(0.6, 0.2, 0.2), seed: int = 0
) -> tuple[Dataset, SplitSpec]:
    """Shuffle rows with the seed, split train/validation/test by the given
    ratios, and z-score features using train statistics only."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise InvalidArgumentError("ratios must be three positives summing to 1")
    n = dataset.n_samples
    n_train = int(n * ratios[0])
    n_val = int(n * ratios[1])
    n_test = n - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise InvalidArgumentError(
            f"ratios {ratios} leave an empty split for {n} rows"
        )
    perm = RandomSource(seed).permutation(n)
    split = SplitSpec(
        train=np.sort(perm[:n_train]),
        validation=np.sort(perm[n_train : n_train + n_val]),
        test=np.sort(perm[n_train + n_val :]),
        seed=seed,
    )
    scaler = Standardizer.fit(dataset.features[split.train])
    standardized = replace(dataset, features=scaler.transform(dataset.features))
    return standardized, split
