"""Datasets, standardization, train/validation splits, CSV I/O and the
synthetic benchmark generators (Madelon, XOR, linear regression, Friedman).
"""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .linalg import ShapeError, as_matrix

logger = logging.getLogger(__name__)

BINARY = "binary"
MULTICLASS = "multiclass"
REGRESSION = "regression"
TASK_KINDS = (BINARY, MULTICLASS, REGRESSION)

DEFAULT_CLASS_CAP = 20


class DataError(ValueError):
    """Malformed dataset, CSV content or generator parameters."""


@dataclass(frozen=True)
class Task:
    kind: str
    n_classes: int = 0

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise DataError(f"unknown task kind {self.kind!r}")
        if self.kind == BINARY and self.n_classes not in (0, 2):
            raise DataError("binary task has exactly 2 classes")
        if self.kind == BINARY:
            object.__setattr__(self, "n_classes", 2)
        if self.kind == MULTICLASS and self.n_classes < 2:
            raise DataError("multiclass task needs n_classes >= 2")
        if self.kind == REGRESSION:
            object.__setattr__(self, "n_classes", 0)

    @property
    def is_classification(self) -> bool:
        return self.kind != REGRESSION

    def __str__(self) -> str:
        return f"multiclass({self.n_classes})" if self.kind == MULTICLASS else self.kind

    @classmethod
    def parse(cls, text: str) -> Task:
        text = text.strip()
        if text.startswith("multiclass(") and text.endswith(")"):
            return cls(MULTICLASS, int(text[len("multiclass(") : -1]))
        return cls(text)


@dataclass(frozen=True, eq=False)
class Dataset:
    x: np.ndarray
    y: np.ndarray
    task: Task
    feature_names: tuple[str, ...] = ()

    def __post_init__(self):
        x = as_matrix(self.x, "x").copy()
        y = np.array(self.y, dtype=np.float64)
        if y.ndim != 1 or y.shape[0] != x.shape[0]:
            raise ShapeError(f"y has shape {y.shape}, expected ({x.shape[0]},)")
        if not np.all(np.isfinite(y)):
            raise DataError("target contains NaN or Inf")
        if x.shape[0] < 2:
            raise DataError("a dataset needs at least 2 observations")
        if self.task.is_classification:
            if not np.all(y == np.round(y)):
                raise DataError("classification labels must be integers")
            labels = set(np.unique(y).astype(int).tolist())
            if not labels <= set(range(self.task.n_classes)):
                raise DataError(f"labels {sorted(labels)} outside 0..{self.task.n_classes - 1}")
        names = tuple(self.feature_names) or tuple(f"x{j}" for j in range(x.shape[1]))
        if len(names) != x.shape[1]:
            raise DataError(f"{len(names)} feature names for {x.shape[1]} columns")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def m(self) -> int:
        return self.x.shape[1]

    @property
    def labels(self) -> np.ndarray:
        """Integer class labels (classification only)."""
        return self.y.astype(np.int64)

    def subset(self, rows) -> Dataset:
        return Dataset(self.x[rows], self.y[rows], self.task, self.feature_names)

    def with_x(self, x) -> Dataset:
        return Dataset(x, self.y, self.task, self.feature_names)

    def select_features(self, cols) -> Dataset:
        cols = np.asarray(cols, dtype=np.int64)
        names = tuple(self.feature_names[j] for j in cols)
        return Dataset(self.x[:, cols], self.y, self.task, names)

    def equals(self, other: Dataset, atol: float = 0.0) -> bool:
        return (
            self.task == other.task
            and self.feature_names == other.feature_names
            and self.x.shape == other.x.shape
            and np.allclose(self.x, other.x, rtol=0, atol=atol)
            and np.allclose(self.y, other.y, rtol=0, atol=atol)
        )


# ---------------------------------------------------------------------------
# standardization


@dataclass(frozen=True, eq=False)
class Standardizer:
    means: np.ndarray
    stds: np.ndarray
    constant_features: tuple[int, ...] = ()

    def __post_init__(self):
        if np.any(self.stds <= 0):
            raise DataError("standard deviations must be strictly positive")

    def inverse(self, z) -> np.ndarray:
        return np.asarray(z) * self.stds + self.means


def standardize_fit(x) -> Standardizer:
    """Per-column population mean and standard deviation (divides by n).

    Constant columns get std 1 and are listed in ``constant_features``.
    """
    x = as_matrix(x, "x")
    means = x.mean(axis=0)
    stds = np.sqrt(((x - means) ** 2).mean(axis=0))
    constant = np.flatnonzero(np.ptp(x, axis=0) == 0)
    if constant.size:
        warnings.warn(
            f"{constant.size} constant feature(s) {constant[:10].tolist()}; std clamped to 1",
            stacklevel=2,
        )
        stds[constant] = 1.0
    return Standardizer(means, stds, tuple(int(j) for j in constant))


def standardize_apply(std: Standardizer, x) -> np.ndarray:
    x = as_matrix(x, "x")
    if x.shape[1] != std.means.shape[0]:
        raise ShapeError(f"x has {x.shape[1]} columns, standardizer expects {std.means.shape[0]}")
    return (x - std.means) / std.stds


# ---------------------------------------------------------------------------
# splitting


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise DataError("train_fraction must lie in (0, 1)")


def split_indices(ds: Dataset, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint (train, validation) row indices, both sorted ascending."""
    rng = np.random.default_rng(spec.seed)
    if spec.stratified and ds.task.is_classification:
        train, val = [], []
        labels = ds.labels
        for c in np.unique(labels):
            idx = rng.permutation(np.flatnonzero(labels == c))
            if idx.size == 1:
                warnings.warn(f"class {c} has a single sample; it goes to training", stacklevel=2)
                train.append(idx)
                continue
            k = min(max(int(round(spec.train_fraction * idx.size)), 1), idx.size - 1)
            train.append(idx[:k])
            val.append(idx[k:])
        train_idx = np.concatenate(train)
        val_idx = np.concatenate(val) if val else np.empty(0, dtype=np.int64)
    else:
        idx = rng.permutation(ds.n)
        k = min(max(int(round(spec.train_fraction * ds.n)), 1), ds.n - 1)
        train_idx, val_idx = idx[:k], idx[k:]
    if train_idx.size == 0 or val_idx.size == 0:
        raise DataError("split produced an empty part")
    return np.sort(train_idx), np.sort(val_idx)


def split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    train_idx, val_idx = split_indices(ds, spec)
    return ds.subset(train_idx), ds.subset(val_idx)


# ---------------------------------------------------------------------------
# synthetic generators


@dataclass(frozen=True, eq=False)
class Synthetic:
    """A generated dataset together with its ground truth."""

    dataset: Dataset
    true_features: np.ndarray
    params: dict = field(default_factory=dict)


def _check_positive(**kwargs):
    for name, value in kwargs.items():
        if int(value) != value or value < 1:
            raise DataError(f"{name} must be a positive integer, got {value!r}")


def gen_madelon(
    seed: int = 0,
    n_samples: int = 200,
    n_features: int = 500,
    n_inf: int = 5,
    clusters_per_class: int = 4,
    vertex_scale: float = 2.0,
    cluster_std: float = 1.0,
) -> Synthetic:
    """Gaussian clusters around distinct hypercube vertices, two classes.

    Each class owns ``clusters_per_class`` vertices of ``{-s, +s}^n_inf``.
    The informative columns land at random positions among standard-normal
    noise columns; ``true_features`` lists them.
    """
    _check_positive(n_samples=n_samples, n_features=n_features, n_inf=n_inf,
                    clusters_per_class=clusters_per_class)
    if n_inf > n_features:
        raise DataError("n_inf exceeds n_features")
    n_clusters = 2 * clusters_per_class
    if n_inf < 63 and n_clusters > 2**n_inf:
        raise DataError(f"{n_clusters} clusters need more than the {2**n_inf} hypercube vertices")
    if n_samples < n_clusters:
        raise DataError("need at least one sample per cluster")
    rng = np.random.default_rng(seed)

    codes = rng.choice(2**n_inf, size=n_clusters, replace=False)
    bits = (codes[:, None] >> np.arange(n_inf)[None, :]) & 1
    vertices = vertex_scale * (2.0 * bits - 1.0)

    sizes = np.full(n_clusters, n_samples // n_clusters)
    sizes[: n_samples % n_clusters] += 1
    cluster = np.repeat(np.arange(n_clusters), sizes)
    y = (cluster >= clusters_per_class).astype(np.float64)
    informative = vertices[cluster] + cluster_std * rng.standard_normal((n_samples, n_inf))

    x = rng.standard_normal((n_samples, n_features))
    true = np.sort(rng.choice(n_features, size=n_inf, replace=False))
    x[:, true] = informative
    order = rng.permutation(n_samples)
    ds = Dataset(x[order], y[order], Task(BINARY))
    params = dict(generator="madelon", seed=seed, n_samples=n_samples, n_features=n_features,
                  n_inf=n_inf, clusters_per_class=clusters_per_class,
                  vertex_scale=vertex_scale, cluster_std=cluster_std,
                  vertices=vertices.tolist())
    return Synthetic(ds, true, params)


def gen_xor(seed: int = 0, n_samples: int = 200, n_features: int = 500) -> Synthetic:
    """Bernoulli(0.5) binary features; the label is the XOR of two of them."""
    _check_positive(n_samples=n_samples, n_features=n_features)
    if n_features < 2:
        raise DataError("XOR needs at least 2 features")
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 2, size=(n_samples, n_features)).astype(np.float64)
    true = np.sort(rng.choice(n_features, size=2, replace=False))
    y = np.logical_xor(x[:, true[0]], x[:, true[1]]).astype(np.float64)
    params = dict(generator="xor", seed=seed, n_samples=n_samples, n_features=n_features)
    return Synthetic(Dataset(x, y, Task(BINARY)), true, params)


def gen_linreg(
    seed: int = 0,
    n_samples: int = 200,
    n_features: int = 500,
    n_inf: int = 5,
    noise_std: float = 0.0,
    coef_range: tuple[float, float] = (1.0, 100.0),
) -> Synthetic:
    """Standard-normal inputs, target linear in ``n_inf`` random columns."""
    _check_positive(n_samples=n_samples, n_features=n_features, n_inf=n_inf)
    if n_inf > n_features:
        raise DataError("n_inf exceeds n_features")
    lo, hi = coef_range
    if lo > hi:
        raise DataError("coef_range must be (low, high) with low <= high")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n_samples, n_features))
    true = np.sort(rng.choice(n_features, size=n_inf, replace=False))
    coef = rng.uniform(lo, hi, size=n_inf)
    y = x[:, true] @ coef
    if noise_std:
        y = y + noise_std * rng.standard_normal(n_samples)
    params = dict(generator="linreg", seed=seed, n_samples=n_samples, n_features=n_features,
                  n_inf=n_inf, noise_std=noise_std, coef=coef.tolist())
    return Synthetic(Dataset(x, y, Task(REGRESSION)), true, params)


def friedman1_target(x5) -> np.ndarray:
    """Friedman #1 response for an (n, 5) array of the relevant inputs."""
    x5 = np.atleast_2d(np.asarray(x5, dtype=np.float64))
    return (
        10.0 * np.sin(np.pi * x5[:, 0] * x5[:, 1])
        + 20.0 * (x5[:, 2] - 0.5) ** 2
        + 10.0 * x5[:, 3]
        + 5.0 * x5[:, 4]
    )


def gen_friedman(
    seed: int = 0, n_samples: int = 200, n_features: int = 500, noise_std: float = 0.0
) -> Synthetic:
    """Uniform [0, 1] inputs with the Friedman #1 response on 5 random columns.

    ``true_features[i]`` holds the column playing the role of input ``i + 1``.
    """
    _check_positive(n_samples=n_samples, n_features=n_features)
    if n_features < 5:
        raise DataError("Friedman #1 needs at least 5 features")
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, size=(n_samples, n_features))
    true = rng.choice(n_features, size=5, replace=False)
    y = friedman1_target(x[:, true])
    if noise_std:
        y = y + noise_std * rng.standard_normal(n_samples)
    params = dict(generator="friedman", seed=seed, n_samples=n_samples, n_features=n_features,
                  noise_std=noise_std, role_order=true.tolist())
    return Synthetic(Dataset(x, y, Task(REGRESSION)), np.sort(true), params)


GENERATORS = {
    "madelon": gen_madelon,
    "xor": gen_xor,
    "linreg": gen_linreg,
    "friedman": gen_friedman,
}


# ---------------------------------------------------------------------------
# CSV


def infer_task(y: np.ndarray, class_cap: int = DEFAULT_CLASS_CAP) -> Task:
    values = np.unique(y)
    if np.all(values == np.round(values)) and values.size <= class_cap:
        return Task(BINARY) if values.size == 2 else Task(MULTICLASS, int(values.size))
    return Task(REGRESSION)


def load_csv(
    path,
    target_col: str = "target",
    task: Task | str | None = None,
    class_cap: int = DEFAULT_CLASS_CAP,
) -> Dataset:
    """Read a numeric CSV with a header row.

    Classification labels are remapped to ``0..k-1`` in sorted order.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if target_col not in header:
            raise DataError(f"{path}: no target column {target_col!r}")
        t = header.index(target_col)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
            values = []
            for col, cell in zip(header, row):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"{path}:{lineno}: column {col!r}: non-numeric cell {cell!r}") from None
                if not math.isfinite(v):
                    raise DataError(f"{path}:{lineno}: column {col!r}: non-finite value {cell!r}")
                values.append(v)
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: no data rows")
    table = np.array(rows, dtype=np.float64)
    y = table[:, t]
    x = np.delete(table, t, axis=1)
    names = tuple(h for i, h in enumerate(header) if i != t)
    if task is None:
        task = infer_task(y, class_cap)
    elif isinstance(task, str):
        task = Task.parse(task)
    if task.is_classification:
        classes, y = np.unique(y, return_inverse=True)
        if task.kind == MULTICLASS and classes.size != task.n_classes:
            task = Task(MULTICLASS, int(classes.size))
        if not np.array_equal(classes, np.arange(classes.size)):
            logger.info("remapped class labels %s to 0..%d", classes.tolist(), classes.size - 1)
    return Dataset(x, y.astype(np.float64), task, names)


def save_csv(ds: Dataset, path, target_col: str = "target") -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([*ds.feature_names, target_col])
        for row, target in zip(ds.x, ds.y):
            writer.writerow([repr(float(v)) for v in row] + [repr(float(target))])
