"""Metrics, baseline ranker and classifiers, and the cross-validation harness."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .data import BINARY, Dataset, Task, standardize_apply, standardize_fit

VAR_FLOOR = 1e-9


# ---------------------------------------------------------------------------
# index of success


def success_from_counts(r_s: int, i_s: int, r_t: int, i_t: int) -> float:
    """``R_s/R_t - alpha * I_s/I_t`` with ``alpha = min(1/2, R_t/I_t)``.

    Evaluated in exact rational arithmetic and rounded once.
    """
    if r_t <= 0:
        raise ValueError("there must be at least one relevant feature")
    if not (0 <= r_s <= r_t and 0 <= i_s <= max(i_t, 0)):
        raise ValueError("selected counts exceed totals")
    if i_t == 0:
        return float(Fraction(r_s, r_t))
    alpha = min(Fraction(1, 2), Fraction(r_t, i_t))
    return float(Fraction(r_s, r_t) - alpha * Fraction(i_s, i_t))


def index_of_success(selected, true_features, m: int, ranked: bool = True) -> float:
    """Index of success of a selection against the known relevant features.

    ``selected`` is ordered best-first when ``ranked``; if its first
    ``len(true_features)`` entries are exactly the relevant features the
    score is 1.
    """
    selected = [int(j) for j in selected]
    true = {int(j) for j in true_features}
    if not true:
        raise ValueError("true_features must be non-empty")
    if any(j < 0 or j >= m for j in [*selected, *true]):
        raise ValueError("feature index out of range")
    if len(set(selected)) != len(selected):
        raise ValueError("selected contains duplicates")
    if ranked and set(selected[: len(true)]) == true:
        return 1.0
    r_s = len(true.intersection(selected))
    i_s = len(selected) - r_s
    return success_from_counts(r_s, i_s, len(true), m - len(true))


# ---------------------------------------------------------------------------
# F1


def _f1(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 0.0 if denom == 0 or tp == 0 else 2.0 * tp / denom


def f1_weighted(y_true, y_pred, task: Task | str = BINARY) -> float:
    """Binary: F1 of class 1. Multiclass: per-class F1 averaged by support."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError("y_true and y_pred differ in length")
    kind = task.kind if isinstance(task, Task) else task
    if kind == BINARY:
        tp = int(np.sum((y_pred == 1) & (y_true == 1)))
        fp = int(np.sum((y_pred == 1) & (y_true != 1)))
        fn = int(np.sum((y_pred != 1) & (y_true == 1)))
        return _f1(tp, fp, fn)
    total = 0.0
    for c in np.unique(y_true):
        tp = int(np.sum((y_pred == c) & (y_true == c)))
        fp = int(np.sum((y_pred == c) & (y_true != c)))
        fn = int(np.sum((y_pred != c) & (y_true == c)))
        total += (tp + fn) * _f1(tp, fp, fn)
    return total / y_true.size


# ---------------------------------------------------------------------------
# f-score baseline


def fisher_score(ds: Dataset) -> np.ndarray:
    """Between-class over within-class scatter, per feature.

    ``sum_c n_c (mean_c - mean)^2 / sum_c n_c var_c`` with population
    variances; the denominator is floored at 1e-9 and a zero numerator
    scores 0.
    """
    if not ds.task.is_classification:
        raise ValueError("fisher_score supports classification tasks only")
    x, labels = ds.x, ds.labels
    mu = x.mean(axis=0)
    between = np.zeros(ds.m)
    within = np.zeros(ds.m)
    for c in np.unique(labels):
        xc = x[labels == c]
        mc = xc.mean(axis=0)
        between += xc.shape[0] * (mc - mu) ** 2
        within += ((xc - mc) ** 2).sum(axis=0)
    return np.where(between == 0, 0.0, between / np.maximum(within, VAR_FLOOR))


def fisher_ranker(ds: Dataset) -> np.ndarray:
    return np.argsort(-fisher_score(ds), kind="stable")


def random_ranker(seed: int) -> Callable[[Dataset], np.ndarray]:
    """Control ranker: a random permutation, reproducible per call order."""
    rng = np.random.default_rng(seed)

    def rank(ds: Dataset) -> np.ndarray:
        return rng.permutation(ds.m)

    rank.__name__ = "random"
    return rank


def identity_ranker(ds: Dataset) -> np.ndarray:
    return np.arange(ds.m)


# ---------------------------------------------------------------------------
# classifiers


def knn_predict(train: Dataset, test_x, k: int = 5) -> np.ndarray:
    """Majority vote of the ``k`` nearest training points (Euclidean).

    Equal distances keep training order; vote ties go to the smaller label.
    """
    if k < 1 or k > train.n:
        raise ValueError(f"k must lie in [1, {train.n}]")
    test_x = np.atleast_2d(np.asarray(test_x, dtype=np.float64))
    xt = train.x
    d2 = (test_x**2).sum(axis=1)[:, None] - 2.0 * test_x @ xt.T + (xt**2).sum(axis=1)[None, :]
    nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]
    votes = train.labels[nearest]
    n_classes = max(int(train.labels.max()) + 1, train.task.n_classes)
    counts = np.zeros((test_x.shape[0], n_classes), dtype=np.int64)
    np.add.at(counts, (np.arange(test_x.shape[0])[:, None], votes), 1)
    return np.argmax(counts, axis=1)


@dataclass(frozen=True, eq=False)
class GaussianNB:
    classes: np.ndarray
    log_prior: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    @classmethod
    def fit(cls, train: Dataset) -> GaussianNB:
        labels = train.labels
        classes = np.unique(labels)
        means = np.stack([train.x[labels == c].mean(axis=0) for c in classes])
        variances = np.stack([train.x[labels == c].var(axis=0) for c in classes])
        prior = np.array([np.mean(labels == c) for c in classes])
        return cls(classes, np.log(prior), means, np.maximum(variances, VAR_FLOOR))

    def log_joint(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        ll = -0.5 * (
            np.log(2.0 * np.pi * self.variances).sum(axis=1)[None, :]
            + (((x[:, None, :] - self.means[None]) ** 2) / self.variances[None]).sum(axis=2)
        )
        return ll + self.log_prior[None, :]

    def predict(self, x) -> np.ndarray:
        return self.classes[np.argmax(self.log_joint(x), axis=1)]


def gnb_predict(train: Dataset, test_x) -> np.ndarray:
    return GaussianNB.fit(train).predict(test_x)


CLASSIFIERS = {
    "knn": knn_predict,
    "gnb": gnb_predict,
}


# ---------------------------------------------------------------------------
# cross-validation


class StratificationError(ValueError):
    pass


@dataclass(frozen=True)
class CvSpec:
    k: int = 10
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be >= 2")


def kfold_indices(ds: Dataset, spec: CvSpec) -> list[np.ndarray]:
    """Test-fold row indices; together they partition ``range(ds.n)``."""
    rng = np.random.default_rng(spec.seed)
    if ds.n < spec.k:
        raise ValueError(f"{ds.n} samples cannot fill {spec.k} folds")
    folds: list[list[int]] = [[] for _ in range(spec.k)]
    if spec.stratified and ds.task.is_classification:
        labels = ds.labels
        offset = 0
        for c in np.unique(labels):
            idx = rng.permutation(np.flatnonzero(labels == c))
            if idx.size < spec.k:
                raise StratificationError(
                    f"class {c} has {idx.size} samples, fewer than {spec.k} folds")
            for i, j in enumerate(idx):
                folds[(i + offset) % spec.k].append(int(j))
            offset += idx.size
    else:
        for i, j in enumerate(rng.permutation(ds.n)):
            folds[i % spec.k].append(int(j))
    return [np.sort(np.array(f, dtype=np.int64)) for f in folds]


@dataclass
class CvResult:
    mean: float
    std: float
    fold_scores: list[float]
    selected: list[list[int]] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"mean": self.mean, "std": self.std, "fold_scores": self.fold_scores,
                "selected": self.selected}


def cv_f1(ds: Dataset, fs_method, n_select: int, classifier, spec: CvSpec) -> CvResult:
    """Weighted F1 under k-fold CV with the feature selector inside the loop.

    ``fs_method(train) -> ranking`` sees only the standardized fold-train.
    ``classifier`` is a name from ``CLASSIFIERS`` or a callable
    ``(train, test_x) -> predictions``. Several classifiers may be passed as a
    list; a dict of results keyed by name is returned then, sharing one
    selection per fold.
    """
    multi = isinstance(classifier, (list, tuple))
    clfs = list(classifier) if multi else [classifier]
    fns = [CLASSIFIERS[c] if isinstance(c, str) else c for c in clfs]
    names = [c if isinstance(c, str) else getattr(c, "__name__", str(i)) for i, c in enumerate(clfs)]
    if not ds.task.is_classification:
        raise ValueError("cv_f1 needs a classification task")
    scores = {nm: [] for nm in names}
    selected = []
    for test_idx in kfold_indices(ds, spec):
        train_idx = np.setdiff1d(np.arange(ds.n), test_idx)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            std = standardize_fit(ds.x[train_idx])
        tr = Dataset(standardize_apply(std, ds.x[train_idx]), ds.y[train_idx], ds.task, ds.feature_names)
        te_x = standardize_apply(std, ds.x[test_idx])
        cols = np.asarray(fs_method(tr))[:n_select]
        selected.append([int(j) for j in cols])
        tr_sel = tr.select_features(cols)
        te_y = ds.labels[test_idx]
        for nm, fn in zip(names, fns):
            pred = fn(tr_sel, te_x[:, cols])
            scores[nm].append(f1_weighted(te_y, pred, ds.task))
    results = {
        nm: CvResult(float(np.mean(s)), float(np.std(s)), [float(v) for v in s], selected)
        for nm, s in scores.items()
    }
    return results if multi else results[names[0]]
