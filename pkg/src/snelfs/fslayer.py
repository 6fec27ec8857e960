"""The feature-selection layer: a bias-free linear layer ``A = X W`` kept
sparse by two penalties, plus the saliency scores read off its weights.

Each FS neuron ``k`` is pushed towards

* an incoming-weight budget ``sum_j |w_jk| <= 1`` (``omega_s``), and
* an activation-variance floor ``Var(A_k) >= 1`` (``omega_a``).

On standardized inputs the two can only hold together when the column has
a single nonzero weight of magnitude one, i.e. the neuron copies one
feature. Variances are uncentered, ``mean(A_k ** 2)``, because standardized
inputs give zero-mean activations.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .linalg import ShapeError, as_matrix

DEGENERATE_STD = 1e-12


@dataclass(frozen=True, eq=False)
class FsWeights:
    w: np.ndarray

    def __post_init__(self):
        w = as_matrix(self.w, "FS weights")
        if w.shape[0] < 1 or w.shape[1] < 1:
            raise ShapeError("FS weights need m >= 1 rows and dim >= 1 columns")
        object.__setattr__(self, "w", w)

    @property
    def m(self) -> int:
        return self.w.shape[0]

    @property
    def dim(self) -> int:
        return self.w.shape[1]


def _w(fs) -> np.ndarray:
    return fs.w if isinstance(fs, FsWeights) else np.asarray(fs, dtype=np.float64)


def init_fs_weights(m: int, dim: int) -> FsWeights:
    """Constant ``1/(2m)`` weights: every column sums to 1/2."""
    if m < 1 or dim < 1:
        raise ValueError("m and dim must be >= 1")
    return FsWeights(np.full((m, dim), 1.0 / (2.0 * m)))


def fs_forward(fs, x: np.ndarray) -> np.ndarray:
    w = _w(fs)
    if x.shape[1] != w.shape[0]:
        raise ShapeError(f"x has {x.shape[1]} columns, FS layer expects {w.shape[0]}")
    return x @ w


def batch_variance(a) -> np.ndarray | float:
    """Uncentered variance ``mean(a**2)`` along the sample axis."""
    a = np.asarray(a, dtype=np.float64)
    v = np.mean(a * a, axis=0)
    return float(v) if a.ndim == 1 else v


class Penalty(NamedTuple):
    total: float
    per_neuron: np.ndarray


@dataclass(frozen=True, eq=False)
class PenaltyValues:
    omega_s: float
    omega_a: float
    per_neuron_s: np.ndarray
    per_neuron_a: np.ndarray


def omega_s(fs) -> Penalty:
    per = np.maximum(0.0, np.abs(_w(fs)).sum(axis=0) - 1.0)
    return Penalty(float(per.sum()), per)


def omega_s_grad(fs) -> np.ndarray:
    w = _w(fs)
    active = np.abs(w).sum(axis=0) > 1.0
    return np.sign(w) * active


def omega_a(fs, x: np.ndarray) -> Penalty:
    var = batch_variance(fs_forward(fs, x))
    per = np.maximum(0.0, 1.0 - np.atleast_1d(var))
    return Penalty(float(per.sum()), per)


def omega_a_grad(fs, x: np.ndarray) -> np.ndarray:
    a = fs_forward(fs, x)
    active = batch_variance(a) < 1.0
    n = x.shape[0]
    return -(2.0 / n) * (x.T @ (a * active))


def penalties(fs, x: np.ndarray) -> PenaltyValues:
    s = omega_s(fs)
    a = omega_a(fs, x)
    return PenaltyValues(s.total, a.total, s.per_neuron, a.per_neuron)


# ---------------------------------------------------------------------------
# saliency


def _std_activations(fs, x) -> np.ndarray:
    return np.sqrt(np.atleast_1d(batch_variance(fs_forward(fs, x))))


def degenerate_neurons(fs, x: np.ndarray | None = None) -> list[int]:
    """Neurons whose saliency contribution is undefined (zero column or zero std)."""
    w = _w(fs)
    bad = np.abs(w).sum(axis=0) == 0
    if x is not None:
        bad |= _std_activations(w, x) < DEGENERATE_STD
    return np.flatnonzero(bad).tolist()


def sum_weight_saliency(fs, x: np.ndarray) -> np.ndarray:
    """Average over neurons of ``|w_jk| / std(A_k)``.

    Neurons with ``std(A_k) < 1e-12`` are left out of the sum (the divisor
    stays ``dim``).
    """
    w = _w(fs)
    std = _std_activations(w, x)
    ok = std >= DEGENERATE_STD
    if not ok.all():
        warnings.warn(f"sum-weight saliency skips degenerate neurons {np.flatnonzero(~ok).tolist()}",
                      stacklevel=2)
    return (np.abs(w[:, ok]) / std[ok]).sum(axis=1) / w.shape[1]


def max_weight_saliency(fs) -> np.ndarray:
    """Largest column-normalized weight ``|w_jk| / sum_i |w_ik|`` per feature."""
    w = np.abs(_w(fs))
    col = w.sum(axis=0)
    ok = col > 0
    if not ok.any():
        warnings.warn("all FS columns are zero; max-weight saliency is zero", stacklevel=2)
        return np.zeros(w.shape[0])
    return (w[:, ok] / col[ok]).max(axis=1)


def rank_features(scores) -> np.ndarray:
    """Feature indices by descending score; ties go to the lower index."""
    return np.argsort(-np.asarray(scores), kind="stable")


@dataclass(frozen=True, eq=False)
class SaliencyReport:
    sum_weight: np.ndarray
    max_weight: np.ndarray
    ranking_sum: np.ndarray
    ranking_max: np.ndarray
    feature_names: tuple[str, ...] = ()
    excluded_neurons: tuple[int, ...] = ()
    duplicate_selections: dict = field(default_factory=dict)

    def scores(self, measure: str) -> np.ndarray:
        if measure == "sum_weight":
            return self.sum_weight
        if measure == "max_weight":
            return self.max_weight
        raise ValueError(f"unknown saliency measure {measure!r}")

    def ranking(self, measure: str) -> np.ndarray:
        self.scores(measure)  # validates the name
        return self.ranking_sum if measure == "sum_weight" else self.ranking_max

    def to_json(self) -> dict:
        names = self.feature_names or tuple(f"x{j}" for j in range(self.sum_weight.size))
        return {
            "features": [
                {"name": names[j], "index": j,
                 "sum_weight": float(self.sum_weight[j]), "max_weight": float(self.max_weight[j])}
                for j in range(self.sum_weight.size)
            ],
            "ranking_sum": self.ranking_sum.tolist(),
            "ranking_max": self.ranking_max.tolist(),
            "excluded_neurons": list(self.excluded_neurons),
            "duplicate_selections": {str(k): v for k, v in sorted(self.duplicate_selections.items())},
        }

    @classmethod
    def from_json(cls, obj: dict) -> SaliencyReport:
        feats = sorted(obj["features"], key=lambda f: f["index"])
        sw = np.array([f["sum_weight"] for f in feats])
        mw = np.array([f["max_weight"] for f in feats])
        return cls(
            sw, mw,
            np.asarray(obj.get("ranking_sum", rank_features(sw)), dtype=np.int64),
            np.asarray(obj.get("ranking_max", rank_features(mw)), dtype=np.int64),
            tuple(f["name"] for f in feats),
            tuple(obj.get("excluded_neurons", ())),
            {int(k): v for k, v in obj.get("duplicate_selections", {}).items()},
        )


def saliency_report(fs, x: np.ndarray, feature_names=()) -> SaliencyReport:
    """Both saliency measures on ``x`` (the full standardized training data)."""
    w = _w(fs)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sw = sum_weight_saliency(w, x)
        mw = max_weight_saliency(w)
    excluded = degenerate_neurons(w, x)
    # features chosen (by largest |w|) by more than one live neuron
    live = [k for k in range(w.shape[1]) if k not in excluded]
    picks: dict[int, list[int]] = {}
    for k in live:
        picks.setdefault(int(np.argmax(np.abs(w[:, k]))), []).append(k)
    dups = {j: ks for j, ks in picks.items() if len(ks) > 1}
    return SaliencyReport(sw, mw, rank_features(sw), rank_features(mw),
                          tuple(feature_names), tuple(excluded), dups)
