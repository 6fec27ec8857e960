"""Training an MLP with an FS layer in front, under cycled penalty multipliers.

The objective on a batch is::

    F = loss + sum_h (l1*|W_h| + l2*W_h^2) + lambda_s*omega_s(W) + lambda_a*omega_a(W, batch)

``train`` splits the data 80:20, fits standardization on the training part,
runs Adam through every stage of the schedule and keeps the checkpoint with
the best validation metric among those whose per-neuron average penalties
both stay under ``penalty_limit``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import fslayer
from .data import REGRESSION, Dataset, SplitSpec, split_indices, standardize_apply, standardize_fit
from .evaluation import f1_weighted
from .fslayer import FsWeights, SaliencyReport
from .nn import AdamState, Architecture, MlpParams, adam_step, backward, forward, init_params, loss, reg_penalty
from .schedule import CyclicSchedule, LambdaCycle, stage_sequence

logger = logging.getLogger(__name__)

METRICS = ("accuracy", "f1", "neg_mse")
AUTO_FULL_BATCH_MAX = 512
AUTO_BATCH_SIZE = 128


@dataclass(frozen=True)
class TrainConfig:
    schedule: CyclicSchedule
    dim: int = 15
    hidden: tuple[int, ...] = (5, 5)
    l1: float = 0.0
    l2: float = 0.0
    lr: float = 1e-3
    batch_size: int | str | None = None  # None: auto, "full": whole training set
    seed: int = 0
    metric: str | None = None  # None: accuracy for classification, neg_mse for regression
    penalty_limit: float = 0.3
    train_fraction: float = 0.8
    standardize_target: bool = True
    reset_optimizer: bool = False  # fresh Adam moments at the start of every stage

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.penalty_limit < 0:
            raise ValueError("penalty_limit must be nonnegative")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.metric is not None and self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}")
        if isinstance(self.batch_size, str) and self.batch_size != "full":
            raise ValueError("batch_size must be an integer, 'full' or None")

    def to_json(self) -> dict:
        d = asdict(self)
        d["schedule"] = self.schedule.to_json()
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_json(cls, obj: dict) -> TrainConfig:
        obj = dict(obj)
        obj["schedule"] = CyclicSchedule.from_json(obj["schedule"])
        obj["hidden"] = tuple(obj.get("hidden", ()))
        return cls(**obj)


@dataclass(frozen=True, eq=False)
class Checkpoint:
    fs_weights: FsWeights
    mlp: MlpParams
    val_metric: float
    val_objective: float
    avg_penalty_s: float
    avg_penalty_a: float
    stage_index: int
    epoch_index: int

    def summary(self) -> dict:
        return {
            "val_metric": self.val_metric,
            "val_objective": self.val_objective,
            "avg_penalty_s": self.avg_penalty_s,
            "avg_penalty_a": self.avg_penalty_a,
            "stage_index": self.stage_index,
            "epoch_index": self.epoch_index,
        }


HISTORY_FIELDS = ("loss", "omega_s", "omega_a", "lambda_s", "lambda_a", "val_metric")


@dataclass(eq=False)
class TrainReport:
    best: Checkpoint
    saliency: SaliencyReport
    history: dict[str, np.ndarray]
    no_admissible_model: bool = False
    epochs_run: int = 0
    n_stages: int = 0
    train_indices: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    val_indices: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def to_json(self, include_history: bool = True, include_weights: bool = False) -> dict:
        out = {
            "best": self.best.summary(),
            "no_admissible_model": self.no_admissible_model,
            "epochs_run": self.epochs_run,
            "n_stages": self.n_stages,
            "saliency": self.saliency.to_json(),
        }
        if include_history:
            out["history"] = {k: v.tolist() for k, v in self.history.items()}
        if include_weights:
            out["fs_weights"] = self.best.fs_weights.w.tolist()
        return out


# ---------------------------------------------------------------------------
# objective


def _fs_array(fs) -> np.ndarray:
    return fs.w if isinstance(fs, FsWeights) else fs


def objective(fs, mlp: MlpParams, x, y, lambda_s: float, lambda_a: float, arch: Architecture):
    """Value of F on a batch and its parts ``{l, reg, omega_s, omega_a}``."""
    w = _fs_array(fs)
    a = x @ w
    out, _ = forward(mlp, a)
    l = loss(out, y, mlp.output)
    reg = reg_penalty(mlp, arch.l1, arch.l2)
    om_s = float(np.maximum(0.0, np.abs(w).sum(axis=0) - 1.0).sum())
    om_a = float(np.maximum(0.0, 1.0 - np.mean(a * a, axis=0)).sum())
    f = l + reg + lambda_s * om_s + lambda_a * om_a
    return f, {"l": l, "reg": reg, "omega_s": om_s, "omega_a": om_a}


def objective_grad(fs, mlp: MlpParams, x, y, lambda_s: float, lambda_a: float, arch: Architecture,
                   return_value: bool = False):
    """Gradients of F; the FS-layer gradient sits in ``Gradients.fs``.

    With ``return_value`` the result is ``(grads, F, parts)`` from the same pass.
    """
    w = _fs_array(fs)
    n = x.shape[0]
    a = x @ w
    out, cache = forward(mlp, a)
    grads = backward(mlp, cache, y, arch.l1, arch.l2)
    col = np.abs(w).sum(axis=0)
    var = np.mean(a * a, axis=0)
    d_a = grads.inputs
    if lambda_a:
        d_a = d_a - (lambda_a * 2.0 / n) * (a * (var < 1.0))
    g_fs = x.T @ d_a
    if lambda_s:
        g_fs += lambda_s * (np.sign(w) * (col > 1.0))
    grads.fs = g_fs
    if not return_value:
        return grads
    l = loss(out, y, mlp.output)
    reg = reg_penalty(mlp, arch.l1, arch.l2)
    om_s = float(np.maximum(0.0, col - 1.0).sum())
    om_a = float(np.maximum(0.0, 1.0 - var).sum())
    f = l + reg + lambda_s * om_s + lambda_a * om_a
    return grads, f, {"l": l, "reg": reg, "omega_s": om_s, "omega_a": om_a}


# ---------------------------------------------------------------------------
# evaluation helpers


def predict(fs, mlp: MlpParams, x) -> np.ndarray:
    out, _ = forward(mlp, x @ _fs_array(fs))
    return out


def _score(out: np.ndarray, y: np.ndarray, metric: str, task) -> float:
    if metric == "neg_mse":
        return -float(np.mean((out[:, 0] - y) ** 2))
    if out.shape[1] == 1:
        pred = (out[:, 0] >= 0.5).astype(np.int64)
    else:
        pred = np.argmax(out, axis=1)
    if metric == "accuracy":
        return float(np.mean(pred == y.astype(np.int64)))
    return f1_weighted(y.astype(np.int64), pred, task)


def _batch_size(cfg: TrainConfig, n_train: int) -> int:
    if cfg.batch_size is None:
        return n_train if n_train <= AUTO_FULL_BATCH_MAX else AUTO_BATCH_SIZE
    if cfg.batch_size == "full" or cfg.batch_size == 0:
        return n_train
    return max(1, min(int(cfg.batch_size), n_train))


# ---------------------------------------------------------------------------
# training


def train(ds: Dataset, cfg: TrainConfig, progress=None) -> TrainReport:
    """Run the full cyclic-penalty training and pick the optimal checkpoint.

    ``progress``, if given, is called as ``progress(epoch, n_epochs)`` after
    every epoch.
    """
    task = ds.task
    metric = cfg.metric or ("neg_mse" if task.kind == REGRESSION else "accuracy")
    if metric == "neg_mse" and task.is_classification:
        raise ValueError("neg_mse needs a regression task")
    if metric != "neg_mse" and not task.is_classification:
        raise ValueError(f"{metric} needs a classification task")

    tr_idx, va_idx = split_indices(ds, SplitSpec(cfg.train_fraction, cfg.seed, stratified=True))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        std = standardize_fit(ds.x[tr_idx])
    x_tr = standardize_apply(std, ds.x[tr_idx])
    x_va = standardize_apply(std, ds.x[va_idx])
    y_tr = ds.y[tr_idx].copy()
    y_va = ds.y[va_idx].copy()
    if task.kind == REGRESSION and cfg.standardize_target:
        mu, sd = y_tr.mean(), y_tr.std()
        sd = sd if sd > 0 else 1.0
        y_tr = (y_tr - mu) / sd
        y_va = (y_va - mu) / sd

    n_tr, m = x_tr.shape
    arch = Architecture.for_task(task, cfg.dim, cfg.hidden, cfg.l1, cfg.l2)
    seeds = np.random.SeedSequence(cfg.seed).spawn(2)
    mlp = init_params(arch, np.random.default_rng(seeds[0]))
    w = fslayer.init_fs_weights(m, cfg.dim).w.copy()
    shuffle_rng = np.random.default_rng(seeds[1])
    n_layers = len(mlp.weights)
    adam = AdamState(lr=cfg.lr)

    bs = _batch_size(cfg, n_tr)
    stages = stage_sequence(cfg.schedule)
    n_epochs = len(stages) * cfg.schedule.epochs_per_stage
    hist = {k: np.empty(n_epochs) for k in HISTORY_FIELDS}

    best = best_any = None
    best_key = best_any_key = None
    epoch = 0
    for stage, (ls, la) in enumerate(stages):
        if cfg.reset_optimizer and stage:
            adam = AdamState(lr=cfg.lr)
        for _ in range(cfg.schedule.epochs_per_stage):
            order = np.arange(n_tr) if bs >= n_tr else shuffle_rng.permutation(n_tr)
            sums = np.zeros(3)
            n_batches = 0
            for start in range(0, n_tr, bs):
                rows = order[start : start + bs]
                xb, yb = (x_tr, y_tr) if bs >= n_tr else (x_tr[rows], y_tr[rows])
                g, _, parts = objective_grad(w, mlp, xb, yb, ls, la, arch, return_value=True)
                sums += (parts["l"], parts["omega_s"], parts["omega_a"])
                n_batches += 1
                new = adam_step(adam, [w, *mlp.weights, *mlp.biases], [g.fs, *g.weights, *g.biases])
                w = new[0]
                mlp = MlpParams(new[1 : 1 + n_layers], new[1 + n_layers :], mlp.output)

            if not np.all(np.isfinite(sums)) or not np.all(np.isfinite(w)):
                raise FloatingPointError(f"training diverged at epoch {epoch} (stage {stage})")

            # validation
            a_va = x_va @ w
            out_va, _ = forward(mlp, a_va)
            val_metric = _score(out_va, y_va, metric, task)
            om_s = float(np.maximum(0.0, np.abs(w).sum(axis=0) - 1.0).sum())
            om_a = float(np.maximum(0.0, 1.0 - np.mean(a_va * a_va, axis=0)).sum())
            val_obj = (loss(out_va, y_va, mlp.output) + reg_penalty(mlp, cfg.l1, cfg.l2)
                       + ls * om_s + la * om_a)
            avg_s, avg_a = om_s / cfg.dim, om_a / cfg.dim

            hist["loss"][epoch], hist["omega_s"][epoch], hist["omega_a"][epoch] = sums / n_batches
            hist["lambda_s"][epoch], hist["lambda_a"][epoch] = ls, la
            hist["val_metric"][epoch] = val_metric

            key = (val_metric, -val_obj)
            if best_any_key is None or key > best_any_key:
                best_any_key = key
                best_any = (w, mlp, val_metric, val_obj, avg_s, avg_a, stage, epoch)
            if avg_s <= cfg.penalty_limit and avg_a <= cfg.penalty_limit:
                if best_key is None or key > best_key:
                    best_key = key
                    best = (w, mlp, val_metric, val_obj, avg_s, avg_a, stage, epoch)
            epoch += 1
            if progress is not None:
                progress(epoch, n_epochs)

    no_admissible = best is None
    if no_admissible:
        warnings.warn("no checkpoint met the penalty limit; using the best-metric checkpoint",
                      stacklevel=2)
        best = best_any
    bw, bmlp, *rest = best
    # arrays are replaced, never mutated, by adam_step, so no copies are needed
    ckpt = Checkpoint(FsWeights(bw), bmlp, *rest)
    sal = fslayer.saliency_report(bw, x_tr, ds.feature_names)
    return TrainReport(ckpt, sal, hist, no_admissible, epoch, len(stages), tr_idx, va_idx)


# ---------------------------------------------------------------------------
# selection


def select_features(report, top_k: int | None = None, threshold: float | None = None,
                    measure: str = "sum_weight") -> list[int]:
    """Feature indices by saliency: the ``top_k`` best, or all scoring above ``threshold``."""
    sal = report.saliency if isinstance(report, TrainReport) else report
    scores = sal.scores(measure)
    ranking = sal.ranking(measure)
    if (top_k is None) == (threshold is None):
        raise ValueError("give exactly one of top_k or threshold")
    if top_k is not None:
        if top_k < 0 or top_k > scores.size:
            raise ValueError(f"top_k must lie in [0, {scores.size}]")
        return [int(j) for j in ranking[:top_k]]
    return [int(j) for j in ranking if scores[j] > threshold]


def snel_ranker(cfg: TrainConfig, measure: str = "sum_weight"):
    """Adapter for cross-validation: ``Dataset -> feature ranking``."""

    def rank(ds: Dataset) -> np.ndarray:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            report = train(ds, cfg)
        return report.saliency.ranking(measure)

    rank.__name__ = "snel"
    return rank


def default_schedule(range_s="universal", range_a="universal", steps=38, cycles_s=1, cycles_a=2,
                     epochs_per_stage=1) -> CyclicSchedule:
    return CyclicSchedule(LambdaCycle.preset(range_s, steps, cycles_s),
                          LambdaCycle.preset(range_a, steps, cycles_a), epochs_per_stage)
