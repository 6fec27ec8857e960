"""Named training setups for the benchmark experiments and run-config parsing.

Small-sample benchmarks (200 rows) use two hidden layers of 5 units, 38
steps per half-cycle and one epoch per stage; the 5k variants use one hidden
layer of 10 units, 19 steps and ten epochs per stage. XOR needs the narrower
``[0.001, 0.02]`` multiplier range; everything else uses ``[0.01, 0.2]``.
"""

from __future__ import annotations

from dataclasses import replace

from .schedule import RANGE_PRESETS, CyclicSchedule, LambdaCycle
from .train import TrainConfig


def _cfg(rng, steps, epochs, hidden, reg, lr, dim=15, metric=None, batch_size=None):
    sched = CyclicSchedule(LambdaCycle.preset(rng, steps, 1), LambdaCycle.preset(rng, steps, 2), epochs)
    return TrainConfig(sched, dim=dim, hidden=hidden, l1=reg, l2=reg, lr=lr, metric=metric,
                       batch_size=batch_size)


PRESETS: dict[str, TrainConfig] = {
    "xor": _cfg("small-range", 38, 1, (5, 5), 0.01, 1e-3),
    "mad": _cfg("universal", 38, 1, (5, 5), 0.01, 1e-3),
    "reg": _cfg("universal", 38, 1, (5, 5), 0.01, 1e-3),
    "fri": _cfg("universal", 38, 1, (5, 5), 0.01, 1e-3),
    "xor5k": _cfg("universal", 19, 10, (10,), 0.0, 1e-3),
    "mad5k": _cfg("universal", 19, 10, (10,), 0.0, 1e-3),
    "reg5k": _cfg("universal", 19, 10, (10,), 0.01, 1e-3),
    "fri5k": _cfg("universal", 19, 10, (10,), 0.01, 1e-3),
    # high-dimensional microarray-style data: 30 features, F1-driven selection
    "microarray": _cfg("medium", 18, 1, (10,), 0.01, 1e-3, dim=30, metric="f1"),
}

# saliency measure each preset reports by default
PRESET_MEASURE = {name: "sum_weight" for name in PRESETS}
PRESET_MEASURE["microarray"] = "max_weight"

# generator behind each benchmark preset
PRESET_GENERATOR = {
    "xor": "xor", "xor5k": "xor",
    "mad": "madelon", "mad5k": "madelon",
    "reg": "linreg", "reg5k": "linreg",
    "fri": "friedman", "fri5k": "friedman",
}


def get_preset(name: str) -> TrainConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


TRAIN_KEYS = {"dim", "hidden", "l1", "l2", "lr", "batch_size", "seed", "metric", "penalty_limit",
              "train_fraction", "standardize_target", "reset_optimizer"}


def build_config(obj: dict, base: TrainConfig | None = None) -> TrainConfig:
    """Apply the training keys of a run config on top of ``base`` (or its preset).

    Recognized keys: ``preset``, the ``TrainConfig`` fields, ``lambda_s`` and
    ``lambda_a`` (``{min, max, steps, cycles}``, partial allowed, or a range
    preset name under ``range``) and ``epochs_per_stage``.
    """
    if base is None:
        base = get_preset(obj.get("preset", "xor"))
    unknown = set(obj) - TRAIN_KEYS - {"preset", "lambda_s", "lambda_a", "epochs_per_stage",
                                        "data", "measure", "schedule"}
    if unknown:
        raise KeyError(f"unknown config keys {sorted(unknown)}")
    cfg = replace(base, **{k: obj[k] for k in TRAIN_KEYS if k in obj})
    sched = cfg.schedule
    if "schedule" in obj:
        sched = CyclicSchedule.from_json(obj["schedule"])
    ls, la = sched.lambda_s, sched.lambda_a
    if "lambda_s" in obj:
        ls = _cycle(ls, obj["lambda_s"])
    if "lambda_a" in obj:
        la = _cycle(la, obj["lambda_a"])
    sched = CyclicSchedule(ls, la, int(obj.get("epochs_per_stage", sched.epochs_per_stage)))
    return replace(cfg, schedule=sched)


def _cycle(base: LambdaCycle, spec: dict) -> LambdaCycle:
    spec = dict(spec)
    if "range" in spec:
        lo, hi = RANGE_PRESETS[spec.pop("range")]
        spec = {"min": lo, "max": hi, **spec}
    return replace(base, **spec)
