"""Cyclic schedule for the two penalty multipliers.

Each multiplier follows a triangular window: ``steps`` evenly spaced values
rising from min to max, then the same values in reverse. The outer
multiplier (``lambda_s``) is held at each of its values while the inner one
(``lambda_a``) runs its full set of cycles; every resulting pair is a stage.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

# Named ranges usable for either multiplier.
RANGE_PRESETS = {
    "tiny": (0.001, 0.01),
    "small-range": (0.001, 0.02),
    "medium": (0.01, 0.1),
    "universal": (0.01, 0.2),
}


@dataclass(frozen=True)
class LambdaCycle:
    min: float
    max: float
    steps: int
    cycles: int = 1

    def __post_init__(self):
        if not 0 <= self.min <= self.max:
            raise ValueError(f"need 0 <= min <= max, got [{self.min}, {self.max}]")
        if self.steps < 1 or self.cycles < 1:
            raise ValueError("steps and cycles must be >= 1")

    @classmethod
    def preset(cls, name: str, steps: int, cycles: int = 1) -> LambdaCycle:
        lo, hi = RANGE_PRESETS[name]
        return cls(lo, hi, steps, cycles)

    def values(self) -> np.ndarray:
        return np.tile(triangular_cycle(self.min, self.max, self.steps), self.cycles)


@dataclass(frozen=True)
class CyclicSchedule:
    lambda_s: LambdaCycle
    lambda_a: LambdaCycle
    epochs_per_stage: int = 1

    def __post_init__(self):
        if self.epochs_per_stage < 1:
            raise ValueError("epochs_per_stage must be >= 1")

    @property
    def n_stages(self) -> int:
        return (2 * self.lambda_s.steps * self.lambda_s.cycles) * (2 * self.lambda_a.steps * self.lambda_a.cycles)

    @property
    def n_epochs(self) -> int:
        return self.n_stages * self.epochs_per_stage

    def to_json(self) -> dict:
        return {"lambda_s": asdict(self.lambda_s), "lambda_a": asdict(self.lambda_a),
                "epochs_per_stage": self.epochs_per_stage}

    @classmethod
    def from_json(cls, obj: dict) -> CyclicSchedule:
        return cls(LambdaCycle(**obj["lambda_s"]), LambdaCycle(**obj["lambda_a"]),
                   int(obj.get("epochs_per_stage", 1)))


def triangular_cycle(minv: float, maxv: float, steps: int) -> np.ndarray:
    """``steps`` values from ``minv`` to ``maxv`` inclusive, then mirrored."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if minv > maxv:
        raise ValueError("minv must not exceed maxv")
    up = np.linspace(minv, maxv, steps)
    return np.concatenate([up, up[::-1]])


def stage_sequence(sched: CyclicSchedule) -> list[tuple[float, float]]:
    inner = sched.lambda_a.values()
    return [(float(ls), float(la)) for ls in sched.lambda_s.values() for la in inner]
