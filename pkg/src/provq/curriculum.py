"""Stage bookkeeping and the alpha/omega curriculum.

Global steps split into three contiguous stages::

    [0, t_warm)                  Warmup      continuous autoencoder only
    [t_warm, t_warm + t_trans)   Transition  alpha anneals 1 -> 0
    [t_warm + t_trans, ...)      Hard        alpha = 0
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .errors import ConfigError

SCHEDULER_KINDS = ("cosine", "hard")


class StageTag(str, Enum):
    WARMUP = "Warmup"
    TRANSITION = "Transition"
    HARD = "Hard"


@dataclass(frozen=True)
class Stage:
    tag: StageTag
    step_in_stage: int


@dataclass(frozen=True)
class Schedule:
    t_warm: int = 100
    t_trans: int = 150
    lam: float = 0.5
    beta: float = 0.25
    kind: str = "cosine"

    def __post_init__(self):
        if self.kind not in SCHEDULER_KINDS:
            raise ConfigError(f"scheduler kind must be one of {SCHEDULER_KINDS}, got {self.kind!r}")
        if self.t_warm < 0:
            raise ConfigError(f"t_warm must be >= 0, got {self.t_warm}")
        # a zero-length horizon is only meaningful for the hard kind (vanilla VQ)
        min_trans = 1 if self.kind == "cosine" else 0
        if self.t_trans < min_trans:
            raise ConfigError(f"t_trans must be >= {min_trans} for {self.kind}, got {self.t_trans}")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.beta < 0:
            raise ConfigError(f"beta must be >= 0, got {self.beta}")

    @property
    def hard_start(self):
        return self.t_warm + self.t_trans


def stage_of(step: int, sched: Schedule) -> Stage:
    if step < sched.t_warm:
        return Stage(StageTag.WARMUP, step)
    if step < sched.hard_start:
        return Stage(StageTag.TRANSITION, step - sched.t_warm)
    return Stage(StageTag.HARD, step - sched.hard_start)


def alpha_at(t: int, sched: Schedule) -> float:
    """Blend coefficient ``t`` steps into the transition stage."""
    if t < 0:
        raise ValueError(f"step in transition must be >= 0, got {t}")
    if t >= sched.t_trans:
        return 0.0
    if sched.kind == "hard":
        return 1.0
    return 0.5 * (1.0 + math.cos(math.pi * t / sched.t_trans))


def omega_at(alpha: float, lam: float) -> float:
    return lam + (1.0 - lam) * (1.0 - alpha)


def alpha_for_step(step: int, sched: Schedule) -> float:
    """Alpha at a global step; 1 (continuous) during warmup."""
    st = stage_of(step, sched)
    if st.tag is StageTag.WARMUP:
        return 1.0
    if st.tag is StageTag.HARD:
        return 0.0
    return alpha_at(st.step_in_stage, sched)


def omega_for_step(step: int, sched: Schedule) -> float:
    """Quantization weight at a global step; 0 during warmup (no VQ terms)."""
    if stage_of(step, sched).tag is StageTag.WARMUP:
        return 0.0
    return omega_at(alpha_for_step(step, sched), sched.lam)
