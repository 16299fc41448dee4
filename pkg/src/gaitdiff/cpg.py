"""Scripted central-pattern-generator gait controllers.

Four gaits over the same goal space, distinguished only by per-leg phase
offsets. Joint target for leg j at control tick t:

    a_j = A*sin(2*pi*f*t_c + phase_j) + b + delta*side_j

with t_c = 0.02*t, amplitude A = 0.2 + 0.5*v_des, frequency
f = 1.5 + 1.0*v_des, height offset b = (h_des - h0)/k_h, and turning
bias delta = 0.1*omega_des applied with opposite sign on left/right legs.
A(v) and f(v) are tuned so the plant's realized forward speed increases
with v_des.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .plant import CONTROL_DT, PlantParams

_DEFAULTS = PlantParams()

V_RANGE = (0.0, 1.0)
H_RANGE = (0.2, 0.6)
OMEGA_RANGE = (-1.0, 1.0)

SIDE = np.array([1.0, -1.0, 1.0, -1.0])  # +1 left legs (FL, RL), -1 right


@dataclass(frozen=True)
class Goal:
    """Velocity/height/yaw-rate command, clamped to the command ranges."""

    v_des: float
    h_des: float
    omega_des: float

    def __post_init__(self):
        object.__setattr__(self, "v_des", float(np.clip(self.v_des, *V_RANGE)))
        object.__setattr__(self, "h_des", float(np.clip(self.h_des, *H_RANGE)))
        object.__setattr__(self, "omega_des", float(np.clip(self.omega_des, *OMEGA_RANGE)))

    def as_array(self) -> np.ndarray:
        return np.array([self.v_des, self.h_des, self.omega_des])


@dataclass(frozen=True)
class GaitSpec:
    name: str
    phases: tuple  # per-leg phase offsets (FL, FR, RL, RR), rad


GAITS = {
    "trot": GaitSpec("trot", (0.0, np.pi, np.pi, 0.0)),
    "pace": GaitSpec("pace", (0.0, np.pi, 0.0, np.pi)),
    "hop": GaitSpec("hop", (0.0, 0.0, 0.0, 0.0)),
    "bound": GaitSpec("bound", (0.0, 0.0, np.pi, np.pi)),
}


def gait_frequency(v_des: float) -> float:
    return 1.5 + 1.0 * v_des


def cpg_action(gait: GaitSpec, goal: Goal, control_tick: int,
               h0: float = _DEFAULTS.h0, k_h: float = _DEFAULTS.k_h) -> np.ndarray:
    if control_tick < 0:
        raise ValueError(f"control_tick must be >= 0, got {control_tick}")
    t_c = CONTROL_DT * control_tick
    amp = 0.2 + 0.5 * goal.v_des
    freq = gait_frequency(goal.v_des)
    b = (goal.h_des - h0) / k_h
    delta = 0.1 * goal.omega_des
    phases = np.asarray(gait.phases)
    return amp * np.sin(2.0 * np.pi * freq * t_c + phases) + b + delta * SIDE


def sample_goal(rng_seed, v_range=V_RANGE, h_range=H_RANGE, omega_range=OMEGA_RANGE) -> Goal:
    """Uniform goal; accepts a seed or an existing Generator.

    Stream: ``default_rng(seed).uniform`` drawn for v, h, omega in order.
    """
    rng = np.random.default_rng(rng_seed)
    return Goal(
        v_des=rng.uniform(*v_range),
        h_des=rng.uniform(*h_range),
        omega_des=rng.uniform(*omega_range),
    )
