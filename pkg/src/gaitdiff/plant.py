"""Synthetic quadruped-proxy plant.

Four joints under PD control integrated with explicit Euler at 200 Hz
(4 substeps per 50 Hz control step), plus a closed-form reduction of the
joint state to base motion: forward speed from stance-leg retraction,
yaw rate and roll from left/right asymmetry, pitch from front/rear
asymmetry, height from the mean joint angle. Everything is a pure
function of (state, action, params), so plants can run in parallel.

Joint order is [FL, FR, RL, RR]. The observable projection deliberately
excludes base linear velocity.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import backend as K

CONTROL_DT = 0.02

# fall thresholds: scripted gaits stay well inside, runaway actions exit fast
TILT_LIMIT = 0.6
JOINT_LIMIT = 2.5

OBS_DIM = 14
ACTION_DIM = 4


@dataclass(frozen=True)
class PlantParams:
    kp: float = 20.0
    kd: float = 0.5
    inertia: float = 1.0
    joint_friction: float = 0.1
    tau_max: float = 10.0
    k_v: float = 0.8
    k_omega: float = 1.0
    k_h: float = 0.25
    h0: float = 0.3
    dt_sim: float = 0.005
    substeps_per_control: int = 4

    def __post_init__(self):
        if not (self.kp > 0 and self.kd >= 0 and self.inertia > 0):
            raise ValueError(f"invalid gains kp={self.kp} kd={self.kd} inertia={self.inertia}")
        if self.dt_sim * self.substeps_per_control != CONTROL_DT:
            raise ValueError(
                f"dt_sim*substeps must equal {CONTROL_DT}, got "
                f"{self.dt_sim}*{self.substeps_per_control}")

    def to_dict(self) -> dict:
        return {
            "kp": self.kp, "kd": self.kd, "inertia": self.inertia,
            "joint_friction": self.joint_friction, "tau_max": self.tau_max,
            "k_v": self.k_v, "k_omega": self.k_omega, "k_h": self.k_h,
            "h0": self.h0, "dt_sim": self.dt_sim,
            "substeps_per_control": self.substeps_per_control,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PlantParams":
        return cls(**d)


@dataclass(frozen=True)
class PlantState:
    q: np.ndarray            # (4,) joint angles, rad
    qdot: np.ndarray         # (4,) joint velocities, rad/s
    orientation: np.ndarray  # (3,) roll, pitch, yaw, rad
    ang_vel: np.ndarray      # (3,) rad/s
    height: float
    forward_speed: float
    sim_time: float
    fallen: bool


def initial_state(params: PlantParams) -> PlantState:
    return PlantState(
        q=np.zeros(4),
        qdot=np.zeros(4),
        orientation=np.zeros(3),
        ang_vel=np.zeros(3),
        height=params.h0,
        forward_speed=0.0,
        sim_time=0.0,
        fallen=False,
    )


def plant_step(state: PlantState, action: np.ndarray, params: PlantParams) -> PlantState:
    """Advance one 0.02 s control step; no-op once fallen."""
    action = np.asarray(action, dtype=np.float64)
    if action.shape != (4,):
        raise ValueError(f"action must have shape (4,), got {action.shape}")
    if not np.all(np.isfinite(action)):
        raise ValueError("non-finite action rejected")
    if state.fallen:
        return state

    q = state.q.copy()
    qdot = state.qdot.copy()
    K.pd_substeps(q, qdot, action, params.kp, params.kd, params.inertia,
                  params.joint_friction, params.tau_max, params.dt_sim,
                  params.substeps_per_control)

    stance = q < 0.0
    forward_speed = params.k_v * float(np.mean(stance * np.maximum(0.0, -qdot)))
    s_left = 0.5 * (q[0] + q[2])
    s_right = 0.5 * (q[1] + q[3])
    yaw_rate = params.k_omega * (s_left - s_right)
    height = params.h0 + params.k_h * float(np.mean(q))
    roll = 0.5 * (s_left - s_right)
    pitch = 0.5 * (0.5 * (q[0] + q[1]) - 0.5 * (q[2] + q[3]))
    yaw = state.orientation[2] + yaw_rate * CONTROL_DT
    orientation = np.array([roll, pitch, yaw])
    ang_vel = (orientation - state.orientation) / CONTROL_DT

    fallen = bool(abs(roll) > TILT_LIMIT or abs(pitch) > TILT_LIMIT
                  or np.any(np.abs(q) > JOINT_LIMIT))
    return PlantState(
        q=q, qdot=qdot, orientation=orientation, ang_vel=ang_vel,
        height=height, forward_speed=forward_speed,
        sim_time=state.sim_time + CONTROL_DT, fallen=fallen,
    )


def observe(state: PlantState) -> np.ndarray:
    """14-entry observation: q(4), qdot(4), orientation(3), ang_vel(3).

    Base linear velocities are excluded on purpose.
    """
    return np.concatenate([state.q, state.qdot, state.orientation, state.ang_vel])


def randomize_params(base: PlantParams, rng_seed, lo: float = 0.8, hi: float = 1.25) -> PlantParams:
    """Scale kp, kd, inertia, joint_friction by independent U[lo, hi] factors.

    The stream is numpy's default PCG64: ``default_rng(rng_seed).uniform(lo, hi, 4)``
    applied in that field order.
    """
    rng = np.random.default_rng(rng_seed)
    f = rng.uniform(lo, hi, size=4)
    return replace(base, kp=base.kp * f[0], kd=base.kd * f[1],
                   inertia=base.inertia * f[2], joint_friction=base.joint_friction * f[3])
