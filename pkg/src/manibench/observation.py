"""Flat observation vector: five blocks, 146-d (gripper) / 223-d (hand).

Block layout, in order:
  time                30   sine-cosine episode-time embedding, 15 frequencies
  object_state         9   grasp point (3) + movable-part rotation vector (3)
                           + goal point (3)
  proprioception  78|135   palm pos/rot/linvel/angvel (12); fingertip
                           positions, rotations, linear and angular
                           velocities grouped by quantity (N*12);
                           joint angles/velocities/accelerations (3*(2+7+D))
  distance        22|31    palm-to-grasp distance (1), fingertip-to-grasp
                           distances (N), distance-point-to-grasp distances
                           (15|22), palm-to-grasp displacement (3)
  previous_action   6+D

Positions are world-frame; velocities are finite differences of consecutive
frames (zero on the first frame after reset). No normalization or whitening
is applied, so offline recomputation from recorded states is bit-exact.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .geometry import (
    point_distance,
    points_to_point_distances,
    rotvec_difference,
)
from .robot import KinematicFrames, RobotSpec
from .world import movable_frame

if TYPE_CHECKING:
    from .env import Env

_N_FREQUENCIES = 15


@dataclass(frozen=True)
class ObservationLayout:
    robot_name: str
    blocks: tuple  # ((name, size), ...) in vector order

    @property
    def total(self) -> int:
        return sum(size for _, size in self.blocks)

    def slices(self) -> dict:
        out, offset = {}, 0
        for name, size in self.blocks:
            out[name] = slice(offset, offset + size)
            offset += size
        return out

    def block(self, values: np.ndarray, name: str) -> np.ndarray:
        return values[self.slices()[name]]

    def to_dict(self) -> dict:
        return {"robot": self.robot_name, "total": self.total,
                "blocks": [[name, size] for name, size in self.blocks]}

    @staticmethod
    def for_robot(spec: RobotSpec) -> "ObservationLayout":
        n, d, j = spec.n_hand_points, spec.dof_effector, spec.n_joints
        return ObservationLayout(
            robot_name=spec.name,
            blocks=(
                ("time", 2 * _N_FREQUENCIES),
                ("object_state", 9),
                ("proprioception", 12 + 12 * n + 3 * j),
                ("distance", 1 + n + spec.n_distance_points + 3),
                ("previous_action", 6 + d),
            ),
        )


@dataclass
class Observation:
    values: np.ndarray
    layout: ObservationLayout

    def __post_init__(self):
        assert self.values.shape == (self.layout.total,)


def time_embedding(t: int, max_steps: int) -> np.ndarray:
    """15 interleaved (sin, cos) pairs of 2*pi*k*t/T for k = 1..15."""
    if not 0 <= t <= max_steps:
        raise ValueError(f"t={t} outside [0, {max_steps}]")
    tau = t / max_steps
    k = np.arange(1, _N_FREQUENCIES + 1)
    phase = 2.0 * np.pi * k * tau
    out = np.empty(2 * _N_FREQUENCIES)
    out[0::2] = np.sin(phase)
    out[1::2] = np.cos(phase)
    return out


def _frame_velocities(frames: KinematicFrames, prev: KinematicFrames | None,
                      dt: float):
    """Finite-difference palm/fingertip velocities; zeros with no history."""
    n = len(frames.hand_points)
    if prev is None:
        return np.zeros(3), np.zeros(3), np.zeros((n, 3)), np.zeros((n, 3))
    palm_v = (frames.palm.translation - prev.palm.translation) / dt
    palm_w = rotvec_difference(frames.palm.rotation, prev.palm.rotation) / dt
    tips_v = np.empty((n, 3))
    tips_w = np.empty((n, 3))
    for i in range(n):
        tips_v[i] = (frames.hand_points[i].translation
                     - prev.hand_points[i].translation) / dt
        tips_w[i] = rotvec_difference(frames.hand_points[i].rotation,
                                      prev.hand_points[i].rotation) / dt
    return palm_v, palm_w, tips_v, tips_w


def assemble(layout: ObservationLayout, *, t: int, max_steps: int, dt: float,
             grasp: np.ndarray, movable_rotation: np.ndarray, goal: np.ndarray,
             frames: KinematicFrames, prev_frames: KinematicFrames | None,
             q: np.ndarray, qdot: np.ndarray, qddot: np.ndarray,
             prev_action: np.ndarray) -> Observation:
    """Build the observation from explicit state pieces (offline-replayable)."""
    palm_v, palm_w, tips_v, tips_w = _frame_velocities(frames, prev_frames, dt)
    palm = frames.palm
    tips = frames.hand_positions

    parts = [
        time_embedding(t, max_steps),
        grasp, movable_rotation, goal,
        palm.translation, palm.rotation, palm_v, palm_w,
        tips.ravel(),
        np.concatenate([hp.rotation for hp in frames.hand_points]),
        tips_v.ravel(), tips_w.ravel(),
        q, qdot, qddot,
        np.array([point_distance(palm.translation, grasp)]),
        points_to_point_distances(tips, grasp),
        points_to_point_distances(frames.distance_points, grasp),
        grasp - palm.translation,
        prev_action,
    ]
    values = np.concatenate(parts).astype(np.float64)
    if values.shape != (layout.total,):
        raise AssertionError(
            f"observation assembled {values.shape[0]} entries, layout wants {layout.total}")
    return Observation(values=values, layout=layout)


def build_observation(env: "Env") -> Observation:
    """Observation for the environment's current state."""
    from .world import grasp_point  # local to avoid import cycle at module load

    obj = env.task.object
    return assemble(
        env.layout,
        t=env.t,
        max_steps=env.config.max_steps,
        dt=env.config.dt,
        grasp=grasp_point(obj, env.object_state),
        movable_rotation=movable_frame(obj, env.object_state).rotation,
        goal=env.task.goal_point,
        frames=env.frames,
        prev_frames=env.prev_frames,
        q=env.robot.q,
        qdot=env.robot.qdot,
        qddot=env.robot.qddot,
        prev_action=env.robot.prev_action,
    )
