"""Keypoint-distance reward shaping with a grasp-flag gate.

The per-step reward is

    total = r_d + (1 - f_g) * r_a + f_g * (r_g + r_m + r_s)

where r_d penalizes mean hand-point-to-grasp and grasp-to-goal Chamfer
distances, f_g indicates the hand is on the grasp point (mean distance below
0.1 m), r_a supervises a reference approach action before the grasp, and
r_g / r_m / r_s pay a grasp bonus, supervise the move toward the goal, and
pay a success bonus (grasp point within 0.05 m of the goal) after it.

All terms are computed unconditionally; only `total` applies the gate, so the
algebraic identity above holds exactly for every snapshot.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (
    Transform,
    point_distance,
    points_to_point_distances,
    rotvec_difference,
)


@dataclass(frozen=True)
class RewardWeights:
    distance: float = 1.0      # omega_d
    approach: float = 0.2      # omega_a
    grasp: float = 1.0         # omega_g
    move: float = 0.2          # omega_m
    success: float = 2.0       # omega_s
    grasp_threshold: float = 0.1     # m, mean hand-point distance for the flag
    success_threshold: float = 0.05  # m, grasp-to-goal distance for success

    def __post_init__(self):
        assert min(self.distance, self.approach, self.grasp, self.move, self.success) >= 0
        assert self.grasp_threshold > 0 and self.success_threshold > 0


@dataclass
class RewardTerms:
    r_d: float
    r_a: float
    r_g: float
    r_m: float
    r_s: float
    f_g: bool
    total: float

    def as_array(self) -> np.ndarray:
        return np.array([self.r_d, self.r_a, self.r_g, self.r_m, self.r_s, self.total])


@dataclass
class RewardSnapshot:
    """State slice the reward depends on, all in the world frame."""

    hand_points: np.ndarray        # (N, 3) effector keypoints
    palm_position: np.ndarray      # (3,)
    palm_rotation: np.ndarray      # (3,) rotation vector
    palm_rotation_init: np.ndarray # (3,) palm rotation at reset
    effector_init: np.ndarray      # (D,) effector joints at reset
    grasp_point: np.ndarray        # (3,)
    goal_point: np.ndarray         # (3,)


def mean_hand_distance(hand_points: np.ndarray, grasp: np.ndarray) -> float:
    """(1/N) sum_i CD({hand_i}, {grasp}); singleton chamfer = point distance."""
    hand_points = np.atleast_2d(hand_points)
    if hand_points.shape[0] == 0:
        raise ValueError("empty point set")
    return float(points_to_point_distances(hand_points, grasp).mean())


def grasp_flag(hand_points: np.ndarray, grasp: np.ndarray,
               grasp_threshold: float) -> bool:
    """Indicator: mean hand-point-to-grasp-point distance strictly below threshold."""
    return mean_hand_distance(hand_points, grasp) < grasp_threshold


def reward_distance(hand_points: np.ndarray, grasp: np.ndarray,
                    goal: np.ndarray, weight: float) -> float:
    """-w * (mean_i CD(hand_i, grasp) + CD(goal, grasp))."""
    return -weight * (mean_hand_distance(hand_points, grasp)
                      + point_distance(goal, grasp))


def reference_approach_action(palm_position: np.ndarray, palm_rotation: np.ndarray,
                              palm_rotation_init: np.ndarray, grasp: np.ndarray,
                              effector_init: np.ndarray) -> np.ndarray:
    """Reference pre-grasp action: reach the grasp point, hold the initial
    palm rotation, keep the effector at its initial (open) joints.

    The rotation slot is the group-consistent difference rotvec(R_init R^-1),
    not a componentwise subtraction of rotation vectors.
    """
    out = np.empty(6 + len(effector_init))
    out[0:3] = grasp - palm_position
    out[3:6] = rotvec_difference(palm_rotation_init, palm_rotation)
    out[6:] = effector_init
    return out


def reference_move_action(palm_position: np.ndarray, goal: np.ndarray,
                          action_dim: int) -> np.ndarray:
    """Reference post-grasp action; only the positional slots are defined."""
    out = np.zeros(action_dim)
    out[0:3] = goal - palm_position
    return out


def reward_approach(action: np.ndarray, reference: np.ndarray, weight: float) -> float:
    """-w * ||a - a_ref|| over all 6+D components."""
    action = np.asarray(action, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if action.shape != reference.shape:
        raise ValueError(f"action/reference shape mismatch: {action.shape} vs {reference.shape}")
    return -weight * float(np.linalg.norm(action - reference))


def reward_move(action: np.ndarray, palm_position: np.ndarray, goal: np.ndarray,
                weight: float) -> float:
    """-w * ||a[0:3] - (goal - palm)||; rotation/effector slots do not enter."""
    action = np.asarray(action, dtype=np.float64)
    return -weight * float(np.linalg.norm(action[0:3] - (goal - palm_position)))


def reward_success(grasp: np.ndarray, goal: np.ndarray, success_threshold: float,
                   weight: float) -> float:
    """w * 1[|goal - grasp| < threshold], strict inequality."""
    return weight if point_distance(goal, grasp) < success_threshold else 0.0


def total_reward(snapshot: RewardSnapshot, action: np.ndarray,
                 weights: RewardWeights) -> RewardTerms:
    """Compose every term and apply the grasp-flag gate."""
    action = np.asarray(action, dtype=np.float64)
    f_g = grasp_flag(snapshot.hand_points, snapshot.grasp_point,
                     weights.grasp_threshold)
    r_d = reward_distance(snapshot.hand_points, snapshot.grasp_point,
                          snapshot.goal_point, weights.distance)
    ref_a = reference_approach_action(
        snapshot.palm_position, snapshot.palm_rotation,
        snapshot.palm_rotation_init, snapshot.grasp_point, snapshot.effector_init)
    r_a = reward_approach(action, ref_a, weights.approach)
    r_g = weights.grasp
    r_m = reward_move(action, snapshot.palm_position, snapshot.goal_point,
                      weights.move)
    r_s = reward_success(snapshot.grasp_point, snapshot.goal_point,
                         weights.success_threshold, weights.success)
    gate = 1.0 if f_g else 0.0
    total = r_d + (1.0 - gate) * r_a + gate * (r_g + r_m + r_s)
    return RewardTerms(r_d=r_d, r_a=r_a, r_g=r_g, r_m=r_m, r_s=r_s,
                       f_g=f_g, total=total)
