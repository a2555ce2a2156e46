"""Episode lifecycle: randomized reset, stepping, attachment, success.

Reset places the object so its grasp point starts at x = y = 0 facing -y
(tabletop families get a sampled height), then places the robot base in
front of it, facing the grasp point, with sampled positional offsets and a
yaw perturbation. Stepping advances the robot, recomputes the grasp flag,
attaches/follows/detaches the object kinematically, and pays the shaped
reward from the post-step state.

All randomness flows through counter-based Philox streams keyed by
(seed, episode, stream), so episodes are bit-reproducible regardless of
execution order or worker count.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import observation as obs_mod
from .geometry import Transform, point_distance, vec3
from .reward import (
    RewardSnapshot,
    RewardTerms,
    RewardWeights,
    mean_hand_distance,
    total_reward,
)
from .robot import (
    Action,
    RobotSpec,
    apply_action_with_chain,
    forward_kinematics,
    make_initial_state,
)
from .world import (
    FREE,
    TaskSpec,
    attach,
    detach,
    goal_point,
    grasp_point,
    initial_state,
    object_follow,
    validate_skill,
)

# Philox stream ids within an episode
STREAM_OBJECT = 0
STREAM_JOINT = 1
STREAM_BASE = 2
STREAM_ACTION = 3

_MASK64 = (1 << 64) - 1

_DEFAULT_OFFSETS = (1.0, 1.5)
_FIXED_BASE_OFFSETS = (0.5, 1.0)


class EpisodeFinished(RuntimeError):
    pass


def episode_rng(seed: int, episode: int, stream: int) -> np.random.Generator:
    """Counter-based generator keyed by (seed, episode, stream)."""
    key = np.array([seed & _MASK64, ((episode << 8) | stream) & _MASK64],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class EpisodeConfig:
    seed: int = 0
    max_steps: int = 300
    dt: float = 1.0 / 30.0
    base_offset_range: tuple | None = None   # None: (1.0,1.5), fixed-base (0.5,1.0)
    yaw_range: float = np.deg2rad(15.0)
    object_height_range: tuple = (0.2, 0.7)
    open_init_angle: float = np.deg2rad(10.0)
    close_init_range: tuple = (0.4, 0.8)
    grasp_threshold: float = 0.1
    success_threshold: float = 0.05
    fixed_base: bool = False

    def __post_init__(self):
        assert self.max_steps >= 1 and self.dt > 0
        for rng in (self.base_offset_range, self.object_height_range, self.close_init_range):
            if rng is not None:
                assert rng[0] <= rng[1]

    @property
    def effective_offsets(self) -> tuple:
        if self.base_offset_range is not None:
            return self.base_offset_range
        return _FIXED_BASE_OFFSETS if self.fixed_base else _DEFAULT_OFFSETS


def _initial_joint_value(obj, skill: str, config: EpisodeConfig,
                         rng: np.random.Generator) -> float:
    if not obj.articulated:
        return 0.0
    lo, hi = obj.joint_range
    if skill == "open":
        if obj.kind == "revolute":
            return min(lo + config.open_init_angle, hi)
        # prismatic "10 degree equivalent": 10/90 of the range
        return lo + (10.0 / 90.0) * (hi - lo)
    if skill == "close":
        frac = rng.uniform(config.close_init_range[0], config.close_init_range[1])
        return lo + frac * (hi - lo)
    return lo


class Env:
    """Single episode owner; construct once per task, reset per episode."""

    def __init__(self, config: EpisodeConfig, task: TaskSpec, robot_spec: RobotSpec):
        validate_skill(task.object, task.skill)
        self.config = config
        self.robot_spec = robot_spec
        self.layout = obs_mod.ObservationLayout.for_robot(robot_spec)
        self._template = task
        self.episode = -1
        self.t = 0
        self.done = True  # must reset before stepping

    # ------------------------------------------------------------------
    # reset
    # ------------------------------------------------------------------

    def reset(self, episode: int = 0) -> obs_mod.Observation:
        config = self.config
        skill = self._template.skill
        template = self._template.object
        rng_obj = episode_rng(config.seed, episode, STREAM_OBJECT)
        rng_joint = episode_rng(config.seed, episode, STREAM_JOINT)
        rng_base = episode_rng(config.seed, episode, STREAM_BASE)

        # Object: sample height (tabletop), set the initial joint, then place
        # so the grasp point starts at the world origin in x-y.
        height = float(rng_obj.uniform(*config.object_height_range)) if template.tabletop else 0.0
        q_init = _initial_joint_value(template, skill, config, rng_joint)
        probe = initial_state(template, q_init)
        g_local = grasp_point(template, probe)
        placed = template.placed_at(
            Transform(vec3(-g_local[0], -g_local[1], height), np.zeros(3)))
        self.object_state = initial_state(placed, q_init)

        # Robot base: in front of the object (-y side), facing the grasp
        # point, with per-axis offsets and a yaw perturbation.
        lo, hi = config.effective_offsets
        dx = float(rng_base.uniform(lo, hi)) * (1.0 if rng_base.uniform() < 0.5 else -1.0)
        dy = -float(rng_base.uniform(lo, hi))
        yaw_perturb = float(rng_base.uniform(-config.yaw_range, config.yaw_range))
        grasp0 = grasp_point(placed, self.object_state)
        heading = np.array([grasp0[0] - dx, grasp0[1] - dy])
        heading = heading / np.linalg.norm(heading)
        yaw = float(np.arctan2(-heading[0], heading[1])) + yaw_perturb
        anchor = Transform(vec3(dx, dy, 0.0), vec3(0.0, 0.0, yaw))
        self.robot = make_initial_state(self.robot_spec, anchor)

        self.frames = forward_kinematics(self.robot_spec, self.robot.q, anchor)
        self.prev_frames = None
        self.palm_rotation_init = self.frames.palm.rotation.copy()
        self.effector_init = self.robot.q[9:].copy()

        goal = goal_point(TaskSpec(object=placed, skill=skill), self.object_state,
                          robot_base_xy=np.array([dx, dy]))
        self.task = TaskSpec(object=placed, skill=skill, goal_point=goal)

        self.episode = episode
        self.t = 0
        self.success = False
        self.done = False
        self.ik_warning = False
        return obs_mod.build_observation(self)

    # ------------------------------------------------------------------
    # step
    # ------------------------------------------------------------------

    def step(self, action, weights: RewardWeights | None = None):
        """Advance one control step; returns (obs, reward, done, info)."""
        if self.done:
            raise EpisodeFinished("episode finished")
        weights = weights or RewardWeights()
        if not isinstance(action, Action):
            action = Action.from_vector(np.asarray(action, dtype=np.float64),
                                        self.robot_spec.dof_effector)

        self.robot, chain = apply_action_with_chain(
            self.robot_spec, self.robot, action, self.config.dt,
            fixed_base=self.config.fixed_base)
        self.prev_frames = self.frames
        self.frames = forward_kinematics(self.robot_spec, self.robot.q,
                                         self.robot.base_anchor, _chain=chain)
        palm = self.frames.palm
        tips = self.frames.hand_positions
        obj = self.task.object

        # Grasp flag drives attachment: attach on rise, follow while held,
        # detach when the hand drifts beyond the threshold (no latch).
        state = self.object_state
        d_pre = mean_hand_distance(tips, grasp_point(obj, state))
        if d_pre < self.config.grasp_threshold and not state.attached:
            state = attach(obj, state, palm)
        if state.attached:
            state = object_follow(obj, state, palm)
        grasp_now = grasp_point(obj, state)
        f_g = mean_hand_distance(tips, grasp_now) < self.config.grasp_threshold
        if state.attached and not f_g:
            state = detach(state)
        self.object_state = state

        terms = total_reward(
            RewardSnapshot(
                hand_points=tips,
                palm_position=palm.translation,
                palm_rotation=palm.rotation,
                palm_rotation_init=self.palm_rotation_init,
                effector_init=self.effector_init,
                grasp_point=grasp_now,
                goal_point=self.task.goal_point,
            ),
            action.to_vector(), weights)

        goal_distance = point_distance(grasp_now, self.task.goal_point)
        success_now = goal_distance < self.config.success_threshold
        if obj.kind == FREE:
            success_now = success_now and f_g  # unattached free objects can't count
        self.t += 1
        self.success = self.success or success_now
        self.done = success_now or self.t >= self.config.max_steps
        self.ik_warning = self.ik_warning or self.robot.ik_warning

        info = {
            "terms": terms,
            "f_g": f_g,
            "grasp_point": grasp_now,
            "goal_distance": goal_distance,
            "success": success_now,
            "ik_warning": self.robot.ik_warning,
            "attached": state.attached,
        }
        return obs_mod.build_observation(self), terms.total, self.done, info
