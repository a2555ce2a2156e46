"""Scripted oracle controller built from the reference shaping actions.

Approach phase (object not held): the reference approach action verbatim —
reach for the grasp point, hold the initial palm rotation, keep the effector
open. Move phase (object held): displace the wrist by (goal - grasp point).
For articulated objects this coincides with the reference move action once
the palm rides the grasp manifold; for free objects it compensates the
palm-to-grasp offset frozen at attach time, which the success threshold
(0.05 m) is tighter than. Rotation is held and the effector stays at its
initial joints throughout.
"""
from __future__ import annotations

import numpy as np

from .geometry import rotvec_difference
from .reward import reference_approach_action
from .world import grasp_point


class ScriptedController:
    """Deterministic env-state policy; interchangeable with MLP policies
    through the deterministic_action(obs, env) protocol."""

    name = "scripted"

    def deterministic_action(self, obs, env) -> np.ndarray:
        return self.action_for(env)

    def action_for(self, env) -> np.ndarray:
        palm = env.frames.palm
        grasp = grasp_point(env.task.object, env.object_state)
        if not env.object_state.attached:
            return reference_approach_action(
                palm.translation, palm.rotation, env.palm_rotation_init,
                grasp, env.effector_init)
        action = np.empty(env.robot_spec.action_dim)
        action[0:3] = env.task.goal_point - grasp
        action[3:6] = rotvec_difference(env.palm_rotation_init, palm.rotation)
        action[6:] = env.effector_init
        return action


def run_scripted_episode(env, episode: int, weights=None) -> dict:
    """Roll one scripted episode; returns summary stats (used by tests/harness)."""
    controller = ScriptedController()
    env.reset(episode)
    steps = 0
    flagged_at = None
    while not env.done:
        _, _, _, info = env.step(controller.action_for(env), weights)
        steps += 1
        if flagged_at is None and info["f_g"]:
            flagged_at = steps
    return {"success": env.success, "steps": steps, "flagged_at": flagged_at}
