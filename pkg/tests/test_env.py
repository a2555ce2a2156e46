import numpy as np
import pytest

from manibench import world as w
from manibench.control import ScriptedController, run_scripted_episode
from manibench.env import Env, EpisodeConfig, EpisodeFinished, episode_rng
from manibench.reward import RewardWeights, mean_hand_distance
from manibench.robot import gripper_bot


def make_env(object_name="laptop", skill="open", robot=None, **cfg):
    config = EpisodeConfig(**cfg)
    return Env(config, w.make_task(object_name, skill), robot or gripper_bot())


# ---------------------------------------------------------------------------
# reset
# ---------------------------------------------------------------------------

def test_reset_same_seed_bit_identical():
    e1, e2 = make_env(seed=7), make_env(seed=7)
    o1, o2 = e1.reset(3), e2.reset(3)
    np.testing.assert_array_equal(o1.values, o2.values)
    np.testing.assert_array_equal(e1.robot.q, e2.robot.q)
    np.testing.assert_array_equal(e1.task.goal_point, e2.task.goal_point)
    assert e1.object_state.joint_value == e2.object_state.joint_value


def test_reset_different_episodes_differ():
    env = make_env(seed=7)
    o1 = env.reset(0).values.copy()
    o2 = env.reset(1).values.copy()
    assert not np.array_equal(o1, o2)


def test_grasp_point_starts_at_origin_xy():
    for name, skill in [("laptop", "open"), ("table", "close"), ("cart", "push"),
                        ("holistic", "pick"), ("faucet", "open")]:
        env = make_env(name, skill, seed=11)
        env.reset(0)
        g = w.grasp_point(env.task.object, env.object_state)
        np.testing.assert_allclose(g[0:2], [0.0, 0.0], atol=1e-12)


def test_tabletop_height_sampled_in_range():
    env = make_env("holistic", "pick", seed=5)
    heights = []
    for ep in range(20):
        env.reset(ep)
        heights.append(env.task.object.base_pose.translation[2])
    heights = np.array(heights)
    assert np.all((heights >= 0.2) & (heights <= 0.7))
    assert heights.std() > 0.05


def test_base_offsets_in_mobile_range():
    env = make_env(seed=3)
    for ep in range(20):
        env.reset(ep)
        bx, by, _ = env.robot.base_anchor.translation
        assert 1.0 <= abs(bx) <= 1.5
        assert 1.0 <= -by <= 1.5


def test_fixed_base_offsets_closer():
    env = make_env(seed=3, fixed_base=True)
    for ep in range(20):
        env.reset(ep)
        bx, by, _ = env.robot.base_anchor.translation
        assert 0.5 <= abs(bx) <= 1.0
        assert 0.5 <= -by <= 1.0


def test_close_task_initial_fraction_open():
    env = make_env("laptop", "close", seed=9)
    lo, hi = env._template.object.joint_range
    for ep in range(20):
        env.reset(ep)
        frac = (env.object_state.joint_value - lo) / (hi - lo)
        assert 0.4 <= frac <= 0.8


def test_open_task_starts_ten_degrees():
    env = make_env("laptop", "open", seed=9)
    env.reset(0)
    assert env.object_state.joint_value == pytest.approx(np.deg2rad(10.0))


def test_goal_frozen_at_reset():
    env = make_env("laptop", "open", seed=1)
    env.reset(0)
    goal0 = env.task.goal_point.copy()
    for _ in range(5):
        env.step(np.zeros(7))
    np.testing.assert_array_equal(env.task.goal_point, goal0)


# ---------------------------------------------------------------------------
# step
# ---------------------------------------------------------------------------

def test_zero_actions_time_out_without_success():
    env = make_env(seed=2, max_steps=50)
    env.reset(0)
    done = False
    steps = 0
    while not done:
        _, _, done, info = env.step(np.zeros(7))
        steps += 1
        assert not info["f_g"]  # robot starts >= 1 m away
    assert steps == 50
    assert not env.success


def test_step_after_done_raises():
    env = make_env(seed=2, max_steps=2)
    env.reset(0)
    env.step(np.zeros(7))
    env.step(np.zeros(7))
    with pytest.raises(EpisodeFinished, match="episode finished"):
        env.step(np.zeros(7))


def test_step_reward_matches_terms():
    env = make_env(seed=4)
    env.reset(0)
    weights = RewardWeights()
    _, reward, _, info = env.step(np.zeros(7), weights)
    assert reward == info["terms"].total
    gate = 1.0 if info["terms"].f_g else 0.0
    t = info["terms"]
    assert t.total == t.r_d + (1 - gate) * t.r_a + gate * (t.r_g + t.r_m + t.r_s)


def test_flag_transitions_when_hand_reaches_grasp():
    env = make_env("laptop", "open", seed=6)
    env.reset(0)
    controller = ScriptedController()
    prev_flag = False
    transition_checked = False
    for _ in range(300):
        if env.done:
            break
        _, _, _, info = env.step(controller.action_for(env))
        # recompute the indicator from the post-step state
        recomputed = mean_hand_distance(
            env.frames.hand_positions,
            w.grasp_point(env.task.object, env.object_state)) < env.config.grasp_threshold
        assert info["f_g"] == recomputed
        if info["f_g"] and not prev_flag:
            transition_checked = True
        prev_flag = info["f_g"]
    assert transition_checked


def test_scripted_episode_succeeds_on_lid_open():
    env = make_env("laptop", "open", seed=0)
    result = run_scripted_episode(env, episode=0)
    assert result["success"]
    assert result["steps"] < 300


@pytest.mark.parametrize("name,skill", [("table", "open"), ("holistic", "pick"),
                                        ("cart", "push"), ("cart", "pull"),
                                        ("laptop", "close"), ("cabinet", "open"),
                                        ("faucet", "open")])
def test_scripted_episode_succeeds_across_tasks(name, skill):
    env = make_env(name, skill, seed=1)
    result = run_scripted_episode(env, episode=0)
    assert result["success"], f"{skill} {name} failed"


def test_success_implies_goal_distance_below_threshold():
    env = make_env("laptop", "open", seed=8)
    env.reset(0)
    controller = ScriptedController()
    final_info = None
    while not env.done:
        _, _, _, final_info = env.step(controller.action_for(env))
    assert env.success
    assert final_info["goal_distance"] < env.config.success_threshold


def test_attachment_respects_joint_range():
    env = make_env("laptop", "open", seed=10)
    env.reset(0)
    controller = ScriptedController()
    lo, hi = env.task.object.joint_range
    while not env.done:
        env.step(controller.action_for(env))
        assert lo <= env.object_state.joint_value <= hi


def test_free_object_offset_preserved_while_attached():
    from manibench import geometry as geo

    env = make_env("holistic", "pick", seed=12)
    env.reset(0)
    controller = ScriptedController()
    offset = None
    while not env.done:
        _, _, _, info = env.step(controller.action_for(env))
        if info["attached"]:
            # palm-frame grasp offset: bit-exact while the capture holds
            captured = geo.apply(env.object_state.attach_offset,
                                 env.task.object.grasp_offset)
            if offset is None:
                offset = captured
            else:
                np.testing.assert_array_equal(captured, offset)
            # world-frame check through the kinematic chain, to tolerance
            palm_local = geo.apply(
                geo.invert(env.frames.palm),
                w.grasp_point(env.task.object, env.object_state))
            np.testing.assert_allclose(palm_local, captured, atol=1e-9)
    assert offset is not None
    assert env.success


def test_episode_stream_bit_reproducible():
    def rollout():
        env = make_env("laptop", "open", seed=21)
        env.reset(4)
        controller = ScriptedController()
        qs, rewards = [], []
        while not env.done:
            _, r, _, _ = env.step(controller.action_for(env))
            qs.append(env.robot.q.copy())
            rewards.append(r)
        return np.array(qs), np.array(rewards)

    q1, r1 = rollout()
    q2, r2 = rollout()
    np.testing.assert_array_equal(q1, q2)
    np.testing.assert_array_equal(r1, r2)


def test_episode_rng_streams_independent():
    a = episode_rng(1, 2, 0).uniform(size=4)
    b = episode_rng(1, 2, 1).uniform(size=4)
    c = episode_rng(1, 3, 0).uniform(size=4)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)
    np.testing.assert_array_equal(a, episode_rng(1, 2, 0).uniform(size=4))
