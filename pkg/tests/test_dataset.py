import numpy as np
import pytest

from manibench import dataset as ds
from manibench import reward as rw
from manibench import world as w
from manibench.control import ScriptedController
from manibench.env import EpisodeConfig
from manibench.observation import ObservationLayout
from manibench.robot import gripper_bot
from manibench.reward import RewardSnapshot, total_reward


@pytest.fixture(scope="module")
def lid_trajectory():
    traj = ds.record_rollout(ScriptedController(), w.make_task("laptop", "open"),
                             gripper_bot(), EpisodeConfig(seed=40), seed=40,
                             retries=2)
    assert traj is not None
    return traj


# ---------------------------------------------------------------------------
# record_rollout
# ---------------------------------------------------------------------------

def test_record_scripted_succeeds_first_try(lid_trajectory):
    traj = lid_trajectory
    assert traj.success
    assert traj.length <= 300
    assert traj.instruction == "open laptop"
    np.testing.assert_array_equal(traj.t, np.arange(1, traj.length + 1))


def test_record_zero_retries_null_policy_returns_none():
    class NullPolicy:
        def deterministic_action(self, obs, env):
            return np.zeros(7)

    out = ds.record_rollout(NullPolicy(), w.make_task("laptop", "open"),
                            gripper_bot(), EpisodeConfig(seed=1, max_steps=20),
                            seed=1, retries=0)
    assert out is None


def test_recorded_flag_recomputable_from_states(lid_trajectory):
    traj = lid_trajectory
    layout = ObservationLayout.for_robot(gripper_bot())
    # hand-point positions live inside the observation's proprioception block;
    # recompute the flag from the stored grasp point instead via reward module
    for i in range(traj.length):
        obs = traj.observations[i]
        sl = layout.slices()["proprioception"]
        tips = obs[sl][12:12 + 9].reshape(3, 3)
        flag = rw.grasp_flag(tips, traj.grasp[i], traj.config.grasp_threshold)
        assert flag == bool(traj.f_g[i])


def test_recorded_rewards_recompute_exactly(lid_trajectory):
    # offline recompute: reset-time constants come from a fresh reset with the
    # recorded seed; everything else comes from the stored step blocks
    from manibench.env import Env

    traj = lid_trajectory
    spec = gripper_bot()
    env = Env(traj.config, w.make_task(traj.object_name, traj.skill), spec)
    env.reset(traj.episode)
    layout = ObservationLayout.for_robot(spec)
    sl = layout.slices()["proprioception"]
    for i in range(traj.length):
        prop = traj.observations[i][sl]
        snapshot = RewardSnapshot(
            hand_points=prop[12:21].reshape(3, 3),
            palm_position=prop[0:3],
            palm_rotation=prop[3:6],
            palm_rotation_init=env.palm_rotation_init,
            effector_init=env.effector_init,
            grasp_point=traj.grasp[i],
            goal_point=traj.goal[i],
        )
        terms = total_reward(snapshot, traj.actions[i], traj.weights)
        np.testing.assert_array_equal(terms.as_array(), traj.reward_terms[i])


def test_replay_reproduces_recorded_stream(lid_trajectory):
    ds.replay_trajectory(lid_trajectory)


def test_final_goal_distance_below_threshold(lid_trajectory):
    traj = lid_trajectory
    d = np.linalg.norm(traj.grasp[-1] - traj.goal[-1])
    assert d < traj.config.success_threshold


# ---------------------------------------------------------------------------
# write / read round trip
# ---------------------------------------------------------------------------

def test_round_trip_bit_exact(tmp_path, lid_trajectory):
    path = tmp_path / "a.mmt"
    ds.write(lid_trajectory, path)
    back = ds.read(path)
    assert back == lid_trajectory


def test_round_trip_twice_idempotent(tmp_path, lid_trajectory):
    p1, p2 = tmp_path / "a.mmt", tmp_path / "b.mmt"
    ds.write(lid_trajectory, p1)
    ds.write(ds.read(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_truncated_file_errors_with_offset(tmp_path, lid_trajectory):
    path = tmp_path / "a.mmt"
    ds.write(lid_trajectory, path)
    data = path.read_bytes()
    path.write_bytes(data[:-17])
    with pytest.raises(ds.MalformedTrajectory, match="byte offset"):
        ds.read(path)


def test_flipped_magic_errors(tmp_path, lid_trajectory):
    path = tmp_path / "a.mmt"
    ds.write(lid_trajectory, path)
    data = bytearray(path.read_bytes())
    data[0:2] = b"XX"
    path.write_bytes(bytes(data))
    with pytest.raises(ds.MalformedTrajectory, match="malformed trajectory"):
        ds.read(path)


def test_replay_detects_tampered_action(lid_trajectory):
    import copy
    tampered = copy.deepcopy(lid_trajectory)
    tampered.actions[3, 0] += 0.01
    with pytest.raises(ds.ReplayMismatch):
        ds.replay_trajectory(tampered)


# ---------------------------------------------------------------------------
# generate_dataset / stats
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    tasks = [("gripper-bot", "laptop", "open"), ("gripper-bot", "holistic", "pick")]
    manifest = ds.generate_dataset(root, ScriptedController(), tasks,
                                   trajectories_per_task=3,
                                   episode_config=EpisodeConfig(seed=0), seed=0,
                                   retries=3)
    return root, manifest


def test_generate_counts_match_files(small_dataset):
    root, manifest = small_dataset
    for entry in manifest["tasks"]:
        assert entry["count"] == 3
        assert len(entry["files"]) == 3
        for rel in entry["files"]:
            assert (root / rel).is_file()


def test_stats_aggregates(small_dataset):
    root, manifest = small_dataset
    st = ds.stats(root)
    assert st.counts[("laptop", "open")] == 3
    assert st.counts[("holistic", "pick")] == 3
    assert st.mean_length > 0
    assert sum(st.histogram.values()) == 6
    report = ds.render_stats(st)
    assert "laptop" in report and "pick" in report
    assert report == ds.render_stats(ds.stats(root))  # regeneration identical


def test_stats_empty_dataset(tmp_path):
    manifest = ds.generate_dataset(tmp_path, ScriptedController(), [],
                                   trajectories_per_task=0,
                                   episode_config=EpisodeConfig(seed=0))
    st = ds.stats(tmp_path)
    assert st.counts == {}
    assert st.mean_length == 0.0
    assert st.histogram == {}


def test_stats_missing_manifest(tmp_path):
    with pytest.raises(FileNotFoundError, match="manifest"):
        ds.stats(tmp_path / "nowhere")


def test_stats_hand_mean():
    st = ds.DatasetStats(counts={("a", "open"): 3},
                         lengths={("a", "open"): [100, 200, 300]},
                         mean_length=200.0, histogram={})
    assert st.cell_mean(("a", "open")) == 200.0


# ---------------------------------------------------------------------------
# depth_normalize
# ---------------------------------------------------------------------------

def test_depth_endpoints():
    assert ds.depth_normalize(0.0) == 0
    assert ds.depth_normalize(5.0) == 255
    assert ds.depth_normalize(7.3) == 255
    assert ds.depth_normalize(2.5) == 128  # 127.5 rounds away from zero


def test_depth_non_finite():
    assert ds.depth_normalize(float("nan")) == 255
    assert ds.depth_normalize(float("inf")) == 255


def test_depth_monotone_on_clip_range():
    xs = np.linspace(0.0, 5.0, 2001)
    vals = [ds.depth_normalize(float(x)) for x in xs]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    assert min(vals) == 0 and max(vals) == 255
