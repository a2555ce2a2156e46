"""Trajectory recording, bit-exact serialization, replay, and statistics.

One file per successful trajectory: a human-readable text header (instruction,
ids, episode config with hex-encoded floats, observation layout) terminated by
an END_HEADER line, followed by little-endian float64 step blocks in a fixed
field order:

  t | q | qdot | qddot | wrist t(3) r(3) | object joint(1) attached(1)
  free t(3) r(3) | grasp(3) | goal(3) | f_g | action | r_d r_a r_g r_m r_s
  total | observation

Stored states are post-action snapshots indexed from 1; the reward in a block
is recomputable from that same block's state and action. Only successful
episodes are stored. Images are not recorded; the header marks
"sensors: none" for forward compatibility.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .env import Env, EpisodeConfig
from .observation import ObservationLayout
from .reward import RewardWeights
from .robot import RobotSpec, make_robot
from .world import TaskSpec, make_task

MAGIC_LINE = "MMTRAJ 1"
TRAJ_SUFFIX = ".mmt"
MANIFEST_NAME = "manifest.json"
FRAME_RATE = 30.0


class MalformedTrajectory(ValueError):
    pass


class ReplayMismatch(ValueError):
    pass


# ---------------------------------------------------------------------------
# Trajectory container
# ---------------------------------------------------------------------------

_ARRAY_FIELDS = ("t", "q", "qdot", "qddot", "wrist", "object_state", "grasp",
                 "goal", "f_g", "actions", "reward_terms", "observations")


@dataclass
class Trajectory:
    robot: str
    object_name: str
    skill: str
    instruction: str
    seed: int                      # episode-config seed that succeeded
    episode: int
    success: bool
    config: EpisodeConfig
    weights: RewardWeights
    layout: dict                   # observation layout as a plain dict
    t: np.ndarray                  # (F,)
    q: np.ndarray                  # (F, J)
    qdot: np.ndarray
    qddot: np.ndarray
    wrist: np.ndarray              # (F, 6) translation + rotation vector
    object_state: np.ndarray       # (F, 8) joint, attached, free pose t+r
    grasp: np.ndarray              # (F, 3)
    goal: np.ndarray               # (F, 3)
    f_g: np.ndarray                # (F,)
    actions: np.ndarray            # (F, 6+D)
    reward_terms: np.ndarray       # (F, 6) r_d r_a r_g r_m r_s total
    observations: np.ndarray       # (F, obs)

    @property
    def length(self) -> int:
        return int(self.t.shape[0])

    def __eq__(self, other) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented
        meta_same = (
            self.robot == other.robot and self.object_name == other.object_name
            and self.skill == other.skill and self.instruction == other.instruction
            and self.seed == other.seed and self.episode == other.episode
            and self.success == other.success and self.config == other.config
            and self.weights == other.weights and self.layout == other.layout)
        if not meta_same:
            return False
        return all(np.array_equal(getattr(self, name), getattr(other, name))
                   for name in _ARRAY_FIELDS)


# ---------------------------------------------------------------------------
# Recording
# ---------------------------------------------------------------------------

def _object_state_row(state) -> np.ndarray:
    row = np.zeros(8)
    row[0] = state.joint_value
    row[1] = 1.0 if state.attached else 0.0
    if state.free_pose is not None:
        row[2:5] = state.free_pose.translation
        row[5:8] = state.free_pose.rotation
    return row


def record_rollout(policy, task: TaskSpec, robot_spec: RobotSpec,
                   episode_config: EpisodeConfig, seed: int, retries: int = 10,
                   weights: RewardWeights | None = None) -> Trajectory | None:
    """Roll deterministic episodes with incremented seeds until one succeeds.

    Returns the successful trajectory, or None when retries are exhausted
    (the caller logs a generation failure).
    """
    weights = weights or RewardWeights()
    for attempt in range(retries + 1):
        config = replace(episode_config, seed=seed + attempt)
        env = Env(config, task, robot_spec)
        obs = env.reset(0)
        rows = {name: [] for name in _ARRAY_FIELDS}
        while not env.done:
            action = np.asarray(policy.deterministic_action(obs.values, env),
                                dtype=np.float64)
            obs, _, _, info = env.step(action, weights)
            rows["t"].append(float(env.t))
            rows["q"].append(env.robot.q.copy())
            rows["qdot"].append(env.robot.qdot.copy())
            rows["qddot"].append(env.robot.qddot.copy())
            rows["wrist"].append(np.concatenate([env.robot.wrist_pose.translation,
                                                 env.robot.wrist_pose.rotation]))
            rows["object_state"].append(_object_state_row(env.object_state))
            rows["grasp"].append(np.asarray(info["grasp_point"], dtype=np.float64))
            rows["goal"].append(env.task.goal_point.copy())
            rows["f_g"].append(1.0 if info["f_g"] else 0.0)
            rows["actions"].append(action)
            rows["reward_terms"].append(info["terms"].as_array())
            rows["observations"].append(obs.values.copy())
        if not env.success:
            continue
        arrays = {name: np.array(vals) for name, vals in rows.items()}
        return Trajectory(
            robot=robot_spec.name,
            object_name=task.object.category_label,
            skill=task.skill,
            instruction=task.instruction,
            seed=config.seed,
            episode=0,
            success=True,
            config=config,
            weights=weights,
            layout=ObservationLayout.for_robot(robot_spec).to_dict(),
            **arrays,
        )
    return None


# ---------------------------------------------------------------------------
# Header (de)serialization: floats as hex for exact round trips
# ---------------------------------------------------------------------------

def _enc(value):
    if isinstance(value, float):
        return {"hex": value.hex()}
    if isinstance(value, tuple):
        return [_enc(v) for v in value]
    return value


def _dec(value):
    if isinstance(value, dict) and "hex" in value:
        return float.fromhex(value["hex"])
    if isinstance(value, list):
        return tuple(_dec(v) for v in value)
    return value


_CONFIG_FIELDS = ("seed", "max_steps", "dt", "base_offset_range", "yaw_range",
                  "object_height_range", "open_init_angle", "close_init_range",
                  "grasp_threshold", "success_threshold", "fixed_base")
_WEIGHT_FIELDS = ("distance", "approach", "grasp", "move", "success",
                  "grasp_threshold", "success_threshold")


def _config_to_json(config: EpisodeConfig) -> str:
    return json.dumps({k: _enc(getattr(config, k)) for k in _CONFIG_FIELDS})


def _config_from_json(text: str) -> EpisodeConfig:
    raw = json.loads(text)
    return EpisodeConfig(**{k: _dec(raw[k]) for k in _CONFIG_FIELDS})


def _weights_to_json(weights: RewardWeights) -> str:
    return json.dumps({k: _enc(getattr(weights, k)) for k in _WEIGHT_FIELDS})


def _weights_from_json(text: str) -> RewardWeights:
    raw = json.loads(text)
    return RewardWeights(**{k: _dec(raw[k]) for k in _WEIGHT_FIELDS})


# ---------------------------------------------------------------------------
# write / read
# ---------------------------------------------------------------------------

def _frame_width(traj: Trajectory) -> int:
    return sum(1 if getattr(traj, name).ndim == 1 else getattr(traj, name).shape[1]
               for name in _ARRAY_FIELDS)


def write(traj: Trajectory, path) -> None:
    path = Path(path)
    header = [
        MAGIC_LINE,
        f"robot: {traj.robot}",
        f"object: {traj.object_name}",
        f"skill: {traj.skill}",
        f"instruction: {traj.instruction}",
        f"seed: {traj.seed}",
        f"episode: {traj.episode}",
        f"frames: {traj.length}",
        f"success: {str(traj.success).lower()}",
        "sensors: none",
        f"config: {_config_to_json(traj.config)}",
        f"weights: {_weights_to_json(traj.weights)}",
        f"layout: {json.dumps(traj.layout)}",
        f"joint_dim: {traj.q.shape[1]}",
        f"action_dim: {traj.actions.shape[1]}",
        f"obs_dim: {traj.observations.shape[1]}",
        "END_HEADER",
        "",
    ]
    blocks = []
    for i in range(traj.length):
        row = [np.atleast_1d(getattr(traj, name)[i]) for name in _ARRAY_FIELDS]
        blocks.append(np.concatenate(row))
    payload = np.concatenate(blocks).astype("<f8").tobytes() if blocks else b""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes("\n".join(header).encode("utf-8") + payload)


def read(path) -> Trajectory:
    path = Path(path)
    data = path.read_bytes()
    marker = b"\nEND_HEADER\n"
    end = data.find(marker)
    if not data.startswith(MAGIC_LINE.encode("utf-8")):
        raise MalformedTrajectory(f"malformed trajectory {path}: bad magic line")
    if end < 0:
        raise MalformedTrajectory(f"malformed trajectory {path}: END_HEADER missing")
    header_text = data[:end].decode("utf-8")
    binary_start = end + len(marker)
    fields = {}
    for line in header_text.splitlines()[1:]:
        key, _, value = line.partition(": ")
        fields[key] = value
    try:
        frames = int(fields["frames"])
        joint_dim = int(fields["joint_dim"])
        action_dim = int(fields["action_dim"])
        obs_dim = int(fields["obs_dim"])
        config = _config_from_json(fields["config"])
        weights = _weights_from_json(fields["weights"])
        layout = json.loads(fields["layout"])
    except (KeyError, ValueError, TypeError) as exc:
        raise MalformedTrajectory(f"malformed trajectory {path}: {exc}") from exc

    widths = {
        "t": 1, "q": joint_dim, "qdot": joint_dim, "qddot": joint_dim,
        "wrist": 6, "object_state": 8, "grasp": 3, "goal": 3, "f_g": 1,
        "actions": action_dim, "reward_terms": 6, "observations": obs_dim,
    }
    frame_width = sum(widths.values())
    expected = frames * frame_width * 8
    actual = len(data) - binary_start
    if actual != expected:
        raise MalformedTrajectory(
            f"malformed trajectory {path}: binary payload is {actual} bytes, "
            f"expected {expected}, at byte offset {binary_start + min(actual, expected)}")
    flat = np.frombuffer(data, dtype="<f8", offset=binary_start).astype(np.float64)
    table = flat.reshape(frames, frame_width) if frames else flat.reshape(0, frame_width)
    arrays = {}
    offset = 0
    for name in _ARRAY_FIELDS:
        width = widths[name]
        chunk = table[:, offset:offset + width]
        arrays[name] = chunk[:, 0].copy() if width == 1 and name in ("t", "f_g") \
            else chunk.copy()
        offset += width
    return Trajectory(
        robot=fields["robot"],
        object_name=fields["object"],
        skill=fields["skill"],
        instruction=fields["instruction"],
        seed=int(fields["seed"]),
        episode=int(fields["episode"]),
        success=fields["success"] == "true",
        config=config,
        weights=weights,
        layout=layout,
        **arrays,
    )


# ---------------------------------------------------------------------------
# Replay
# ---------------------------------------------------------------------------

def replay_trajectory(traj: Trajectory) -> None:
    """Re-run the recorded actions in a fresh env and demand bit-equality.

    Raises ReplayMismatch naming the first diverging step and field.
    """
    env = Env(traj.config, make_task(traj.object_name, traj.skill),
              make_robot(traj.robot))
    obs = env.reset(traj.episode)
    for i in range(traj.length):
        if env.done:
            raise ReplayMismatch(f"episode ended early at step {i + 1}")
        obs, _, _, info = env.step(traj.actions[i], traj.weights)
        recorded = {
            "t": np.array([traj.t[i]]),
            "q": traj.q[i],
            "qdot": traj.qdot[i],
            "qddot": traj.qddot[i],
            "wrist": traj.wrist[i],
            "grasp": traj.grasp[i],
            "f_g": np.array([traj.f_g[i]]),
            "reward_terms": traj.reward_terms[i],
            "observations": traj.observations[i],
        }
        actual = {
            "t": np.array([float(env.t)]),
            "q": env.robot.q,
            "qdot": env.robot.qdot,
            "qddot": env.robot.qddot,
            "wrist": np.concatenate([env.robot.wrist_pose.translation,
                                     env.robot.wrist_pose.rotation]),
            "grasp": np.asarray(info["grasp_point"]),
            "f_g": np.array([1.0 if info["f_g"] else 0.0]),
            "reward_terms": info["terms"].as_array(),
            "observations": obs.values,
        }
        for name in actual:
            if not np.array_equal(recorded[name], actual[name]):
                raise ReplayMismatch(
                    f"replay mismatch at step {i + 1}, field {name!r}")
    if not env.success:
        raise ReplayMismatch("replayed episode did not succeed")


# ---------------------------------------------------------------------------
# Dataset generation & manifest
# ---------------------------------------------------------------------------

def task_dir_name(robot: str, object_name: str, skill: str) -> str:
    return f"{robot}__{skill}_{object_name}"


def generate_dataset(root, policy, tasks, trajectories_per_task: int,
                     episode_config: EpisodeConfig, seed: int = 0,
                     retries: int = 10, weights: RewardWeights | None = None,
                     log=None) -> dict:
    """Record trajectories for (robot, object, skill) triples; returns the
    manifest dict (also written to root/manifest.json)."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    manifest = {"version": 1, "frame_rate": FRAME_RATE, "tasks": []}
    seed_stride = 1000 * (retries + 1)
    for task_index, (robot_name, object_name, skill) in enumerate(tasks):
        spec = make_robot(robot_name)
        task = make_task(object_name, skill)
        entry = {
            "robot": robot_name, "object": object_name, "skill": skill,
            "instruction": task.instruction,
            "layout": ObservationLayout.for_robot(spec).to_dict(),
            "count": 0, "files": [], "failures": 0,
        }
        task_dir = root / task_dir_name(robot_name, object_name, skill)
        for k in range(trajectories_per_task):
            traj_seed = seed + seed_stride * (task_index * trajectories_per_task + k)
            traj = record_rollout(policy, task, spec, episode_config,
                                  seed=traj_seed, retries=retries, weights=weights)
            if traj is None:
                entry["failures"] += 1
                if log:
                    log(f"generation failure: {robot_name} {skill} {object_name} "
                        f"seed {traj_seed}")
                continue
            rel = f"{task_dir.name}/traj_{k:05d}{TRAJ_SUFFIX}"
            write(traj, root / rel)
            entry["files"].append(rel)
            entry["count"] += 1
        manifest["tasks"].append(entry)
    (root / MANIFEST_NAME).write_text(json.dumps(manifest, indent=1, sort_keys=True),
                                      encoding="utf-8")
    return manifest


def read_manifest(root) -> dict:
    path = Path(root) / MANIFEST_NAME
    if not path.is_file():
        raise FileNotFoundError(f"missing manifest: {path}")
    return json.loads(path.read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

_HIST_BIN = 30  # frames per histogram bin (one second at 30 FPS)


@dataclass
class DatasetStats:
    counts: dict          # (object, skill) -> trajectory count
    lengths: dict         # (object, skill) -> list of frame counts
    mean_length: float
    histogram: dict       # bin lower edge -> count

    def cell_mean(self, key) -> float:
        vals = self.lengths.get(key, [])
        return float(np.mean(vals)) if vals else math.nan


def stats(root) -> DatasetStats:
    manifest = read_manifest(root)
    root = Path(root)
    counts: dict = {}
    lengths: dict = {}
    histogram: dict = {}
    all_lengths = []
    for entry in manifest["tasks"]:
        key = (entry["object"], entry["skill"])
        counts[key] = counts.get(key, 0) + entry["count"]
        for rel in entry["files"]:
            traj = read(root / rel)
            lengths.setdefault(key, []).append(traj.length)
            all_lengths.append(traj.length)
            b = (traj.length // _HIST_BIN) * _HIST_BIN
            histogram[b] = histogram.get(b, 0) + 1
    mean_length = float(np.mean(all_lengths)) if all_lengths else 0.0
    return DatasetStats(counts=counts, lengths=lengths, mean_length=mean_length,
                        histogram=histogram)


def render_stats(st: DatasetStats) -> str:
    """Delimited-text report: skill rows x object-category columns."""
    objects = sorted({obj for obj, _ in st.counts})
    skills = sorted({sk for _, sk in st.counts})
    lines = ["count\t" + "\t".join(objects)]
    for sk in skills:
        row = [sk] + [str(st.counts.get((obj, sk), 0)) for obj in objects]
        lines.append("\t".join(row))
    lines.append("mean_frames\t" + "\t".join(objects))
    for sk in skills:
        row = [sk]
        for obj in objects:
            mean = st.cell_mean((obj, sk))
            row.append("-" if math.isnan(mean) else f"{mean:.1f}")
        lines.append("\t".join(row))
    lines.append(f"overall_mean_frames\t{st.mean_length:.1f}")
    lines.append("length_histogram_bin\tcount")
    for edge in sorted(st.histogram):
        lines.append(f"{edge}-{edge + _HIST_BIN - 1}\t{st.histogram[edge]}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Depth pixel normalization
# ---------------------------------------------------------------------------

_DEPTH_CLIP_M = 5.0
_DEPTH_MAX_PIXEL = 255


def depth_normalize(raw_depth: float) -> int:
    """Map metres to a 0..255 pixel: clip to [0, 5] m, scale by 255/5,
    round half away from zero. Non-finite readings saturate to 255."""
    if not math.isfinite(raw_depth):
        return _DEPTH_MAX_PIXEL
    clipped = min(max(float(raw_depth), 0.0), _DEPTH_CLIP_M)
    return int(math.floor(clipped * (_DEPTH_MAX_PIXEL / _DEPTH_CLIP_M) + 0.5))
