"""PPO with clipped surrogate, GAE, and vectorized deterministic rollouts.

One Gaussian policy per task: a 4-hidden-layer MLP outputs the (6+D) action
mean; a state-independent learned log-std (initialized to log(0.3 * limit))
completes the distribution. Samples are clamped to per-component action
limits. A same-shaped value MLP outputs the scalar state value.

Rollout collection fans env stepping out over an optional thread pool; each
env slot owns its Philox action-noise stream and per-slot episode counter,
so a batch is bit-identical for any worker count or scheduling.
"""
from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field

import numpy as np

from ..env import Env, EpisodeConfig, STREAM_ACTION, episode_rng
from ..observation import ObservationLayout
from ..reward import RewardWeights
from ..robot import RobotSpec
from ..world import TaskSpec
from .net import HIDDEN_WIDTHS, Adam, Mlp, clip_gradients

_LOG_STD_MIN, _LOG_STD_MAX = -20.0, 2.0
_LOG2PI = np.log(2.0 * np.pi)

# rng stream ids above the per-episode ones in env
_STREAM_POLICY_INIT = 16
_STREAM_VALUE_INIT = 17
_STREAM_UPDATE = 18

_SLOT_EPISODE_STRIDE = 1 << 32  # slot i uses episode ids i*stride + k


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class PPOConfig:
    num_envs: int = 64
    learning_rate: float = 1e-3
    iterations: int = 300
    rollout_horizon: int = 32
    minibatches: int = 4
    epochs_per_iter: int = 5
    clip_ratio: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    entropy_coef: float = 0.0
    value_coef: float = 0.5
    grad_clip: float = 1.0
    seed: int = 0
    workers: int = 1
    log_std_init_scale: float = 0.3
    target_kl: float = 0.05   # stop policy minibatch steps once KL exceeds this

    def __post_init__(self):
        assert self.num_envs >= 1 and self.rollout_horizon >= 1
        assert 0.0 < self.clip_ratio < 1.0
        assert self.minibatches >= 1 and self.epochs_per_iter >= 1


# ---------------------------------------------------------------------------
# Policy
# ---------------------------------------------------------------------------

def action_bounds(spec: RobotSpec):
    """Per-component clamp bounds: +-pos/rot step limit, effector limits."""
    low = np.concatenate([
        -spec.pos_step_limit * np.ones(3),
        -spec.rot_step_limit * np.ones(3),
        spec.effector_limits()[:, 0],
    ])
    high = np.concatenate([
        spec.pos_step_limit * np.ones(3),
        spec.rot_step_limit * np.ones(3),
        spec.effector_limits()[:, 1],
    ])
    return low, high


# Fixed network-input scaling. The observation vector itself stays in raw
# physical units (its contract); these constants are part of the network
# architecture. Without them joint accelerations (up to ~2*vmax/dt^2 ~ 240)
# saturate the first tanh layer and kill every gradient.
_VEL_SCALE = 2.0
_ANGVEL_SCALE = 4.0
_Q_SCALE = 3.0
_QDOT_SCALE = 4.0
_QDDOT_SCALE = 240.0
_DIST_SCALE = 2.0

# Value net output scale: raw head output is multiplied by this so that
# episode returns (hundreds) are reachable within a few hundred Adam steps.
VALUE_SCALE = 20.0


def observation_inv_scale(spec: RobotSpec) -> np.ndarray:
    """1/scale per observation component, from physical bounds."""
    n, d, j = spec.n_hand_points, spec.dof_effector, spec.n_joints
    low, high = action_bounds(spec)
    parts = [
        np.ones(30),                      # time embedding in [-1, 1]
        np.ones(9),                       # grasp/rotation/goal, metres & rad
        np.ones(6),                       # palm position + rotation
        np.full(3, 1.0 / _VEL_SCALE),
        np.full(3, 1.0 / _ANGVEL_SCALE),
        np.ones(6 * n),                   # fingertip positions + rotations
        np.full(3 * n, 1.0 / _VEL_SCALE),
        np.full(3 * n, 1.0 / _ANGVEL_SCALE),
        np.full(j, 1.0 / _Q_SCALE),
        np.full(j, 1.0 / _QDOT_SCALE),
        np.full(j, 1.0 / _QDDOT_SCALE),
        np.full(1 + n + spec.n_distance_points + 3, 1.0 / _DIST_SCALE),
        1.0 / (0.5 * (high - low)),       # previous action to ~[-1, 1]
    ]
    return np.concatenate(parts)


class GaussianPolicy:
    """MLP mean + state-independent log-std, clamped to action limits.

    The mean is bounded: mean = half_range * tanh(net output). Two failure
    modes force this at lr 1e-3: an unscaled head moves the mean by tens of
    physical sigmas (sigma ~ 0.006 m) per Adam step, and an unbounded head
    drifts outside the action box once sampled actions saturate, after which
    the importance ratio overflows faster than clipping can react.
    """

    def __init__(self, obs_dim: int, low: np.ndarray, high: np.ndarray,
                 rng: np.random.Generator, hidden=HIDDEN_WIDTHS,
                 log_std_init_scale: float = 0.3,
                 obs_inv_scale: np.ndarray | None = None):
        act_dim = len(low)
        self.net = Mlp((obs_dim,) + tuple(hidden) + (act_dim,), rng, head_gain=0.01)
        self.low = np.asarray(low, dtype=np.float64)
        self.high = np.asarray(high, dtype=np.float64)
        self.mean_scale = 0.5 * (self.high - self.low)
        self.log_std = np.log(log_std_init_scale * self.mean_scale)
        self.obs_inv_scale = (np.ones(obs_dim) if obs_inv_scale is None
                              else np.asarray(obs_inv_scale, dtype=np.float64))

    def scale_obs(self, obs: np.ndarray) -> np.ndarray:
        return obs * self.obs_inv_scale

    @property
    def obs_dim(self) -> int:
        return self.net.widths[0]

    @property
    def act_dim(self) -> int:
        return self.net.widths[-1]

    def parameters(self):
        return self.net.parameters() + [self.log_std]

    def std(self) -> np.ndarray:
        return np.exp(np.clip(self.log_std, _LOG_STD_MIN, _LOG_STD_MAX))

    def mean(self, obs: np.ndarray) -> np.ndarray:
        return self.mean_scale * np.tanh(self.net.forward(self.scale_obs(obs)))

    def clamp(self, actions: np.ndarray) -> np.ndarray:
        return np.clip(actions, self.low, self.high)

    def sample(self, mean: np.ndarray, noise: np.ndarray) -> np.ndarray:
        return self.clamp(mean + self.std() * noise)

    def log_prob(self, mean: np.ndarray, actions: np.ndarray) -> np.ndarray:
        std = self.std()
        z = (actions - mean) / std
        return -0.5 * ((z * z).sum(axis=-1)
                       + 2.0 * np.log(std).sum()
                       + self.act_dim * _LOG2PI)

    def entropy(self) -> float:
        return float(np.log(self.std()).sum()
                     + 0.5 * self.act_dim * (1.0 + _LOG2PI))

    def deterministic_action(self, obs: np.ndarray, env=None) -> np.ndarray:
        return self.clamp(self.mean(obs))


def make_value_net(obs_dim: int, rng: np.random.Generator,
                   hidden=HIDDEN_WIDTHS) -> Mlp:
    # near-zero head: initial values ~ 0 so early advantages reduce to clean
    # discounted reward sums instead of chasing a random value landscape
    return Mlp((obs_dim,) + tuple(hidden) + (1,), rng, head_gain=0.01)


def value_forward(value_net: Mlp, policy: GaussianPolicy, obs: np.ndarray) -> np.ndarray:
    """State values: scaled-input MLP with a fixed output gain."""
    return VALUE_SCALE * value_net.forward(policy.scale_obs(obs))[:, 0]


# ---------------------------------------------------------------------------
# GAE
# ---------------------------------------------------------------------------

def compute_gae(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray,
                bootstrap: np.ndarray, gamma: float, lam: float,
                timeout_values: np.ndarray | None = None):
    """delta_t = r_t + g*v_{t+1}*(1-d_t) - v_t; A_t = delta_t + g*l*(1-d_t)*A_{t+1}.

    Shapes (num_envs, horizon); bootstrap is the post-horizon value (num_envs,).
    timeout_values carries V(terminal state) at steps where the episode hit
    its step limit rather than truly terminating: those steps bootstrap
    through the limit instead of treating it as an absorbing state (otherwise
    the pre-timeout step earns a spurious -V(s) advantage spike and the
    policy learns to chase episode ends). Returns (advantages, returns) with
    returns = advantages + values.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    if not (rewards.shape == values.shape == dones.shape):
        raise ValueError("rewards/values/dones shape mismatch")
    n_envs, horizon = rewards.shape
    if np.shape(bootstrap) != (n_envs,):
        raise ValueError("bootstrap shape mismatch")
    if timeout_values is not None and timeout_values.shape != rewards.shape:
        raise ValueError("timeout_values shape mismatch")
    advantages = np.zeros_like(rewards)
    next_adv = np.zeros(n_envs)
    next_value = np.asarray(bootstrap, dtype=np.float64)
    for t in range(horizon - 1, -1, -1):
        live = 1.0 - dones[:, t]
        carried = next_value * live
        if timeout_values is not None:
            carried = carried + timeout_values[:, t]
        delta = rewards[:, t] + gamma * carried - values[:, t]
        next_adv = delta + gamma * lam * live * next_adv
        advantages[:, t] = next_adv
        next_value = values[:, t]
    return advantages, advantages + values


# ---------------------------------------------------------------------------
# Rollouts
# ---------------------------------------------------------------------------

@dataclass
class RolloutBatch:
    observations: np.ndarray  # (E, H, obs)
    actions: np.ndarray       # (E, H, act)
    log_probs: np.ndarray     # (E, H)
    values: np.ndarray        # (E, H)
    rewards: np.ndarray       # (E, H)
    dones: np.ndarray         # (E, H)
    bootstrap: np.ndarray     # (E,)
    timeout_values: np.ndarray | None = None  # (E, H) V(s_T) at truncations
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None
    episode_returns: list = field(default_factory=list)
    episode_successes: list = field(default_factory=list)
    episode_lengths: list = field(default_factory=list)


class EnvSlot:
    """One env instance plus its private episode counter and noise stream."""

    def __init__(self, index: int, env: Env, seed: int):
        self.index = index
        self.env = env
        self.episodes_started = 0
        self.noise_rng = episode_rng(seed, _SLOT_EPISODE_STRIDE * index, STREAM_ACTION)
        self.obs = env.reset(self._episode_id())
        self.episodes_started = 1
        self.return_acc = 0.0
        self.length_acc = 0

    def _episode_id(self) -> int:
        return _SLOT_EPISODE_STRIDE * self.index + self.episodes_started

    def step(self, action: np.ndarray, weights: RewardWeights):
        obs, reward, done, _ = self.env.step(action, weights)
        self.return_acc += reward
        self.length_acc += 1
        finished = None
        timeout_obs = None
        if done:
            finished = (self.return_acc, self.env.success, self.length_acc)
            if not self.env.success:
                timeout_obs = obs.values  # step-limit truncation, not terminal
            self.return_acc = 0.0
            self.length_acc = 0
            obs = self.env.reset(self._episode_id())
            self.episodes_started += 1
        self.obs = obs
        return reward, done, finished, timeout_obs


def make_slots(task: TaskSpec, robot_spec: RobotSpec, episode_config: EpisodeConfig,
               num_envs: int) -> list:
    return [EnvSlot(i, Env(episode_config, task, robot_spec), episode_config.seed)
            for i in range(num_envs)]


def collect_rollouts(slots, policy: GaussianPolicy, value_net: Mlp, horizon: int,
                     weights: RewardWeights, workers: int = 1,
                     pool: concurrent.futures.Executor | None = None) -> RolloutBatch:
    n = len(slots)
    batch = RolloutBatch(
        observations=np.empty((n, horizon, policy.obs_dim)),
        actions=np.empty((n, horizon, policy.act_dim)),
        log_probs=np.empty((n, horizon)),
        values=np.empty((n, horizon)),
        rewards=np.empty((n, horizon)),
        dones=np.empty((n, horizon)),
        bootstrap=np.empty(n),
    )
    own_pool = None
    if pool is None and workers > 1:
        own_pool = concurrent.futures.ThreadPoolExecutor(max_workers=workers)
        pool = own_pool
    truncations = []  # (slot index, t, terminal observation)
    try:
        for t in range(horizon):
            obs_mat = np.stack([slot.obs.values for slot in slots])
            means = policy.mean(obs_mat)
            values = value_forward(value_net, policy, obs_mat)
            # noise drawn in slot order from per-slot streams: worker-count
            # independent by construction
            noise = np.stack([slot.noise_rng.standard_normal(policy.act_dim)
                              for slot in slots])
            actions = policy.sample(means, noise)
            log_probs = policy.log_prob(means, actions)

            def run(slot_action):
                slot, action = slot_action
                return slot.step(action, weights)

            work = list(zip(slots, actions))
            results = list(pool.map(run, work)) if pool is not None else [run(x) for x in work]

            batch.observations[:, t] = obs_mat
            batch.actions[:, t] = actions
            batch.log_probs[:, t] = log_probs
            batch.values[:, t] = values
            for i, (reward, done, finished, timeout_obs) in enumerate(results):
                batch.rewards[i, t] = reward
                batch.dones[i, t] = float(done)
                if timeout_obs is not None:
                    truncations.append((i, t, timeout_obs))
                if finished is not None:
                    ret, success, length = finished
                    batch.episode_returns.append(ret)
                    batch.episode_successes.append(bool(success))
                    batch.episode_lengths.append(length)
    finally:
        if own_pool is not None:
            own_pool.shutdown()
    final_obs = np.stack([slot.obs.values for slot in slots])
    batch.bootstrap = value_forward(value_net, policy, final_obs)
    batch.timeout_values = np.zeros_like(batch.rewards)
    if truncations:
        term_obs = np.stack([obs for _, _, obs in truncations])
        term_values = value_forward(value_net, policy, term_obs)
        for (i, t, _), v in zip(truncations, term_values):
            batch.timeout_values[i, t] = v
    return batch


# ---------------------------------------------------------------------------
# Update
# ---------------------------------------------------------------------------

@dataclass
class UpdateStats:
    policy_loss: float
    value_loss: float
    entropy: float
    clip_fraction: float
    grad_norm_policy: float
    grad_norm_value: float
    approx_kl: float
    minibatch_steps: int


def ppo_update(policy: GaussianPolicy, value_net: Mlp, policy_opt: Adam,
               value_opt: Adam, batch: RolloutBatch, cfg: PPOConfig,
               update_rng: np.random.Generator) -> UpdateStats:
    """Clipped-surrogate update; advantages are normalized per minibatch."""
    if batch.advantages is None or batch.returns is None:
        raise ValueError("batch needs advantages/returns (run compute_gae)")
    obs = batch.observations.reshape(-1, policy.obs_dim)
    actions = batch.actions.reshape(-1, policy.act_dim)
    old_log_probs = batch.log_probs.reshape(-1)
    advantages = batch.advantages.reshape(-1)
    returns = batch.returns.reshape(-1)
    total = obs.shape[0]
    mb_size = total // cfg.minibatches

    stats = []
    policy_steps = 0
    stop_policy = False  # KL guard halts policy steps; value keeps training
    for _ in range(cfg.epochs_per_iter):
        perm = update_rng.permutation(total)
        for k in range(cfg.minibatches):
            idx = perm[k * mb_size:(k + 1) * mb_size]
            mb_obs = obs[idx]
            mb_ret = returns[idx]
            b = len(idx)

            mb_obs_scaled = policy.scale_obs(mb_obs)
            policy_loss = 0.0
            entropy = policy.entropy()
            clip_frac = 0.0
            gnorm_p = 0.0
            approx_kl = 0.0
            if not stop_policy:
                mb_act = actions[idx]
                mb_old = old_log_probs[idx]
                adv = advantages[idx]
                adv = (adv - adv.mean()) / (adv.std() + 1e-8)

                raw_mean, cache = policy.net.forward_cached(mb_obs_scaled)
                squashed = np.tanh(raw_mean)
                mean = policy.mean_scale * squashed
                std = policy.std()
                z = (mb_act - mean) / std
                log_probs = -0.5 * ((z * z).sum(axis=1)
                                    + 2.0 * np.log(std).sum()
                                    + policy.act_dim * _LOG2PI)
                # exp guard: a blown ratio still registers as huge finite loss
                ratio = np.exp(np.minimum(log_probs - mb_old, 50.0))
                clipped = np.clip(ratio, 1.0 - cfg.clip_ratio, 1.0 + cfg.clip_ratio)
                surrogate = np.minimum(ratio * adv, clipped * adv)
                policy_loss = -float(surrogate.mean()) - cfg.entropy_coef * entropy
                clip_frac = float((ratio != clipped).mean())
                approx_kl = float(((ratio - 1.0) - np.log(ratio)).mean())

                # gradient flows through ratio only where the unclipped branch
                # is active: A>=0 and ratio<1+eps, or A<0 and ratio>1-eps
                active = np.where(adv >= 0.0, ratio < 1.0 + cfg.clip_ratio,
                                  ratio > 1.0 - cfg.clip_ratio)
                dlp = -(adv * ratio * active) / b      # dL/dlogpi per sample
                dmean = dlp[:, None] * (z / std)       # dlogpi/dmean = z/std
                dlog_std = (dlp[:, None] * (z * z - 1.0)).sum(axis=0)
                dlog_std -= cfg.entropy_coef * 1.0      # dH/dlogstd = 1 per dim
                draw = policy.mean_scale * (1.0 - squashed * squashed) * dmean
                grads, _ = policy.net.backward(cache, draw)
                grads.append(dlog_std)
                gnorm_p = clip_gradients(grads, cfg.grad_clip)
                policy_opt.step(grads)
                policy_steps += 1
                if approx_kl > cfg.target_kl:
                    stop_policy = True

            v_raw, vcache = value_net.forward_cached(mb_obs_scaled)
            v = VALUE_SCALE * v_raw[:, 0]
            value_loss = cfg.value_coef * float(((v - mb_ret) ** 2).mean())
            dv = 2.0 * cfg.value_coef * VALUE_SCALE * (v - mb_ret)[:, None] / b
            vgrads, _ = value_net.backward(vcache, dv)
            gnorm_v = clip_gradients(vgrads, cfg.grad_clip)
            value_opt.step(vgrads)

            if not np.isfinite(policy_loss) or not np.isfinite(value_loss):
                raise TrainingDiverged(
                    f"diverged: policy_loss={policy_loss} value_loss={value_loss}")
            stats.append((policy_loss, value_loss, entropy, clip_frac,
                          gnorm_p, gnorm_v, approx_kl))

    agg = np.array(stats)
    means = [float(x) for x in agg.mean(axis=0)]
    return UpdateStats(*means, minibatch_steps=policy_steps)


# ---------------------------------------------------------------------------
# Train / evaluate
# ---------------------------------------------------------------------------

@dataclass
class CurvePoint:
    iteration: int
    mean_return: float
    success_rate: float


@dataclass
class TrainResult:
    policy: GaussianPolicy
    value_net: Mlp
    curve: list
    robot_name: str


def _init_rng(seed: int, stream: int) -> np.random.Generator:
    return episode_rng(seed, 0, stream)


def build_nets(robot_spec: RobotSpec, cfg: PPOConfig):
    obs_dim = ObservationLayout.for_robot(robot_spec).total
    low, high = action_bounds(robot_spec)
    policy = GaussianPolicy(obs_dim, low, high,
                            _init_rng(cfg.seed, _STREAM_POLICY_INIT),
                            log_std_init_scale=cfg.log_std_init_scale,
                            obs_inv_scale=observation_inv_scale(robot_spec))
    value_net = make_value_net(obs_dim, _init_rng(cfg.seed, _STREAM_VALUE_INIT))
    return policy, value_net


def train(task: TaskSpec, robot_spec: RobotSpec, cfg: PPOConfig,
          episode_config: EpisodeConfig | None = None,
          weights: RewardWeights | None = None,
          progress=None) -> TrainResult:
    """collect -> GAE -> clipped update, for cfg.iterations iterations."""
    episode_config = episode_config or EpisodeConfig(seed=cfg.seed)
    weights = weights or RewardWeights()
    policy, value_net = build_nets(robot_spec, cfg)
    policy_opt = Adam(policy.parameters(), cfg.learning_rate)
    value_opt = Adam(value_net.parameters(), cfg.learning_rate)
    update_rng = _init_rng(cfg.seed, _STREAM_UPDATE)
    slots = make_slots(task, robot_spec, episode_config, cfg.num_envs)
    pool = (concurrent.futures.ThreadPoolExecutor(max_workers=cfg.workers)
            if cfg.workers > 1 else None)

    curve = []
    recent_returns: list = []
    recent_successes: list = []
    try:
        for iteration in range(cfg.iterations):
            batch = collect_rollouts(slots, policy, value_net,
                                     cfg.rollout_horizon, weights,
                                     workers=cfg.workers, pool=pool)
            batch.advantages, batch.returns = compute_gae(
                batch.rewards, batch.values, batch.dones, batch.bootstrap,
                cfg.gamma, cfg.gae_lambda, timeout_values=batch.timeout_values)
            stats = ppo_update(policy, value_net, policy_opt, value_opt,
                               batch, cfg, update_rng)
            recent_returns = (recent_returns + batch.episode_returns)[-64:]
            recent_successes = (recent_successes + batch.episode_successes)[-64:]
            point = CurvePoint(
                iteration=iteration,
                mean_return=float(np.mean(recent_returns)) if recent_returns else 0.0,
                success_rate=float(np.mean(recent_successes)) if recent_successes else 0.0,
            )
            curve.append(point)
            if progress is not None:
                progress(point, stats)
    finally:
        if pool is not None:
            pool.shutdown()
    return TrainResult(policy=policy, value_net=value_net, curve=curve,
                       robot_name=robot_spec.name)


def write_curve(path, curve) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("iteration\tmean_return\tsuccess_rate\n")
        for p in curve:
            f.write(f"{p.iteration}\t{p.mean_return:.6f}\t{p.success_rate:.6f}\n")


@dataclass
class EpisodeRecord:
    episode: int
    success: bool
    steps: int
    final_goal_distance: float


@dataclass
class EvalResult:
    success_rate: float
    records: list


def evaluate(policy, task: TaskSpec, robot_spec: RobotSpec,
             episode_config: EpisodeConfig, n_episodes: int,
             weights: RewardWeights | None = None) -> EvalResult:
    """Deterministic policy (action = clamped mean) over n seeded episodes."""
    if n_episodes <= 0:
        raise ValueError("no episodes")
    obs_dim = ObservationLayout.for_robot(robot_spec).total
    policy_obs_dim = getattr(policy, "obs_dim", None)
    if policy_obs_dim is not None and policy_obs_dim != obs_dim:
        raise ValueError(
            f"policy expects obs dim {policy_obs_dim}, robot produces {obs_dim}")
    weights = weights or RewardWeights()
    env = Env(episode_config, task, robot_spec)
    records = []
    for episode in range(n_episodes):
        obs = env.reset(episode)
        steps = 0
        info = {}
        while not env.done:
            action = policy.deterministic_action(obs.values, env)
            obs, _, _, info = env.step(action, weights)
            steps += 1
        records.append(EpisodeRecord(
            episode=episode, success=bool(env.success), steps=steps,
            final_goal_distance=float(info["goal_distance"])))
    rate = float(np.mean([r.success for r in records]))
    return EvalResult(success_rate=rate, records=records)
