"""Batch Q-learning bidder: state encoding, action grid, training loop.

The learner's state is a 13-vector: its bid magnification pairs and
rewards at lags 48, 24, 2 and 1 hours (padded with the truthful-neutral
values 1.0 / 0.0 before history exists) plus a normalized next-hour
requirement estimate from the forecaster. Actions index an 81-point grid
of magnification pairs, each coordinate in {1.0, 1.5, ..., 5.0}.

Training follows fitted Q iteration with a slowly blended target network
and prioritized replay: act epsilon-greedily with the *target* network for
a block of steps, store transitions at the fresh-entry priority, sample a
mini-batch, regress the local network once toward bootstrap targets
r + gamma * max_a' Q(s', a'; target), refresh the sampled priorities from
the updated local network, then soft-update the target.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Protocol

import numpy as np

from .market import ReactiveMarketEnv
from .nn import Mlp, NumericError, ShapeError, soft_update
from .replay import Experience, ReplayBuffer

N_ACTIONS = 81
ACTIONS_PER_AXIS = 9
STATE_DIM = 13
STATE_LAGS = (48, 24, 2, 1)
VARIANTS = ("nfq1", "nfq2")

# Sub-seed stream indices: every random source of a run is default_rng([seed, k]).
STREAM_ENV = 0
STREAM_FORECASTER = 1
STREAM_NET = 2
STREAM_EPSILON = 3
STREAM_REPLAY = 4
STREAM_WARMUP = 5


def action_decode(index: int) -> tuple[float, float]:
    """Grid index -> magnification pair; the first coordinate is the major axis."""
    if not 0 <= index < N_ACTIONS:
        raise ValueError(f"action index must be in [0, {N_ACTIONS - 1}], got {index}")
    return (1.0 + 0.5 * (index // ACTIONS_PER_AXIS),
            1.0 + 0.5 * (index % ACTIONS_PER_AXIS))


class StepRecord(NamedTuple):
    a1: float
    a2: float
    reward: float


def encode_state(records, t: int, requirement_estimate: float,
                 reward_scale: float = 1.0) -> np.ndarray:
    """13-vector of lagged magnifications, lagged scaled rewards, and the estimate.

    Lags reaching before recorded history pad with magnification 1.0 and
    reward 0.0 (what truthful bidding would have produced). The estimate is
    clipped to [0, 1].
    """
    state = np.empty(STATE_DIM)
    for li, lag in enumerate(STATE_LAGS):
        j = t - lag
        if 0 <= j < len(records):
            rec = records[j]
            state[2 * li] = rec.a1
            state[2 * li + 1] = rec.a2
            state[8 + li] = rec.reward / reward_scale
        else:
            state[2 * li] = 1.0
            state[2 * li + 1] = 1.0
            state[8 + li] = 0.0
    state[12] = min(max(float(requirement_estimate), 0.0), 1.0)
    return state


# ---------------------------------------------------------------------------
# Q evaluation
# ---------------------------------------------------------------------------

def _q_matrix(net: Mlp, variant: str, states: np.ndarray, n_actions: int) -> np.ndarray:
    """Q-values for every action at each state row; shape (len(states), n_actions)."""
    if variant == "nfq2":
        if net.out_dim != n_actions:
            raise ShapeError(f"nfq2 network outputs {net.out_dim} values, expected {n_actions}")
        return net.forward(states)
    if variant == "nfq1":
        if net.out_dim != 1 or net.in_dim != states.shape[1] + 1:
            raise ShapeError(
                f"nfq1 network must map {states.shape[1] + 1} inputs to 1 output, "
                f"got {net.in_dim} -> {net.out_dim}")
        m = len(states)
        action_col = np.tile(np.arange(n_actions) / (n_actions - 1), m)[:, None]
        inputs = np.concatenate([np.repeat(states, n_actions, axis=0), action_col], axis=1)
        return net.forward(inputs).reshape(m, n_actions)
    raise ValueError(f"unknown network variant {variant!r}")


def q_values(net: Mlp, variant: str, state: np.ndarray, n_actions: int = N_ACTIONS) -> np.ndarray:
    """All action values for one state. nfq1 evaluates the network once per
    action with the normalized action index appended; nfq2 evaluates once."""
    state = np.asarray(state, dtype=float)
    return _q_matrix(net, variant, state[None, :], n_actions)[0]


def select_action(qvals: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """Greedy argmax (lowest index on ties) with probability 1 - epsilon,
    otherwise a uniform random index."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    if rng.random() < epsilon:
        return int(rng.integers(len(qvals)))
    return int(np.argmax(qvals))


def compute_targets(batch: list[Experience], target_net: Mlp, variant: str,
                    gamma: float, n_actions: int = N_ACTIONS) -> np.ndarray:
    """Bootstrap targets r + gamma * max_a' Q(s', a'; target); terminal rows use r."""
    if not batch:
        raise ValueError("batch is empty")
    next_states = np.array([e.next_state for e in batch], dtype=float)
    rewards = np.array([e.reward for e in batch])
    live = np.array([0.0 if e.terminal else 1.0 for e in batch])
    best_next = _q_matrix(target_net, variant, next_states, n_actions).max(axis=1)
    return rewards + gamma * best_next * live


def td_error(exp: Experience, local_net: Mlp, target_net: Mlp, variant: str,
             gamma: float, n_actions: int = N_ACTIONS) -> float:
    """Bootstrap target minus the local network's estimate for the taken action."""
    y = compute_targets([exp], target_net, variant, gamma, n_actions)[0]
    q = q_values(local_net, variant, np.asarray(exp.state, dtype=float), n_actions)[exp.action]
    return float(y - q)


# ---------------------------------------------------------------------------
# Task protocol and the market adapter
# ---------------------------------------------------------------------------

class Task(Protocol):
    """Episodic environment with encoded vector states and indexed actions."""

    n_actions: int
    state_dim: int

    def reset(self, seed: int) -> np.ndarray: ...
    def step(self, action: int) -> tuple[np.ndarray, float, bool, dict]: ...


class BiddingTask:
    """Market environment adapter: owns history and the requirement estimates.

    Requirement estimates for the whole episode are precomputed at reset;
    the hourly totals the forecaster reads do not depend on anyone's bids
    because dispatch always balances the requirement.
    """

    def __init__(self, env: ReactiveMarketEnv, forecaster, reward_scale: float = 1.0):
        self.env = env
        self.forecaster = forecaster
        self.reward_scale = reward_scale
        self.n_actions = N_ACTIONS
        self.state_dim = STATE_DIM
        self._estimate_cache: dict[int, np.ndarray] = {}

    def reset(self, seed: int) -> np.ndarray:
        lead_totals = self.env.reset(seed)
        # The totals series is fixed by the seed, so estimates are reusable.
        if seed not in self._estimate_cache:
            totals = np.concatenate([lead_totals, self.env.base_total + self.env.demand_values])
            windows = np.lib.stride_tricks.sliding_window_view(totals, len(lead_totals))
            preds = self.forecaster.predict_batch_normalized(windows)
            self._estimate_cache[seed] = np.clip(preds, 0.0, 1.0)
        self._estimates = self._estimate_cache[seed]
        self._records: list[StepRecord] = []
        return encode_state(self._records, 0, self._estimates[0], self.reward_scale)

    def step(self, action: int):
        a1, a2 = action_decode(action)
        result = self.env.step((a1, a2))
        self._records.append(StepRecord(a1, a2, result.reward))
        t = len(self._records)
        state = encode_state(self._records, t, self._estimates[t], self.reward_scale)
        return state, result.reward, result.done, result.info


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    """Learner hyperparameters; defaults follow the reference configuration."""

    gamma: float = 0.3
    epsilon0: float = 1.0
    epsilon_decay: float = 0.1      # per-episode multiplicative decay
    epsilon_min: float = 0.01
    tau: float = 1e-3
    batch_size: int = 64
    steps_per_iteration: int = 24   # environment steps per training pass
    buffer_capacity: int = 100_000
    warmup_size: int = 10_000
    variant: str = "nfq2"
    hidden_sizes: tuple[int, ...] | None = None
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    episodes: int = 1500
    max_iterations: int | None = None
    reward_scale: float = 1.0
    per_beta: float = 0.7
    per_eps: float = 0.01
    p_init: float | None = None     # None: running max priority
    forced_action_index: int | None = None
    resample_demand: bool = False   # fresh requirement noise every episode

    def __post_init__(self):
        checks = [
            (0.0 <= self.gamma < 1.0, "gamma must be in [0, 1)"),
            (0.0 < self.tau <= 1.0, "tau must be in (0, 1]"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.warmup_size <= self.buffer_capacity, "warmup_size must be <= buffer_capacity"),
            (self.variant in VARIANTS, f"variant must be one of {VARIANTS}"),
            (self.optimizer in ("adam", "rprop"), "optimizer must be adam or rprop"),
            (0.0 <= self.epsilon_min <= self.epsilon0 <= 1.0, "need 0 <= epsilon_min <= epsilon0 <= 1"),
            (0.0 <= self.epsilon_decay <= 1.0, "epsilon_decay must be in [0, 1]"),
            (self.steps_per_iteration >= 1, "steps_per_iteration must be >= 1"),
            (self.episodes >= 1, "episodes must be >= 1"),
            (self.reward_scale > 0, "reward_scale must be positive"),
            (self.learning_rate > 0, "learning_rate must be positive"),
        ]
        for ok, message in checks:
            if not ok:
                raise ValueError(message)

    def hidden(self) -> tuple[int, ...]:
        if self.hidden_sizes:
            return tuple(self.hidden_sizes)
        return (64,) if self.variant == "nfq2" else (64, 64)

    def network_sizes(self, state_dim: int, n_actions: int) -> list[int]:
        if self.variant == "nfq2":
            return [state_dim, *self.hidden(), n_actions]
        return [state_dim + 1, *self.hidden(), 1]

    def make_optimizer(self):
        from .nn import Adam, Rprop
        return Adam(learning_rate=self.learning_rate) if self.optimizer == "adam" else Rprop()


@dataclass
class EpisodeStats:
    episode: int
    reward: float                # sum of per-step rewards
    epsilon: float               # exploration rate during the episode
    mean_abs_td: float           # mean |TD error| over the episode's updates
    baseline_payment: float      # truthful-counterfactual revenue over the episode


@dataclass
class TrainResult:
    episodes: list[EpisodeStats]
    local: Mlp
    target: Mlp


def warmup(task: Task, buffer: ReplayBuffer, n: int, rng: np.random.Generator,
           reset_seed: int = 0, forced_action: int | None = None) -> None:
    """Fill the buffer with n uniformly random transitions (episodes chained)."""
    if n == 0:
        return
    if n > buffer.capacity:
        raise ValueError(f"warmup size {n} exceeds buffer capacity {buffer.capacity}")
    state = task.reset(reset_seed)
    stored = 0
    while stored < n:
        action = forced_action if forced_action is not None else int(rng.integers(task.n_actions))
        next_state, reward, done, _ = task.step(action)
        buffer.add(Experience(state, action, reward, next_state, done))
        stored += 1
        state = task.reset(reset_seed) if done else next_state


def _one_training_pass(local: Mlp, target: Mlp, buffer: ReplayBuffer, opt,
                       config: TrainConfig, n_actions: int,
                       rng: np.random.Generator, context: str) -> float:
    """Sample, regress once toward the bootstrap targets, refresh priorities.

    Returns the mean |TD error| of the batch measured after the update.
    """
    sampled = buffer.sample(config.batch_size, rng)
    indices = [i for i, _ in sampled]
    batch = [e for _, e in sampled]
    y = compute_targets(batch, target, config.variant, config.gamma, n_actions)
    states = np.array([e.state for e in batch], dtype=float)
    actions = np.array([e.action for e in batch])
    m = len(batch)
    if config.variant == "nfq2":
        out, cache = local._forward_cache(states)
        pred = out[np.arange(m), actions]
    else:
        inputs = np.concatenate([states, (actions / (n_actions - 1))[:, None]], axis=1)
        out, cache = local._forward_cache(inputs)
        pred = out[:, 0]
    err = pred - y
    loss = float(np.mean(err * err))
    if not np.isfinite(loss):
        raise NumericError(f"diverged ({context}): non-finite TD loss")
    if config.variant == "nfq2":
        grad_out = np.zeros_like(out)
        grad_out[np.arange(m), actions] = 2.0 * err / m
    else:
        grad_out = (2.0 * err / m)[:, None]
    opt.step(local, local._backward_from_cache(cache, grad_out))

    # Priorities reflect the freshly updated local network.
    if config.variant == "nfq2":
        q_new = local.forward(states)[np.arange(m), actions]
    else:
        q_new = local.forward(inputs)[:, 0]
    deltas = y - q_new
    buffer.update_priorities(indices, deltas)
    return float(np.mean(np.abs(deltas)))


def train(task: Task, config: TrainConfig, seed: int) -> TrainResult:
    """Run the full fitted-Q loop on a task; deterministic given the seed."""
    rng_env = np.random.default_rng([seed, STREAM_ENV])
    rng_net = np.random.default_rng([seed, STREAM_NET])
    rng_eps = np.random.default_rng([seed, STREAM_EPSILON])
    rng_per = np.random.default_rng([seed, STREAM_REPLAY])
    rng_warm = np.random.default_rng([seed, STREAM_WARMUP])

    n_actions = task.n_actions
    local = Mlp.random(config.network_sizes(task.state_dim, n_actions),
                       int(rng_net.integers(2**31)))
    target = local.copy()
    opt = config.make_optimizer()
    buffer = ReplayBuffer(config.buffer_capacity, beta=config.per_beta,
                          eps_priority=config.per_eps, p_init=config.p_init,
                          state_dim=task.state_dim, n_actions=n_actions)

    env_seed = int(rng_env.integers(2**63))
    warmup(task, buffer, config.warmup_size, rng_warm, reset_seed=env_seed,
           forced_action=config.forced_action_index)

    episodes: list[EpisodeStats] = []
    epsilon = config.epsilon0
    state = task.reset(env_seed)
    episode_reward = 0.0
    episode_payment = 0.0
    episode_tds: list[float] = []
    iteration = 0

    while len(episodes) < config.episodes:
        if config.max_iterations is not None and iteration >= config.max_iterations:
            break
        iteration += 1
        for _ in range(config.steps_per_iteration):
            if config.forced_action_index is not None:
                action = config.forced_action_index
            else:
                qv = q_values(target, config.variant, state, n_actions)
                action = select_action(qv, epsilon, rng_eps)
            next_state, reward, done, info = task.step(action)
            buffer.add(Experience(state, action, reward, next_state, done))
            episode_reward += reward
            episode_payment += info.get("baseline_payment", 0.0)
            if done:
                mean_td = float(np.mean(episode_tds)) if episode_tds else 0.0
                episodes.append(EpisodeStats(len(episodes), episode_reward, epsilon,
                                             mean_td, episode_payment))
                episode_reward = 0.0
                episode_payment = 0.0
                episode_tds = []
                epsilon = max(config.epsilon_min, epsilon * (1.0 - config.epsilon_decay))
                if len(episodes) >= config.episodes:
                    break
                if config.resample_demand:
                    env_seed = int(rng_env.integers(2**63))
                state = task.reset(env_seed)
            else:
                state = next_state
        if len(buffer) >= config.batch_size:
            mean_abs_td = _one_training_pass(
                local, target, buffer, opt, config, n_actions, rng_per,
                context=f"iteration {iteration}, epsilon {epsilon:.4g}, gamma {config.gamma}")
            episode_tds.append(mean_abs_td)
            target = soft_update(target, local, config.tau)
    return TrainResult(episodes=episodes, local=local, target=target)


def train_market_agent(env: ReactiveMarketEnv, config: TrainConfig, forecaster,
                       seed: int) -> TrainResult:
    """Convenience wrapper: wrap the market env in a BiddingTask and train."""
    task = BiddingTask(env, forecaster, reward_scale=config.reward_scale)
    return train(task, config, seed)


def greedy_episode(task: Task, net: Mlp, variant: str, reset_seed: int) -> tuple[float, list[dict]]:
    """Play one episode with the greedy policy; returns (total reward, step infos)."""
    state = task.reset(reset_seed)
    total = 0.0
    rows = []
    done = False
    while not done:
        action = int(np.argmax(q_values(net, variant, state, task.n_actions)))
        state, reward, done, info = task.step(action)
        total += reward
        info = dict(info)
        info["action"] = action
        info["reward"] = reward
        rows.append(info)
    return total, rows
