"""
Policy rollouts into a transition buffer, observation normalization and
generalized advantage estimation.
"""

import logging
from dataclasses import dataclass, field
from typing import Iterator, List, Optional

import numpy as np

from .envs import ToyEnv
from .nets import GaussianPolicy, ValueNet

logger = logging.getLogger(__name__)

NORM_EPS = 1e-8
NORM_CLIP = 10.0
ADV_STD_FLOOR = 1e-8


class RolloutError(ValueError):
    """Raised when a buffer is consumed before it is complete."""


@dataclass
class RolloutConfig:
    steps: int = 2048
    gamma: float = 0.99
    gae_lambda: float = 0.95

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"rollout steps must be >= 1, got {self.steps}")
        if not 0.0 <= self.gamma <= 1.0 or not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError("gamma and gae_lambda must lie in [0, 1]")


class RunningNormalizer:
    """Per-dimension running mean/variance (parallel-moments update)."""

    def __init__(self, dim: int, count: float = 1e-4):
        self.mean = np.zeros(dim)
        self.var = np.ones(dim)
        self.count = count
        self.frozen = False

    def update(self, batch: np.ndarray) -> None:
        if self.frozen:
            return
        batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
        batch_mean = batch.mean(axis=0)
        batch_var = batch.var(axis=0)
        batch_count = batch.shape[0]

        delta = batch_mean - self.mean
        total = self.count + batch_count
        new_mean = self.mean + delta * batch_count / total
        m2 = self.var * self.count + batch_var * batch_count + delta ** 2 * self.count * batch_count / total
        self.mean = new_mean
        self.var = m2 / total
        self.count = total

    def normalize(self, x: np.ndarray) -> np.ndarray:
        z = (np.asarray(x, dtype=np.float64) - self.mean) / np.sqrt(self.var + NORM_EPS)
        return np.clip(z, -NORM_CLIP, NORM_CLIP)

    def copy(self) -> "RunningNormalizer":
        clone = RunningNormalizer(len(self.mean), self.count)
        clone.mean = self.mean.copy()
        clone.var = self.var.copy()
        clone.frozen = self.frozen
        return clone

    @classmethod
    def from_data(cls, data: np.ndarray) -> "RunningNormalizer":
        """A frozen normalizer holding the exact statistics of ``data``."""
        data = np.atleast_2d(np.asarray(data, dtype=np.float64))
        normalizer = cls(data.shape[1], count=float(data.shape[0]))
        normalizer.mean = data.mean(axis=0)
        normalizer.var = data.var(axis=0)
        normalizer.frozen = True
        return normalizer


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    raw_state: np.ndarray
    action: np.ndarray
    env_action: np.ndarray
    imitation_reward: float
    true_reward: float
    done: bool
    value: float
    log_prob_old: float
    advantage: float
    return_target: float


@dataclass
class TrajectoryBuffer:
    """
    Column-wise storage of one rollout phase.

    ``rewards``, ``advantages`` and ``return_targets`` start as NaN and are
    filled by reward labeling and ``compute_gae``. ``actions`` are the sampled
    actions (for log-probabilities); ``env_actions`` are the same actions
    clamped to the action box, as the environment applied them.
    """

    states: np.ndarray
    raw_states: np.ndarray
    actions: np.ndarray
    env_actions: np.ndarray
    true_rewards: np.ndarray
    dones: np.ndarray
    values: np.ndarray
    log_probs_old: np.ndarray
    episode_starts: List[int] = field(default_factory=lambda: [0])
    next_state: Optional[np.ndarray] = None
    rewards: np.ndarray = None
    advantages: np.ndarray = None
    return_targets: np.ndarray = None

    def __post_init__(self):
        n = len(self.states)
        if self.rewards is None:
            self.rewards = np.full(n, np.nan)
        if self.advantages is None:
            self.advantages = np.full(n, np.nan)
        if self.return_targets is None:
            self.return_targets = np.full(n, np.nan)

    def __len__(self) -> int:
        return len(self.states)

    def transition(self, index: int) -> Transition:
        return Transition(
            state=self.states[index],
            raw_state=self.raw_states[index],
            action=self.actions[index],
            env_action=self.env_actions[index],
            imitation_reward=float(self.rewards[index]),
            true_reward=float(self.true_rewards[index]),
            done=bool(self.dones[index]),
            value=float(self.values[index]),
            log_prob_old=float(self.log_probs_old[index]),
            advantage=float(self.advantages[index]),
            return_target=float(self.return_targets[index]),
        )

    def transitions(self) -> Iterator[Transition]:
        for index in range(len(self)):
            yield self.transition(index)

    def episode_segments(self) -> List[slice]:
        bounds = [*self.episode_starts, len(self)]
        return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]

    def fill_rewards(self, rewards: np.ndarray) -> None:
        rewards = np.asarray(rewards, dtype=np.float64).reshape(-1)
        if rewards.shape != (len(self),):
            raise RolloutError(f"expected {len(self)} rewards, got {rewards.shape}")
        self.rewards = rewards.copy()

    def state_action_pairs(self, normalizer: RunningNormalizer) -> np.ndarray:
        """Raw states re-normalized with ``normalizer`` next to the applied actions."""
        return np.concatenate([normalizer.normalize(self.raw_states), self.env_actions], axis=1)


class RolloutCollector:
    """
    Steps one environment with the current policy, carrying unfinished
    episodes across successive ``collect`` calls.
    """

    def __init__(self, env: ToyEnv, policy: GaussianPolicy, value_net: ValueNet,
                 normalizer: RunningNormalizer, seed: int):
        self.env = env
        self.policy = policy
        self.value_net = value_net
        self.normalizer = normalizer
        self.rng = np.random.default_rng(seed)
        self._episode_seed = int(seed) * 100_003
        self._obs: Optional[np.ndarray] = None
        self.total_steps = 0
        self.episodes_started = 0

    def _reset(self) -> np.ndarray:
        self.episodes_started += 1
        self._episode_seed += 1
        return self.env.reset(self._episode_seed)

    def collect(self, steps: int) -> TrajectoryBuffer:
        if steps < 1:
            raise ValueError(f"collect: steps must be >= 1, got {steps}")
        obs_dim, act_dim = self.env.spec.obs_dim, self.env.spec.act_dim
        states = np.zeros((steps, obs_dim))
        raw_states = np.zeros((steps, obs_dim))
        actions = np.zeros((steps, act_dim))
        env_actions = np.zeros((steps, act_dim))
        true_rewards = np.zeros(steps)
        dones = np.zeros(steps, dtype=bool)
        values = np.zeros(steps)
        log_probs = np.zeros(steps)
        starts = [0]

        for t in range(steps):
            if self._obs is None:
                self._obs = self._reset()
                if t > 0:
                    starts.append(t)
            raw = self._obs
            self.normalizer.update(raw)
            state = self.normalizer.normalize(raw)
            action = self.policy.sample(state, self.rng)

            obs, reward, done = self.env.step(action)

            states[t] = state
            raw_states[t] = raw
            actions[t] = action
            env_actions[t] = self.env.clip_action(action)
            true_rewards[t] = reward
            dones[t] = done
            values[t] = self.value_net.predict(state)
            log_probs[t] = self.policy.log_prob(state, action)
            self._obs = None if done else obs

        self.total_steps += steps
        next_state = None if self._obs is None else self.normalizer.normalize(self._obs)
        return TrajectoryBuffer(
            states=states, raw_states=raw_states, actions=actions, env_actions=env_actions,
            true_rewards=true_rewards, dones=dones, values=values, log_probs_old=log_probs,
            episode_starts=starts, next_state=next_state,
        )


def collect(env: ToyEnv, policy: GaussianPolicy, value_net: ValueNet,
            normalizer: RunningNormalizer, steps: int, seed: int) -> TrajectoryBuffer:
    """Collect ``steps`` transitions starting from a fresh episode."""
    return RolloutCollector(env, policy, value_net, normalizer, seed).collect(steps)


def discounted_advantages(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray,
                          bootstrap_value: float, gamma: float, lam: float) -> np.ndarray:
    """Raw (unstandardized) GAE over one buffer."""
    n = len(rewards)
    advantages = np.zeros(n)
    next_value = bootstrap_value
    next_advantage = 0.0
    for t in reversed(range(n)):
        nonterminal = 0.0 if dones[t] else 1.0
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        next_advantage = delta + gamma * lam * nonterminal * next_advantage
        advantages[t] = next_advantage
        next_value = values[t]
    return advantages


def standardize(x: np.ndarray) -> np.ndarray:
    return (x - x.mean()) / max(float(x.std()), ADV_STD_FLOOR)


def compute_gae(buffer: TrajectoryBuffer, value_net: ValueNet, gamma: float, lam: float,
                normalize: bool = True) -> TrajectoryBuffer:
    """
    Fill advantages and return targets in place.

    Return targets use the raw advantages; the stored advantages are then
    standardized across the buffer unless ``normalize`` is False.

    Raises:
        RolloutError: If rewards have not been filled
    """
    if np.isnan(buffer.rewards).any():
        raise RolloutError("compute_gae: rewards not yet filled (label the buffer first)")
    bootstrap = 0.0
    if len(buffer) and not buffer.dones[-1]:
        if buffer.next_state is None:
            raise RolloutError("compute_gae: unfinished final episode has no next state to bootstrap")
        bootstrap = float(value_net.predict(buffer.next_state))
    raw = discounted_advantages(buffer.rewards, buffer.values, buffer.dones, bootstrap, gamma, lam)
    buffer.return_targets = raw + buffer.values
    buffer.advantages = standardize(raw) if normalize else raw
    return buffer
