"""
Deterministic toy continuous-control environments.

Two tasks with analytic dynamics and a known true reward:
    pointmass  2-D point with first-order velocity lag, goal (0.5, 0.5)
    pendulum   torque-limited inverted pendulum, upright at theta = 0
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple, Type

import numpy as np

logger = logging.getLogger(__name__)

Actor = Callable[[np.ndarray], np.ndarray]


class EpisodeFinishedError(RuntimeError):
    """Raised when step() is called after the episode has ended."""


class UnknownEnvironmentError(KeyError):
    """Raised for an environment id that is not registered."""


@dataclass(frozen=True)
class EnvSpec:
    obs_dim: int
    act_dim: int
    act_low: Tuple[float, ...]
    act_high: Tuple[float, ...]
    horizon: int

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if len(self.act_low) != self.act_dim or len(self.act_high) != self.act_dim:
            raise ValueError("action bounds must have act_dim entries")
        if any(lo >= hi for lo, hi in zip(self.act_low, self.act_high)):
            raise ValueError(f"act_low must be < act_high, got {self.act_low} / {self.act_high}")


class ToyEnv:
    """Common episode bookkeeping: seeding, step counter, action clamping."""

    env_id = ""

    def __init__(self, spec: EnvSpec):
        self.spec = spec
        self.steps = 0
        self.done = True
        self.rng = np.random.default_rng(0)

    def reset(self, seed: int) -> np.ndarray:
        self.rng = np.random.default_rng(seed)
        self.steps = 0
        self.done = False
        self._reset_state()
        return self.observation()

    def step(self, action: np.ndarray) -> Tuple[np.ndarray, float, bool]:
        """
        Advance one step.

        Returns:
            Tuple of (observation, true reward, done)

        Raises:
            EpisodeFinishedError: If the episode already ended
        """
        if self.done:
            raise EpisodeFinishedError(
                f"{self.env_id}: step() called after the episode ended at step {self.steps}; call reset()")
        action = self.clip_action(action)
        reward = self._advance(action)
        self.steps += 1
        self.done = self.steps >= self.spec.horizon
        return self.observation(), reward, self.done

    def clip_action(self, action: np.ndarray) -> np.ndarray:
        action = np.asarray(action, dtype=np.float64).reshape(self.spec.act_dim)
        return np.clip(action, self.spec.act_low, self.spec.act_high)

    def observation(self) -> np.ndarray:
        raise NotImplementedError

    def _reset_state(self) -> None:
        raise NotImplementedError

    def _advance(self, action: np.ndarray) -> float:
        raise NotImplementedError


class PointMassEnv(ToyEnv):
    env_id = "pointmass"
    GOAL = np.array([0.5, 0.5])
    VELOCITY_DECAY = 0.95
    ACTION_GAIN = 0.05
    DT = 0.05

    def __init__(self, horizon: int = 200):
        super().__init__(EnvSpec(4, 2, (-1.0, -1.0), (1.0, 1.0), horizon))
        self.position = np.zeros(2)
        self.velocity = np.zeros(2)

    def set_state(self, position: np.ndarray, velocity: np.ndarray) -> np.ndarray:
        self.position = np.array(position, dtype=np.float64)
        self.velocity = np.array(velocity, dtype=np.float64)
        return self.observation()

    def observation(self) -> np.ndarray:
        return np.concatenate([self.position, self.velocity])

    def _reset_state(self) -> None:
        self.position = self.rng.uniform(-0.1, 0.1, size=2)
        self.velocity = np.zeros(2)

    def _advance(self, action: np.ndarray) -> float:
        self.velocity = self.VELOCITY_DECAY * self.velocity + self.ACTION_GAIN * action
        self.position = self.position + self.DT * self.velocity
        error = self.position - self.GOAL
        return -float(error @ error) - 0.01 * float(action @ action)


def wrap_angle(theta: float) -> float:
    return (theta + math.pi) % (2.0 * math.pi) - math.pi


class PendulumEnv(ToyEnv):
    env_id = "pendulum"
    GRAVITY = 10.0
    MASS = 1.0
    LENGTH = 1.0
    DT = 0.05
    MAX_TORQUE = 2.0

    def __init__(self, horizon: int = 200):
        super().__init__(EnvSpec(3, 1, (-self.MAX_TORQUE,), (self.MAX_TORQUE,), horizon))
        self.theta = 0.0
        self.theta_dot = 0.0

    def set_state(self, theta: float, theta_dot: float) -> np.ndarray:
        self.theta = float(theta)
        self.theta_dot = float(theta_dot)
        return self.observation()

    def observation(self) -> np.ndarray:
        return np.array([math.cos(self.theta), math.sin(self.theta), self.theta_dot])

    def _reset_state(self) -> None:
        self.theta = float(self.rng.uniform(-math.pi, math.pi))
        self.theta_dot = float(self.rng.uniform(-1.0, 1.0))

    def _advance(self, action: np.ndarray) -> float:
        u = float(action[0])
        angle = wrap_angle(self.theta)
        reward = -(angle ** 2 + 0.1 * self.theta_dot ** 2 + 0.001 * u ** 2)
        g, m, l = self.GRAVITY, self.MASS, self.LENGTH
        theta_ddot = 3.0 * g / (2.0 * l) * math.sin(self.theta) + 3.0 / (m * l ** 2) * u
        # velocity first, then position with the new velocity (same scheme as pointmass)
        self.theta_dot = self.theta_dot + theta_ddot * self.DT
        self.theta = self.theta + self.theta_dot * self.DT
        return reward


ENVIRONMENTS: Dict[str, Type[ToyEnv]] = {
    PointMassEnv.env_id: PointMassEnv,
    PendulumEnv.env_id: PendulumEnv,
}


def make_env(env_id: str, horizon: Optional[int] = None) -> ToyEnv:
    try:
        env_cls = ENVIRONMENTS[env_id]
    except KeyError:
        raise UnknownEnvironmentError(
            f"unknown environment '{env_id}', expected one of {sorted(ENVIRONMENTS)}") from None
    return env_cls() if horizon is None else env_cls(horizon=horizon)


def run_episode(env: ToyEnv, actor: Actor, seed: int) -> Tuple[float, int]:
    """Run one full episode; returns (undiscounted true return, length)."""
    obs = env.reset(seed)
    total = 0.0
    done = False
    while not done:
        obs, reward, done = env.step(actor(obs))
        total += reward
    return total, env.steps


def true_return(env: ToyEnv, actor: Actor, episodes: int, seed: int) -> float:
    """
    Mean undiscounted true return over complete episodes.

    Episode ``i`` starts from ``reset(seed + i)``; pass a deterministic actor
    (mean action) for noise-free evaluation.
    """
    if episodes < 1:
        raise ValueError(f"episodes must be >= 1, got {episodes}")
    returns = [run_episode(env, actor, seed + i)[0] for i in range(episodes)]
    return float(np.mean(returns))
