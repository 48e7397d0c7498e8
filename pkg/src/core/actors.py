"""
Actors map a raw environment observation to an action.

A policy checkpoint bundles everything a ``PolicyActor`` needs:
mean-net layers (W1, b1, ...), log_std, then the observation normalizer as
mean (1 x d), variance (1 x d) and count (1 x 1).
"""

import logging
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from ..utils.checkpoint import CheckpointFormatError, read_tensors, write_tensors
from .envs import EnvSpec, PointMassEnv
from .nets import POLICY_OUTPUT_GAIN, GaussianPolicy, Network, Params, spec_from_params
from .rollout import RunningNormalizer

logger = logging.getLogger(__name__)

NORMALIZER_TENSORS = 3


class PolicyActor:
    """Normalizes the observation, then takes the policy's mean or a sample."""

    def __init__(self, policy: GaussianPolicy, normalizer: RunningNormalizer,
                 deterministic: bool = True, rng: Optional[np.random.Generator] = None):
        self.policy = policy
        self.normalizer = normalizer
        self.deterministic = deterministic
        self.rng = rng or np.random.default_rng(0)

    def __call__(self, obs: np.ndarray) -> np.ndarray:
        state = self.normalizer.normalize(obs)
        if self.deterministic:
            return self.policy.forward(state)[0]
        return self.policy.sample(state, self.rng)


class RandomActor:
    """Uniform actions over the action box."""

    def __init__(self, spec: EnvSpec, seed: int = 0):
        self.low = np.asarray(spec.act_low, dtype=np.float64)
        self.high = np.asarray(spec.act_high, dtype=np.float64)
        self.rng = np.random.default_rng(seed)

    def __call__(self, obs: np.ndarray) -> np.ndarray:
        return self.rng.uniform(self.low, self.high)


def scripted_expert_pointmass(obs: np.ndarray) -> np.ndarray:
    """PD controller toward the goal: clamp(4 (g - p) - v, -1, 1)."""
    obs = np.asarray(obs, dtype=np.float64)
    position, velocity = obs[:2], obs[2:4]
    return np.clip(4.0 * (PointMassEnv.GOAL - position) - 1.0 * velocity, -1.0, 1.0)


class ScriptedPointMassExpert:
    def __call__(self, obs: np.ndarray) -> np.ndarray:
        return scripted_expert_pointmass(obs)


def save_policy_checkpoint(path: Union[str, Path], policy: GaussianPolicy,
                           normalizer: RunningNormalizer) -> Path:
    path = Path(path)
    tensors = [
        *policy.mean_net.params,
        policy.log_std,
        normalizer.mean.reshape(1, -1),
        normalizer.var.reshape(1, -1),
        np.array([[normalizer.count]], dtype=np.float64),
    ]
    write_tensors(path, tensors)
    logger.info(f"Saved policy checkpoint to {path}")
    return path


def load_policy_checkpoint(path: Union[str, Path]) -> Tuple[GaussianPolicy, RunningNormalizer]:
    """
    Load a policy and its frozen observation normalizer.

    Raises:
        CheckpointFormatError: If the file is malformed or does not hold a policy
    """
    tensors = read_tensors(path)
    n_layers = len(tensors) - 1 - NORMALIZER_TENSORS
    if n_layers < 4 or n_layers % 2:
        raise CheckpointFormatError(path, 0, f"expected a policy checkpoint, found {len(tensors)} tensors")
    layers = [np.array(t) for t in tensors[:n_layers]]
    log_std, mean, var, count = tensors[n_layers:]

    spec = spec_from_params(layers, output_gain=POLICY_OUTPUT_GAIN)
    if log_std.shape != (1, spec.output_dim) or mean.shape != (1, spec.input_dim) \
            or var.shape != (1, spec.input_dim) or count.shape != (1, 1):
        raise CheckpointFormatError(path, 0, "policy checkpoint tensor shapes are inconsistent")

    policy = GaussianPolicy(Network(spec, Params(layers)), np.array(log_std))
    normalizer = RunningNormalizer(spec.input_dim, count=float(count[0, 0]))
    normalizer.mean = mean[0].copy()
    normalizer.var = var[0].copy()
    normalizer.frozen = True
    return policy, normalizer


def load_actor(path: Union[str, Path], deterministic: bool = True) -> PolicyActor:
    policy, normalizer = load_policy_checkpoint(path)
    return PolicyActor(policy, normalizer, deterministic=deterministic)
