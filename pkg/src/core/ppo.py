"""
Proximal policy optimization with the clipped surrogate objective, a value
loss and an entropy bonus.
"""

import logging
from dataclasses import dataclass, asdict
from typing import Dict, List, Optional

import numpy as np

from . import autodiff as ad
from .nets import GaussianPolicy, ValueNet
from .optim import Adam, clip_grad_norm
from .rollout import TrajectoryBuffer

logger = logging.getLogger(__name__)


class NonFiniteLossError(ArithmeticError):
    """Raised when an update produces a non-finite loss; parameters are rolled back."""


@dataclass
class PpoConfig:
    clip_eps: float = 0.2
    epochs: int = 10
    minibatch: int = 64
    lr: float = 3e-4
    value_coef: float = 0.5
    entropy_coef: float = 1e-3
    max_grad_norm: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.clip_eps < 1.0:
            raise ValueError(f"clip_eps must lie in (0, 1), got {self.clip_eps}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.minibatch < 1:
            raise ValueError(f"minibatch must be >= 1, got {self.minibatch}")


@dataclass
class UpdateStats:
    policy_loss: float = 0.0
    value_loss: float = 0.0
    entropy: float = 0.0
    approx_kl: float = 0.0
    clip_fraction: float = 0.0

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)


def clipped_surrogate(ratio, advantage, clip_eps: float):
    """min(r * A, clip(r, 1 - eps, 1 + eps) * A), elementwise."""
    ratio = np.asarray(ratio, dtype=np.float64)
    advantage = np.asarray(advantage, dtype=np.float64)
    return np.minimum(ratio * advantage, np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * advantage)


def clipped_surrogate_node(ratio: ad.Tensor, advantage: np.ndarray, clip_eps: float) -> ad.Tensor:
    unclipped = ad.mul(ratio, advantage)
    clipped = ad.mul(ad.clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps), advantage)
    return ad.minimum(unclipped, clipped)


def make_optimizer(policy: GaussianPolicy, value_net: ValueNet, config: PpoConfig) -> Adam:
    return Adam([*policy.parameters(), *value_net.parameters()], lr=config.lr)


def ppo_update(policy: GaussianPolicy, value_net: ValueNet, buffer: TrajectoryBuffer,
               config: PpoConfig, optimizer: Optional[Adam] = None,
               rng: Optional[np.random.Generator] = None) -> UpdateStats:
    """
    Run ``config.epochs`` passes of shuffled minibatch updates over the buffer.

    Ratios are taken against ``buffer.log_probs_old`` (the pre-update policy).

    Args:
        policy: Policy updated in place
        value_net: Value network updated in place
        buffer: Buffer with standardized advantages and return targets
        config: PPO hyperparameters
        optimizer: Adam over policy then value parameters (created if None)
        rng: Minibatch shuffling generator

    Returns:
        Loss and diagnostic averages over all minibatches

    Raises:
        NonFiniteLossError: On a non-finite loss; parameters are restored
    """
    if np.isnan(buffer.advantages).any() or np.isnan(buffer.return_targets).any():
        raise ValueError("ppo_update: advantages/returns not computed")
    optimizer = optimizer or make_optimizer(policy, value_net, config)
    rng = rng or np.random.default_rng(0)
    snapshot = optimizer.snapshot()

    totals: Dict[str, List[float]] = {key: [] for key in UpdateStats().as_dict()}
    n = len(buffer)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.minibatch):
            idx = order[start:start + config.minibatch]
            tape = ad.Tape()
            policy_weights = policy.bind(tape)
            value_weights = value_net.bind(tape)
            states = ad.constant(buffer.states[idx])

            log_prob = policy.log_prob_node(states, buffer.actions[idx], policy_weights)
            log_ratio = ad.sub(log_prob, buffer.log_probs_old[idx][:, None])
            ratio = ad.exp(log_ratio)
            advantages = buffer.advantages[idx][:, None]
            surrogate = clipped_surrogate_node(ratio, advantages, config.clip_eps)
            policy_loss = ad.neg(ad.mean(surrogate))

            values = value_net.forward(states, value_weights)
            value_loss = ad.mean(ad.square(ad.sub(values, buffer.return_targets[idx][:, None])))
            entropy = policy.entropy_node(policy_weights)

            loss = ad.add(policy_loss, ad.scale(value_loss, config.value_coef))
            loss = ad.sub(loss, ad.scale(entropy, config.entropy_coef))

            if not np.isfinite(loss.item()):
                optimizer.restore(snapshot)
                raise NonFiniteLossError(
                    f"ppo_update: non-finite loss at epoch {epoch}, minibatch starting {start}; "
                    "parameters rolled back")

            grads = ad.backward(tape, loss).arrays([*policy_weights, *value_weights])
            grads, _ = clip_grad_norm(grads, config.max_grad_norm)
            optimizer.step(grads)
            policy.clamp_log_std()

            r = ratio.data
            totals["policy_loss"].append(policy_loss.item())
            totals["value_loss"].append(value_loss.item())
            totals["entropy"].append(entropy.item())
            totals["approx_kl"].append(float(np.mean(-log_ratio.data)))
            totals["clip_fraction"].append(float(np.mean(np.abs(r - 1.0) > config.clip_eps)))

    return UpdateStats(**{key: float(np.mean(vals)) for key, vals in totals.items()})
