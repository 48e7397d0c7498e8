"""
Behavior cloning baseline: Gaussian maximum likelihood on expert pairs.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from . import autodiff as ad
from .demos import DemoDataset
from .nets import GaussianPolicy
from .optim import Adam
from .ppo import NonFiniteLossError
from .rollout import RunningNormalizer

logger = logging.getLogger(__name__)

EpochCallback = Callable[[int, float, GaussianPolicy, RunningNormalizer], None]


@dataclass
class BcConfig:
    epochs: int = 200
    minibatch: int = 64
    lr: float = 1e-3

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError(f"bc epochs must be >= 0, got {self.epochs}")
        if self.minibatch < 1:
            raise ValueError(f"bc minibatch must be >= 1, got {self.minibatch}")


@dataclass
class BcResult:
    policy: GaussianPolicy
    normalizer: RunningNormalizer
    epoch_losses: List[float] = field(default_factory=list)


def nll_loss(policy: GaussianPolicy, states: np.ndarray, actions: np.ndarray) -> float:
    """Mean negative log-likelihood of ``actions`` under the policy."""
    return float(-np.mean(policy.log_prob(states, actions)))


class BcLearner:
    """Policy, demo-set normalizer and optimizer of one cloning run."""

    def __init__(self, demos: DemoDataset, hidden: Sequence[int] = (64, 64), seed: int = 0,
                 config: Optional[BcConfig] = None):
        if len(demos) == 0:
            raise ValueError("bc_train: demonstration set is empty")
        self.config = config or BcConfig()
        self.normalizer = RunningNormalizer.from_data(demos.obs)
        self.states = self.normalizer.normalize(demos.obs)
        self.actions = demos.actions
        self.policy = GaussianPolicy.create(demos.obs_dim, demos.act_dim, hidden, seed=seed)
        self.optimizer = Adam(self.policy.parameters(), lr=self.config.lr)
        self.rng = np.random.default_rng(seed)

    def epoch(self) -> float:
        """One shuffled pass of minibatch Adam; returns the full-set loss afterwards."""
        n = len(self.states)
        order = self.rng.permutation(n)
        for start in range(0, n, self.config.minibatch):
            idx = order[start:start + self.config.minibatch]
            tape = ad.Tape()
            weights = self.policy.bind(tape)
            log_prob = self.policy.log_prob_node(ad.constant(self.states[idx]), self.actions[idx], weights)
            loss = ad.neg(ad.mean(log_prob))
            if not np.isfinite(loss.item()):
                raise NonFiniteLossError("bc_train: non-finite likelihood")
            self.optimizer.step(ad.backward(tape, loss).arrays(weights))
            self.policy.clamp_log_std()
        return nll_loss(self.policy, self.states, self.actions)

    def epochs(self, count: int) -> Iterator[Tuple[int, float]]:
        for index in range(count):
            loss = self.epoch()
            logger.debug(f"BC epoch {index}: loss {loss:.5f}")
            yield index, loss


def bc_train(demos: DemoDataset, hidden: Sequence[int] = (64, 64), epochs: Optional[int] = None,
             seed: int = 0, config: Optional[BcConfig] = None,
             epoch_callback: Optional[EpochCallback] = None) -> BcResult:
    """
    Fit a Gaussian policy to the demonstrations by minibatch Adam.

    States are normalized with the exact statistics of the demo set.
    ``epochs`` overrides ``config.epochs``.

    Raises:
        ValueError: If the dataset is empty
        NonFiniteLossError: If the likelihood diverges
    """
    learner = BcLearner(demos, hidden, seed, config)
    count = learner.config.epochs if epochs is None else epochs
    losses = []
    for index, loss in learner.epochs(count):
        losses.append(loss)
        if epoch_callback is not None:
            epoch_callback(index, loss, learner.policy, learner.normalizer)
    return BcResult(learner.policy, learner.normalizer, losses)
