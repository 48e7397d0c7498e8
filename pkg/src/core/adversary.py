"""
Adversarial reward learning: Wasserstein critic with gradient penalty or
weight clipping, the GAIL cross-entropy discriminator, and the reward shapes
that turn a critic output into a per-step imitation reward.
"""

import logging
from dataclasses import dataclass, asdict
from enum import Enum
from typing import Dict, Optional, Union

import numpy as np

from . import autodiff as ad
from .nets import DEFAULT_CLIP_C, Discriminator, LipschitzMode
from .optim import Adam

logger = logging.getLogger(__name__)

PROB_CLAMP = 1e-8
EXP_ARG_MAX = 80.0


class AdversaryError(ValueError):
    """Raised for empty or undersized discriminator batches."""


class RewardShape(str, Enum):
    LINEAR = "linear"
    SIGMOID = "sigmoid"
    EXP = "exp"
    NEGEXP = "negexp"
    LOGSIG = "logsig"
    NLOG1MSIG = "nlog1msig"

    @classmethod
    def parse(cls, name: Union[str, "RewardShape"]) -> "RewardShape":
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower()
        if key == "airl":
            return cls.LINEAR
        try:
            return cls(key)
        except ValueError:
            choices = ", ".join([s.value for s in cls] + ["airl"])
            raise ValueError(f"unknown reward shape '{name}', expected one of: {choices}") from None


POSITIVE_SHAPES = (RewardShape.SIGMOID, RewardShape.EXP, RewardShape.NLOG1MSIG)
NEGATIVE_SHAPES = (RewardShape.NEGEXP, RewardShape.LOGSIG)


@dataclass
class AdversaryConfig:
    gp_lambda: float = 10.0
    lr: float = 3e-4
    steps: int = 5
    minibatch: int = 128
    lipschitz_mode: LipschitzMode = LipschitzMode.GRADIENT_PENALTY
    clip_c: float = DEFAULT_CLIP_C
    reward_shape: RewardShape = RewardShape.SIGMOID

    def __post_init__(self):
        self.lipschitz_mode = LipschitzMode(self.lipschitz_mode)
        self.reward_shape = RewardShape.parse(self.reward_shape)
        if self.gp_lambda < 0:
            raise ValueError(f"gp_lambda must be >= 0, got {self.gp_lambda}")
        if self.steps < 1:
            raise ValueError(f"disc steps must be >= 1, got {self.steps}")
        if self.minibatch < 1:
            raise ValueError(f"disc minibatch must be >= 1, got {self.minibatch}")


@dataclass
class DiscStats:
    wd_estimate: float = 0.0
    gp_value: float = 0.0
    disc_loss: float = 0.0

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def shape_reward(x, shape: Union[str, RewardShape]):
    """
    Map critic outputs to imitation rewards.

    linear x, sigmoid s(x), exp e^x, negexp -e^-x, logsig log s(x) and
    nlog1msig -log(1 - s(x)). The two log shapes are evaluated in the
    softplus form (log s(x) = -softplus(-x), -log(1 - s(x)) = softplus(x)),
    which has no singularity and keeps logsig(x) + nlog1msig(x) = x exact to
    rounding.
    """
    shape = RewardShape.parse(shape)
    x = np.asarray(x, dtype=np.float64)
    if shape is RewardShape.LINEAR:
        return x.copy()
    if shape is RewardShape.SIGMOID:
        return np.exp(-_softplus(-x))
    if shape is RewardShape.EXP:
        return np.exp(np.minimum(x, EXP_ARG_MAX))
    if shape is RewardShape.NEGEXP:
        return -np.exp(np.minimum(-x, EXP_ARG_MAX))
    if shape is RewardShape.LOGSIG:
        return -_softplus(-x)
    return _softplus(x)


def wasserstein_loss(d_expert, d_policy) -> ad.Tensor:
    """mean(D(expert)) - mean(D(policy)); tape tensors stay differentiable."""
    d_expert, d_policy = ad.as_tensor(d_expert), ad.as_tensor(d_policy)
    if d_expert.data.size == 0 or d_policy.data.size == 0:
        raise AdversaryError("wasserstein_loss: both batches must be non-empty")
    return ad.sub(ad.mean(d_expert), ad.mean(d_policy))


def interpolate(policy_batch: np.ndarray, expert_batch: np.ndarray, rng: np.random.Generator,
                eps: Optional[np.ndarray] = None) -> np.ndarray:
    """eps * policy + (1 - eps) * expert with one eps ~ U[0, 1] per sample."""
    policy_batch = np.asarray(policy_batch, dtype=np.float64)
    expert_batch = np.asarray(expert_batch, dtype=np.float64)
    if policy_batch.shape != expert_batch.shape:
        raise AdversaryError(
            f"interpolate: batch shapes differ, policy {policy_batch.shape} vs expert {expert_batch.shape}")
    if eps is None:
        eps = rng.uniform(0.0, 1.0, size=(len(policy_batch), 1))
    eps = np.asarray(eps, dtype=np.float64).reshape(-1, 1)
    return eps * policy_batch + (1.0 - eps) * expert_batch


def gradient_penalty(disc: Discriminator, interp_batch: np.ndarray, tape: Optional[ad.Tape] = None,
                     weights=None) -> ad.Tensor:
    """
    mean over samples of (||grad_z D(z)||_2 - 1)^2 at the interpolated points.

    When ``tape`` and ``weights`` are given the penalty is recorded on that
    tape and is differentiable with respect to the bound weights.
    """
    interp_batch = np.atleast_2d(np.asarray(interp_batch, dtype=np.float64))
    if interp_batch.shape[0] == 0:
        raise AdversaryError("gradient_penalty: empty batch")
    if tape is None:
        tape = ad.Tape()
        weights = disc.bind(tape)
    z = tape.variable(interp_batch)
    scores = disc.forward(z, weights)
    grad_z = ad.input_gradient_as_node(tape, ad.sum_(scores), z)
    norms = ad.l2norm_rows(grad_z)
    return ad.mean(ad.square(ad.sub(norms, 1.0)))


def _sample_batches(policy_pairs: np.ndarray, expert_pairs: np.ndarray, m: int,
                    rng: np.random.Generator):
    policy_idx = rng.choice(len(policy_pairs), size=m, replace=False)
    expert_idx = rng.integers(0, len(expert_pairs), size=m)
    return policy_pairs[policy_idx], expert_pairs[expert_idx]


def _check_sizes(name: str, policy_pairs: np.ndarray, expert_pairs: np.ndarray, m: int) -> None:
    if len(policy_pairs) < m or len(expert_pairs) < m:
        raise AdversaryError(
            f"{name}: need at least {m} policy and expert pairs, "
            f"have {len(policy_pairs)} and {len(expert_pairs)}")


def make_optimizer(disc: Discriminator, config: AdversaryConfig) -> Adam:
    return Adam(disc.parameters(), lr=config.lr)


def disc_update(disc: Discriminator, policy_pairs: np.ndarray, expert_pairs: np.ndarray,
                config: AdversaryConfig, optimizer: Optional[Adam] = None,
                rng: Optional[np.random.Generator] = None) -> DiscStats:
    """
    ``config.steps`` Adam steps maximizing L_wd - lambda * L_gp.

    Args:
        disc: Critic updated in place
        policy_pairs: Normalized (state, action) rows from the policy buffer
        expert_pairs: Normalized (state, action) rows from the demonstrations
        config: Adversary hyperparameters
        optimizer: Adam over the critic parameters (created if None)
        rng: Sampling generator

    Returns:
        Averages of the W-distance estimate, penalty and minimized loss

    Raises:
        AdversaryError: If either source has fewer than ``config.minibatch`` pairs
    """
    m = config.minibatch
    _check_sizes("disc_update", policy_pairs, expert_pairs, m)
    optimizer = optimizer or make_optimizer(disc, config)
    rng = rng or np.random.default_rng(0)
    clipping = disc.lipschitz_mode is LipschitzMode.WEIGHT_CLIPPING

    wd_total = gp_total = loss_total = 0.0
    for _ in range(config.steps):
        policy_batch, expert_batch = _sample_batches(policy_pairs, expert_pairs, m, rng)
        tape = ad.Tape()
        weights = disc.bind(tape)
        d_expert = disc.forward(ad.constant(expert_batch), weights)
        d_policy = disc.forward(ad.constant(policy_batch), weights)
        wd = wasserstein_loss(d_expert, d_policy)
        loss = ad.neg(wd)
        gp_value = 0.0
        if not clipping:
            interp = interpolate(policy_batch, expert_batch, rng)
            gp = gradient_penalty(disc, interp, tape, weights)
            loss = ad.add(loss, ad.scale(gp, config.gp_lambda))
            gp_value = gp.item()

        optimizer.step(ad.backward(tape, loss).arrays(weights))
        if clipping:
            disc.clip_weights()

        wd_total += wd.item()
        gp_total += gp_value
        loss_total += loss.item()

    steps = config.steps
    return DiscStats(wd_total / steps, gp_total / steps, loss_total / steps)


def _log_clamped_sigmoid(logits: ad.Tensor) -> ad.Tensor:
    return ad.log(ad.clamp(ad.sigmoid(logits), PROB_CLAMP, 1.0 - PROB_CLAMP))


def _log_one_minus_clamped_sigmoid(logits: ad.Tensor) -> ad.Tensor:
    return ad.log(ad.sub(1.0, ad.clamp(ad.sigmoid(logits), PROB_CLAMP, 1.0 - PROB_CLAMP)))


def gail_objective(policy_logits, expert_logits) -> ad.Tensor:
    """E_policy[log D] + E_expert[log(1 - D)] with D = sigmoid(logit)."""
    policy_logits, expert_logits = ad.as_tensor(policy_logits), ad.as_tensor(expert_logits)
    return ad.add(ad.mean(_log_clamped_sigmoid(policy_logits)),
                  ad.mean(_log_one_minus_clamped_sigmoid(expert_logits)))


def gail_reward(logits) -> np.ndarray:
    """-log(clamp(sigmoid(x))): large where D judges the pair expert-like."""
    d = np.clip(0.5 * (np.tanh(0.5 * np.asarray(logits, dtype=np.float64)) + 1.0),
                PROB_CLAMP, 1.0 - PROB_CLAMP)
    return -np.log(d)


def gail_disc_update(disc: Discriminator, policy_pairs: np.ndarray, expert_pairs: np.ndarray,
                     config: AdversaryConfig, optimizer: Optional[Adam] = None,
                     rng: Optional[np.random.Generator] = None) -> DiscStats:
    """
    ``config.steps`` Adam steps maximizing the GAIL cross-entropy objective
    (D -> 1 on policy pairs, D -> 0 on expert pairs).

    ``wd_estimate`` reports mean logit(expert) - mean logit(policy) for
    comparability with the Wasserstein critic; ``gp_value`` is always 0.
    """
    m = config.minibatch
    _check_sizes("gail_disc_update", policy_pairs, expert_pairs, m)
    optimizer = optimizer or make_optimizer(disc, config)
    rng = rng or np.random.default_rng(0)

    wd_total = loss_total = 0.0
    for _ in range(config.steps):
        policy_batch, expert_batch = _sample_batches(policy_pairs, expert_pairs, m, rng)
        tape = ad.Tape()
        weights = disc.bind(tape)
        policy_logits = disc.forward(ad.constant(policy_batch), weights)
        expert_logits = disc.forward(ad.constant(expert_batch), weights)
        loss = ad.neg(gail_objective(policy_logits, expert_logits))
        optimizer.step(ad.backward(tape, loss).arrays(weights))

        wd_total += float(expert_logits.data.mean() - policy_logits.data.mean())
        loss_total += loss.item()

    steps = config.steps
    return DiscStats(wd_total / steps, 0.0, loss_total / steps)


def label_rewards(disc: Discriminator, pairs: np.ndarray, shape: Union[str, RewardShape, None],
                  gail: bool = False) -> np.ndarray:
    """Rewards from a frozen discriminator (no gradient flows into it)."""
    scores = disc.score(pairs)
    if gail:
        return gail_reward(scores)
    return shape_reward(scores, shape)
