"""
Parameterized networks: diagonal-Gaussian policy, state-value function and
state-action discriminator, all tanh MLPs over float64 parameters.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, List, Sequence, Tuple

import numpy as np

from . import autodiff as ad

logger = logging.getLogger(__name__)

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
HALF_LOG_2PIE = 0.5 * math.log(2.0 * math.pi * math.e)

HIDDEN_GAIN = math.sqrt(2.0)
POLICY_OUTPUT_GAIN = 0.01
DEFAULT_CLIP_C = 0.01


class NetworkError(ValueError):
    """Raised for invalid network specs or mismatched input dimensions."""


class Activation(str, Enum):
    TANH = "tanh"


class LipschitzMode(str, Enum):
    GRADIENT_PENALTY = "gp"
    WEIGHT_CLIPPING = "clip"


@dataclass(frozen=True)
class NetworkSpec:
    input_dim: int
    hidden: Tuple[int, ...]
    output_dim: int
    activation: Activation = Activation.TANH
    output_gain: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if not self.hidden:
            raise NetworkError("NetworkSpec: hidden layer list must be non-empty")
        dims = (self.input_dim, *self.hidden, self.output_dim)
        if any(d < 1 for d in dims):
            raise NetworkError(f"NetworkSpec: all dimensions must be >= 1, got {dims}")

    @property
    def layer_dims(self) -> List[Tuple[int, int]]:
        dims = (self.input_dim, *self.hidden, self.output_dim)
        return list(zip(dims[:-1], dims[1:]))


@dataclass
class Params:
    """Ordered weight/bias arrays: W1, b1, W2, b2, ... (W is in x out, b is 1 x out)."""

    tensors: List[np.ndarray] = field(default_factory=list)

    def __iter__(self) -> Iterator[np.ndarray]:
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    def __getitem__(self, index: int) -> np.ndarray:
        return self.tensors[index]

    @property
    def size(self) -> int:
        return sum(t.size for t in self.tensors)

    def copy(self) -> "Params":
        return Params([t.copy() for t in self.tensors])

    def flatten(self) -> np.ndarray:
        return np.concatenate([t.ravel() for t in self.tensors])

    def assign_flat(self, flat: np.ndarray) -> None:
        offset = 0
        for t in self.tensors:
            t[...] = flat[offset:offset + t.size].reshape(t.shape)
            offset += t.size


def orthogonal(shape: Tuple[int, int], gain: float, rng: np.random.Generator) -> np.ndarray:
    rows, cols = shape
    flat = rng.standard_normal((rows, cols))
    if rows < cols:
        flat = flat.T
    q, r = np.linalg.qr(flat)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q


def init_params(spec: NetworkSpec, seed: int) -> Params:
    """
    Orthogonal weights (gain sqrt(2) for hidden layers, ``spec.output_gain``
    for the output layer) and zero biases; deterministic given the seed.
    """
    rng = np.random.default_rng(seed)
    tensors = []
    layers = spec.layer_dims
    for index, (fan_in, fan_out) in enumerate(layers):
        gain = spec.output_gain if index == len(layers) - 1 else HIDDEN_GAIN
        tensors.append(orthogonal((fan_in, fan_out), gain, rng))
        tensors.append(np.zeros((1, fan_out)))
    return Params(tensors)


def spec_from_params(params: Sequence[np.ndarray], output_gain: float = 1.0) -> NetworkSpec:
    weights = params[0::2]
    return NetworkSpec(
        input_dim=weights[0].shape[0],
        hidden=tuple(w.shape[1] for w in weights[:-1]),
        output_dim=weights[-1].shape[1],
        output_gain=output_gain,
    )


class Network:
    """A tanh MLP with a linear output layer."""

    def __init__(self, spec: NetworkSpec, params: Params):
        self.spec = spec
        self.params = params

    @classmethod
    def create(cls, spec: NetworkSpec, seed: int) -> "Network":
        return cls(spec, init_params(spec, seed))

    def _check_input(self, width: int) -> None:
        if width != self.spec.input_dim:
            raise NetworkError(f"expected input dimension {self.spec.input_dim}, got {width}")

    def bind(self, tape: ad.Tape) -> List[ad.Tensor]:
        """Register the parameters as leaves of ``tape``."""
        return [tape.variable(p) for p in self.params]

    def forward(self, x: ad.Tensor, weights: Sequence[ad.Tensor]) -> ad.Tensor:
        """Tape forward pass over a (batch, input_dim) tensor."""
        self._check_input(x.shape[-1])
        h = x
        n_layers = len(weights) // 2
        for index in range(n_layers):
            h = ad.add(ad.matmul(h, weights[2 * index]), weights[2 * index + 1])
            if index < n_layers - 1:
                h = ad.tanh(h)
        return h

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Numpy forward pass; accepts one input vector or a batch."""
        x = np.asarray(x, dtype=np.float64)
        self._check_input(x.shape[-1])
        h = np.atleast_2d(x)
        n_layers = len(self.params) // 2
        for index in range(n_layers):
            h = h @ self.params[2 * index] + self.params[2 * index + 1]
            if index < n_layers - 1:
                h = np.tanh(h)
        return h if x.ndim == 2 else h[0]


class GaussianPolicy:
    """Diagonal Gaussian with an MLP mean and a state-independent log std."""

    def __init__(self, mean_net: Network, log_std: np.ndarray):
        self.mean_net = mean_net
        self.log_std = np.asarray(log_std, dtype=np.float64).reshape(1, -1)

    @classmethod
    def create(cls, obs_dim: int, act_dim: int, hidden: Sequence[int] = (64, 64),
               seed: int = 0) -> "GaussianPolicy":
        spec = NetworkSpec(obs_dim, tuple(hidden), act_dim, output_gain=POLICY_OUTPUT_GAIN)
        return cls(Network.create(spec, seed), np.zeros((1, act_dim)))

    @property
    def obs_dim(self) -> int:
        return self.mean_net.spec.input_dim

    @property
    def act_dim(self) -> int:
        return self.mean_net.spec.output_dim

    def parameters(self) -> List[np.ndarray]:
        return [*self.mean_net.params, self.log_std]

    def clamp_log_std(self) -> None:
        np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX, out=self.log_std)

    def forward(self, states: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return self.mean_net.predict(states), self.log_std[0].copy()

    def log_prob(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        mean, log_std = self.forward(states)
        z = (np.asarray(actions, dtype=np.float64) - mean) * np.exp(-log_std)
        return np.sum(-0.5 * z * z - log_std - HALF_LOG_2PI, axis=-1)

    def entropy(self) -> float:
        return float(np.sum(self.log_std + HALF_LOG_2PIE))

    def sample(self, state: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        mean, log_std = self.forward(state)
        return mean + np.exp(log_std) * rng.standard_normal(mean.shape)

    def bind(self, tape: ad.Tape) -> List[ad.Tensor]:
        return [*self.mean_net.bind(tape), tape.variable(self.log_std)]

    def log_prob_node(self, states: ad.Tensor, actions: np.ndarray,
                      weights: Sequence[ad.Tensor]) -> ad.Tensor:
        """Per-sample log-probabilities as a (batch, 1) tape tensor."""
        mean = self.mean_net.forward(states, weights[:-1])
        log_std = weights[-1]
        z = ad.mul(ad.sub(actions, mean), ad.exp(ad.neg(log_std)))
        per_dim = ad.sub(ad.scale(ad.square(z), -0.5), log_std)
        per_dim = ad.sub(per_dim, HALF_LOG_2PI)
        return ad.matmul(per_dim, np.ones((self.act_dim, 1)))

    def entropy_node(self, weights: Sequence[ad.Tensor]) -> ad.Tensor:
        return ad.add(ad.sum_(weights[-1]), self.act_dim * HALF_LOG_2PIE)


class ValueNet:
    """State-value function V(s)."""

    def __init__(self, net: Network):
        self.net = net

    @classmethod
    def create(cls, obs_dim: int, hidden: Sequence[int] = (64, 64), seed: int = 0) -> "ValueNet":
        return cls(Network.create(NetworkSpec(obs_dim, tuple(hidden), 1), seed))

    def parameters(self) -> List[np.ndarray]:
        return list(self.net.params)

    def predict(self, states: np.ndarray) -> np.ndarray:
        out = self.net.predict(states)
        return out[..., 0]

    def bind(self, tape: ad.Tape) -> List[ad.Tensor]:
        return self.net.bind(tape)

    def forward(self, states: ad.Tensor, weights: Sequence[ad.Tensor]) -> ad.Tensor:
        return self.net.forward(states, weights)


class Discriminator:
    """Unbounded scalar critic D(s, a); no output squashing."""

    def __init__(self, net: Network, lipschitz_mode: LipschitzMode = LipschitzMode.GRADIENT_PENALTY,
                 clip_c: float = DEFAULT_CLIP_C):
        self.net = net
        self.lipschitz_mode = LipschitzMode(lipschitz_mode)
        self.clip_c = clip_c

    @classmethod
    def create(cls, obs_dim: int, act_dim: int, hidden: Sequence[int] = (100,), seed: int = 0,
               lipschitz_mode: LipschitzMode = LipschitzMode.GRADIENT_PENALTY,
               clip_c: float = DEFAULT_CLIP_C) -> "Discriminator":
        spec = NetworkSpec(obs_dim + act_dim, tuple(hidden), 1)
        return cls(Network.create(spec, seed), lipschitz_mode, clip_c)

    @property
    def input_dim(self) -> int:
        return self.net.spec.input_dim

    def parameters(self) -> List[np.ndarray]:
        return list(self.net.params)

    def clip_weights(self) -> None:
        for p in self.net.params:
            np.clip(p, -self.clip_c, self.clip_c, out=p)

    def score(self, pairs: np.ndarray) -> np.ndarray:
        """Raw outputs for a (batch, obs+act) array of state-action pairs."""
        return self.net.predict(pairs)[..., 0]

    def bind(self, tape: ad.Tape) -> List[ad.Tensor]:
        return self.net.bind(tape)

    def forward(self, pairs: ad.Tensor, weights: Sequence[ad.Tensor]) -> ad.Tensor:
        return self.net.forward(pairs, weights)


def policy_forward(policy: GaussianPolicy, state: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    return policy.forward(state)


def log_prob(policy: GaussianPolicy, state: np.ndarray, action: np.ndarray) -> np.ndarray:
    return policy.log_prob(state, action)


def entropy(policy: GaussianPolicy) -> float:
    return policy.entropy()


def disc_forward(disc: Discriminator, state: np.ndarray, action: np.ndarray) -> np.ndarray:
    state = np.atleast_2d(np.asarray(state, dtype=np.float64))
    action = np.atleast_2d(np.asarray(action, dtype=np.float64))
    if state.shape[1] + action.shape[1] != disc.input_dim:
        raise NetworkError(
            f"discriminator expects {disc.input_dim} state+action dims, "
            f"got {state.shape[1]}+{action.shape[1]}")
    return disc.score(np.concatenate([state, action], axis=1))
