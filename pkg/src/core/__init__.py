"""
Core package: autodiff, networks, environments and learning algorithms.

The training and sweep orchestration live in ``core.training`` and
``core.sweep_engine`` and are imported from there.
"""

from .adversary import AdversaryConfig, RewardShape, disc_update, gail_disc_update, shape_reward
from .autodiff import Tape, Tensor, backward, input_gradient_as_node
from .bc import BcConfig, bc_train
from .demos import DemoDataset, load_demos, record_demos, save_demos
from .envs import PendulumEnv, PointMassEnv, make_env
from .nets import Discriminator, GaussianPolicy, NetworkSpec, ValueNet
from .ppo import PpoConfig, ppo_update
from .rollout import RolloutConfig, RunningNormalizer, TrajectoryBuffer, compute_gae

__all__ = [
    'AdversaryConfig', 'RewardShape', 'disc_update', 'gail_disc_update', 'shape_reward',
    'Tape', 'Tensor', 'backward', 'input_gradient_as_node',
    'BcConfig', 'bc_train',
    'DemoDataset', 'load_demos', 'record_demos', 'save_demos',
    'PendulumEnv', 'PointMassEnv', 'make_env',
    'Discriminator', 'GaussianPolicy', 'NetworkSpec', 'ValueNet',
    'PpoConfig', 'ppo_update',
    'RolloutConfig', 'RunningNormalizer', 'TrajectoryBuffer', 'compute_gae',
]
