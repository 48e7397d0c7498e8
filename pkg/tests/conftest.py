from dataclasses import replace

import pytest

from src.core.actors import ScriptedPointMassExpert
from src.core.adversary import AdversaryConfig
from src.core.bc import BcConfig
from src.core.demos import record_demos, save_demos
from src.core.envs import make_env
from src.core.ppo import PpoConfig
from src.core.rollout import RolloutConfig
from src.utils.config_manager import RunConfig


@pytest.fixture(scope="session")
def pointmass_demos():
    """Three scripted PointMass trajectories (600 pairs)."""
    return record_demos(make_env("pointmass"), ScriptedPointMassExpert(), 3, seed=0)


@pytest.fixture
def demo_file(tmp_path, pointmass_demos):
    return save_demos(pointmass_demos, tmp_path / "demos" / "pointmass.wdil")


@pytest.fixture
def tiny_config(tmp_path, demo_file):
    """A two-iteration WDAIL run with small networks."""
    return RunConfig(
        env="pointmass",
        algo="wdail",
        demos=str(demo_file),
        n_traj=2,
        seed=0,
        total_steps=64,
        eval_episodes=1,
        out=str(tmp_path / "run"),
        policy_hidden=(8,),
        value_hidden=(8,),
        disc_hidden=(8,),
        rollout=RolloutConfig(steps=32),
        ppo=PpoConfig(epochs=2, minibatch=16),
        adversary=AdversaryConfig(steps=2, minibatch=16),
        bc=BcConfig(epochs=3, minibatch=64),
    )


@pytest.fixture
def make_config(tiny_config):
    def build(**changes):
        return replace(tiny_config, **changes)
    return build
