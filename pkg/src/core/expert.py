"""
Expert policies: the scripted PointMass controller, PPO experts trained on
the true reward, and the reference returns used for normalized scores.
"""

import logging
from dataclasses import replace
from pathlib import Path
from typing import Optional, Union

from .actors import ScriptedPointMassExpert, load_actor, save_policy_checkpoint, scripted_expert_pointmass
from .demos import DemoDataset, record_demos
from .envs import PendulumEnv, PointMassEnv, UnknownEnvironmentError, make_env, true_return

logger = logging.getLogger(__name__)

PENDULUM_REFERENCE_RETURN = -150.0
PENDULUM_TARGET = -300.0
POINTMASS_TARGET = -5.0
DEFAULT_MAX_ITERATIONS = {PointMassEnv.env_id: 300, PendulumEnv.env_id: 1000}

__all__ = [
    "ExpertTrainingError", "expert_reference_return", "scripted_expert_pointmass",
    "ScriptedPointMassExpert", "train_expert", "record_expert_demos",
]


class ExpertTrainingError(RuntimeError):
    """Raised when PPO does not reach the target score within its iteration budget."""

    def __init__(self, env_id: str, target: float, best: float, iterations: int):
        self.env_id = env_id
        self.target = target
        self.best = best
        self.iterations = iterations
        super().__init__(
            f"{env_id}: expert did not reach target {target:.3f} within {iterations} iterations "
            f"(best evaluation return {best:.3f})")


def expert_reference_return(env_id: str, episodes: int = 20, seed: int = 0) -> float:
    """
    Expert performance used when a run has neither demos nor ``expert_return``:
    the scripted controller's mean return on PointMass, a fixed reference on
    Pendulum.
    """
    if env_id == PointMassEnv.env_id:
        return true_return(make_env(env_id), ScriptedPointMassExpert(), episodes, seed)
    if env_id == PendulumEnv.env_id:
        return PENDULUM_REFERENCE_RETURN
    raise UnknownEnvironmentError(f"no reference expert for environment '{env_id}'")


def default_target(env_id: str) -> float:
    """Evaluation return ``expert train`` must reach: -5 on PointMass, -300 on Pendulum."""
    if env_id == PendulumEnv.env_id:
        return PENDULUM_TARGET
    if env_id == PointMassEnv.env_id:
        return POINTMASS_TARGET
    raise UnknownEnvironmentError(f"no expert target for environment '{env_id}'")


def train_expert(env_id: str, out: Union[str, Path], seed: int = 0, target_score: Optional[float] = None,
                 max_iterations: Optional[int] = None, config=None) -> Path:
    """
    Train a PPO policy on the true reward until its deterministic evaluation
    return reaches ``target_score``, then save the policy checkpoint.

    Args:
        env_id: Environment id
        out: Checkpoint path
        seed: Run seed
        target_score: Evaluation return to reach (per-environment default)
        max_iterations: Iteration budget (per-environment default)
        config: Base RunConfig; algo, env and seed are overridden

    Returns:
        Path of the saved checkpoint

    Raises:
        ExpertTrainingError: If the target is not reached, with the best score
    """
    from ..utils.config_manager import RunConfig
    from .training import Trainer

    target = default_target(env_id) if target_score is None else target_score
    budget = DEFAULT_MAX_ITERATIONS.get(env_id, 300) if max_iterations is None else max_iterations
    base = config or RunConfig(env=env_id)
    run_config = replace(base, env=env_id, algo="ppo-true-reward", seed=seed,
                         total_steps=budget * base.rollout.steps, eval_interval=1)

    trainer = Trainer(run_config)
    best = float("-inf")
    iterations = 0
    for row in trainer.iterations():
        iterations = row["iteration"]
        best = max(best, row["mean_true_return"])
        if row["mean_true_return"] >= target:
            logger.info(f"Expert reached {row['mean_true_return']:.3f} >= {target:.3f} at iteration {iterations}")
            return save_policy_checkpoint(out, trainer.policy, trainer.normalizer.copy())
    raise ExpertTrainingError(env_id, target, best, iterations)


def record_expert_demos(env_id: str, n_trajectories: int, seed: int = 0,
                        checkpoint: Optional[Union[str, Path]] = None) -> DemoDataset:
    """Record with a checkpointed policy, or with the scripted controller on PointMass."""
    if checkpoint is not None:
        actor = load_actor(checkpoint)
    elif env_id == PointMassEnv.env_id:
        actor = ScriptedPointMassExpert()
    else:
        raise ValueError(f"{env_id}: no scripted expert, pass a policy checkpoint")
    return record_demos(make_env(env_id), actor, n_trajectories, seed)
