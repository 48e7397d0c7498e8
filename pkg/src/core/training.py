"""
Training orchestration: one run of WDAIL, GAIL, behavior cloning or PPO on
the true reward, writing metrics, the resolved config and checkpoints.

Each adversarial iteration runs strictly in this order:
collect -> discriminator updates -> reward labeling -> GAE -> PPO.
"""

import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, Optional

import numpy as np

from ..utils.checkpoint import write_tensors
from ..utils.config_manager import RunConfig
from ..utils.metrics import METRICS_COLUMNS, METRICS_FILE_NAME, MetricsLog
from .actors import PolicyActor, RandomActor, save_policy_checkpoint
from .adversary import (AdversaryError, disc_update, gail_disc_update, label_rewards,
                        make_optimizer as make_disc_optimizer)
from .bc import BcLearner
from .demos import DemoDataset, load_demos
from .envs import make_env, true_return
from .expert import expert_reference_return
from .nets import Discriminator, GaussianPolicy, ValueNet
from .ppo import NonFiniteLossError, make_optimizer as make_ppo_optimizer, ppo_update
from .rollout import RolloutCollector, RunningNormalizer, compute_gae

logger = logging.getLogger(__name__)

POLICY_CHECKPOINT = "policy.wdnp"
VALUE_CHECKPOINT = "value.wdnp"
DISCRIMINATOR_CHECKPOINT = "discriminator.wdnp"
DEGENERATE_SPAN = 1e-12


class TrainingAborted(RuntimeError):
    """Raised when a run stops before exhausting its budget."""


def normalized_score(ret: float, random_return: float, expert_return: float) -> float:
    """
    (R - R_random) / (R_expert - R_random), not clipped.

    Raises:
        ValueError: If the expert and random returns coincide
    """
    span = expert_return - random_return
    if abs(span) < DEGENERATE_SPAN:
        raise ValueError(
            f"normalized_score: expert return {expert_return} equals random return {random_return}")
    score = (ret - random_return) / span
    if not 0.0 <= score <= 1.0:
        logger.warning(f"Normalized score {score:.3f} lies outside [0, 1] (return {ret:.3f})")
    return score


@dataclass(frozen=True)
class ScoreReference:
    random_return: float
    expert_return: float

    def score(self, ret: float) -> float:
        return normalized_score(ret, self.random_return, self.expert_return)


def derive_seeds(seed: int, count: int) -> list:
    """Independent integer seeds for every random stream of a run."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(count)]


class Trainer:
    """
    Owns every network and random stream of one run; ``iterations()`` yields
    one metrics row per iteration (per epoch for behavior cloning).
    """

    def __init__(self, config: RunConfig, demos: Optional[DemoDataset] = None):
        self.config = config
        (self.policy_seed, self.value_seed, self.disc_seed, self.rollout_seed,
         self.update_seed, self.eval_seed) = derive_seeds(config.seed, 6)

        self.env = make_env(config.env)
        self.eval_env = make_env(config.env)
        spec = self.env.spec
        self.demos = None
        if demos is not None:
            try:
                self.demos = demos.subset(config.n_traj)
            except ValueError as exc:
                raise TrainingAborted(str(exc)) from exc
        if config.uses_demos and self.demos is None:
            raise TrainingAborted(f"algorithm '{config.algo}' needs demonstrations (set 'demos')")
        if self.demos is not None and (self.demos.obs_dim, self.demos.act_dim) != (spec.obs_dim, spec.act_dim):
            raise TrainingAborted(
                f"demos have obs/act dims ({self.demos.obs_dim}, {self.demos.act_dim}), "
                f"environment '{config.env}' expects ({spec.obs_dim}, {spec.act_dim})")

        self.policy = GaussianPolicy.create(spec.obs_dim, spec.act_dim, config.policy_hidden, self.policy_seed)
        self.value_net = ValueNet.create(spec.obs_dim, config.value_hidden, self.value_seed)
        self.normalizer = RunningNormalizer(spec.obs_dim)
        self.disc: Optional[Discriminator] = None
        if config.algo in ("wdail", "gail"):
            adv = config.adversary
            self.disc = Discriminator.create(spec.obs_dim, spec.act_dim, config.disc_hidden, self.disc_seed,
                                             adv.lipschitz_mode, adv.clip_c)
        self.reference = self._score_reference()
        self.last_row: Optional[Dict[str, float]] = None

    def _score_reference(self) -> ScoreReference:
        config = self.config
        episodes = config.eval_episodes
        random_return = true_return(self.eval_env, RandomActor(self.env.spec, self.eval_seed),
                                    episodes, self.eval_seed)
        if config.expert_return is not None:
            expert_return = config.expert_return
        elif self.demos is not None:
            expert_return = self.demos.mean_return
        else:
            expert_return = expert_reference_return(config.env, episodes, self.eval_seed)
        if abs(expert_return - random_return) < DEGENERATE_SPAN:
            raise TrainingAborted(
                f"expert return {expert_return} equals random return {random_return}; scores undefined")
        logger.info(f"Score reference: random {random_return:.3f}, expert {expert_return:.3f}")
        return ScoreReference(random_return, expert_return)

    def evaluate(self, policy: Optional[GaussianPolicy] = None,
                 normalizer: Optional[RunningNormalizer] = None) -> float:
        actor = PolicyActor(policy or self.policy, normalizer or self.normalizer, deterministic=True)
        return true_return(self.eval_env, actor, self.config.eval_episodes, self.eval_seed)

    def iterations(self) -> Iterator[Dict[str, float]]:
        if self.config.algo == "bc":
            yield from self._bc_iterations()
        else:
            yield from self._rl_iterations()

    def _rl_iterations(self) -> Iterator[Dict[str, float]]:
        config = self.config
        collector = RolloutCollector(self.env, self.policy, self.value_net, self.normalizer, self.rollout_seed)
        ppo_optimizer = make_ppo_optimizer(self.policy, self.value_net, config.ppo)
        disc_optimizer = make_disc_optimizer(self.disc, config.adversary) if self.disc else None
        rng = np.random.default_rng(self.update_seed)

        env_steps = 0
        iteration = 0
        last_return = float("nan")
        while env_steps < config.total_steps:
            started = time.perf_counter()
            iteration += 1
            buffer = collector.collect(config.rollout.steps)
            env_steps += len(buffer)

            disc_stats = {"wd_estimate": 0.0, "gp_value": 0.0, "disc_loss": 0.0}
            if self.disc is not None:
                policy_pairs = buffer.state_action_pairs(self.normalizer)
                expert_pairs = self.demos.pairs(self.normalizer)
                update = gail_disc_update if config.algo == "gail" else disc_update
                try:
                    disc_stats = update(self.disc, policy_pairs, expert_pairs, config.adversary,
                                        disc_optimizer, rng).as_dict()
                except AdversaryError as exc:
                    raise TrainingAborted(str(exc)) from exc
                rewards = label_rewards(self.disc, policy_pairs, config.reward_shape,
                                        gail=config.algo == "gail")
            else:
                rewards = buffer.true_rewards
            buffer.fill_rewards(rewards)
            compute_gae(buffer, self.value_net, config.rollout.gamma, config.rollout.gae_lambda)

            try:
                ppo_stats = ppo_update(self.policy, self.value_net, buffer, config.ppo, ppo_optimizer, rng)
            except NonFiniteLossError as exc:
                raise TrainingAborted(str(exc)) from exc

            final = env_steps >= config.total_steps
            if (iteration - 1) % config.eval_interval == 0 or final:
                last_return = self.evaluate()

            row = {
                "iteration": iteration,
                "env_steps": env_steps,
                "mean_true_return": last_return,
                "normalized_score": self.reference.score(last_return),
                **disc_stats,
                **ppo_stats.as_dict(),
                "wall_ms": self._wall_ms(started),
            }
            logger.info(
                f"[{config.algo} {config.env} seed {config.seed}] iter {iteration} steps {env_steps} "
                f"return {last_return:.3f} score {row['normalized_score']:.3f} wd {row['wd_estimate']:.4f}")
            yield row

    def _bc_iterations(self) -> Iterator[Dict[str, float]]:
        config = self.config
        if config.total_steps == 0:
            return
        learner = BcLearner(self.demos, config.policy_hidden, self.policy_seed, config.bc)
        self.policy, self.normalizer = learner.policy, learner.normalizer
        last_return = float("nan")
        started = time.perf_counter()
        for epoch, loss in learner.epochs(config.bc.epochs):
            final = epoch == config.bc.epochs - 1
            if epoch % config.eval_interval == 0 or final:
                last_return = self.evaluate()
            row = {
                "iteration": epoch + 1,
                "env_steps": epoch + 1,
                "mean_true_return": last_return,
                "normalized_score": self.reference.score(last_return),
                "wd_estimate": 0.0,
                "gp_value": 0.0,
                "disc_loss": 0.0,
                "policy_loss": loss,
                "value_loss": 0.0,
                "entropy": self.policy.entropy(),
                "approx_kl": 0.0,
                "clip_fraction": 0.0,
                "wall_ms": self._wall_ms(started),
            }
            logger.info(f"[bc {config.env} seed {config.seed}] epoch {epoch + 1} loss {loss:.4f} "
                        f"return {last_return:.3f} score {row['normalized_score']:.3f}")
            yield row
            started = time.perf_counter()

    def _wall_ms(self, started: float) -> int:
        return int(round((time.perf_counter() - started) * 1000)) if self.config.record_timing else 0

    def run(self, out: Optional[Path] = None) -> Path:
        """
        Run to the end of the budget, writing ``config.txt``, ``metrics.csv``
        and checkpoints into the run directory.

        Raises:
            TrainingAborted: On a non-finite metric or loss; rows already
                written stay on disk
        """
        out = Path(out or self.config.out)
        self.config.write(out)
        log = MetricsLog(out / METRICS_FILE_NAME)
        try:
            for row in self.iterations():
                bad = [c for c in METRICS_COLUMNS if not math.isfinite(row[c])]
                if bad:
                    raise TrainingAborted(f"non-finite metrics {bad} at iteration {row['iteration']}")
                self.last_row = log.append(row)
        except TrainingAborted as exc:
            logger.error(f"Run {out} aborted after {log.rows} rows: {exc}")
            raise

        self.save_checkpoints(out)
        logger.info(f"Run finished: {log.rows} rows in {out}")
        return out

    def save_checkpoints(self, out: Path) -> None:
        save_policy_checkpoint(out / POLICY_CHECKPOINT, self.policy, self.normalizer)
        if self.config.algo != "bc":
            write_tensors(out / VALUE_CHECKPOINT, self.value_net.parameters())
        if self.disc is not None:
            write_tensors(out / DISCRIMINATOR_CHECKPOINT, self.disc.parameters())


def load_run_demos(config: RunConfig) -> Optional[DemoDataset]:
    if not config.uses_demos:
        return None
    if not config.demos:
        raise TrainingAborted(f"algorithm '{config.algo}' needs a demonstration file (set 'demos')")
    path = Path(config.demos)
    if not path.exists():
        raise TrainingAborted(f"demonstration file {path} does not exist")
    return load_demos(path)


def run_training(config: RunConfig) -> Path:
    """Load demos, train, and return the run directory."""
    return Trainer(config, load_run_demos(config)).run()
