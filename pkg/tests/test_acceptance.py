"""
Desk-scale end-to-end checks. Each takes minutes; run with ``pytest -m slow``.
"""

from dataclasses import replace

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose

from src.core import autodiff as ad
from src.core.adversary import RewardShape, gradient_penalty
from src.core.bc import BcConfig
from src.core.demos import save_demos
from src.core.expert import record_expert_demos
from src.core.nets import Discriminator, Network, NetworkSpec
from src.core.rollout import discounted_advantages
from src.core.sweep_engine import AGGREGATE_FILE, PLOT_FILE, SweepEngine
from src.core.training import Trainer, run_training
from src.utils.config_manager import RunConfig, SweepConfig
from src.utils.metrics import METRICS_FILE_NAME, read_metrics

pytestmark = pytest.mark.slow

SEEDS = (0, 1, 2, 3)


def _finite_difference_grads(fn, params, h):
    grads = []
    for p in params:
        grad = np.zeros_like(p)
        for index in np.ndindex(p.shape):
            saved = p[index]
            p[index] = saved + h
            plus = fn()
            p[index] = saved - h
            minus = fn()
            p[index] = saved
            grad[index] = (plus - minus) / (2 * h)
        grads.append(grad)
    return grads


def test_mlp_gradients_on_a_hundred_networks():
    for seed in range(100):
        net = Network.create(NetworkSpec(4, (8, 8), 1), seed)
        x = np.random.default_rng(1000 + seed).normal(size=(3, 4))
        tape = ad.Tape()
        weights = net.bind(tape)
        analytic = ad.backward(tape, ad.sum_(net.forward(ad.constant(x), weights))).arrays(weights)
        numeric = _finite_difference_grads(lambda: float(net.predict(x).sum()), list(net.params), 1e-4)
        for a, n in zip(analytic, numeric):
            assert_allclose(a, n, rtol=1e-5, atol=1e-8, err_msg=f"seed {seed}")


def test_gradient_penalty_parameter_gradients_on_twenty_critics():
    for seed in range(20):
        disc = Discriminator.create(2, 1, hidden=(6,), seed=seed)
        z = np.random.default_rng(seed).normal(size=(5, 3))
        tape = ad.Tape()
        weights = disc.bind(tape)
        analytic = ad.backward(tape, gradient_penalty(disc, z, tape, weights)).arrays(weights)
        numeric = _finite_difference_grads(lambda: gradient_penalty(disc, z).item(), disc.parameters(), 1e-5)
        for a, n in zip(analytic, numeric):
            assert_allclose(a, n, rtol=1e-4, atol=1e-8, err_msg=f"seed {seed}")


def test_lambda_one_advantages_on_a_thousand_episodes():
    rng = np.random.default_rng(7)
    gamma = 0.97
    for _ in range(1000):
        length = int(rng.integers(1, 30))
        rewards = rng.normal(size=length)
        values = rng.normal(size=length)
        dones = np.zeros(length, dtype=bool)
        dones[-1] = True
        advantages = discounted_advantages(rewards, values, dones, 0.0, gamma, 1.0)
        returns = np.array([sum(gamma ** k * r for k, r in enumerate(rewards[t:])) for t in range(length)])
        assert_allclose(advantages, returns - values, rtol=0, atol=1e-10)


def test_ppo_on_the_true_reward_improves_the_policy(tmp_path):
    improved = 0
    for seed in SEEDS:
        config = RunConfig(algo="ppo-true-reward", seed=seed, total_steps=100 * 2048,
                           eval_interval=100, out=str(tmp_path / f"ppo{seed}"))
        trainer = Trainer(config)
        initial = trainer.evaluate()
        rows = list(trainer.iterations())
        assert len(rows) == 100
        improved += rows[-1]["mean_true_return"] > initial
    assert improved >= 3


@pytest.fixture(scope="module")
def fifty_demos(tmp_path_factory):
    path = tmp_path_factory.mktemp("demos") / "pointmass50.wdil"
    save_demos(record_expert_demos("pointmass", 50, seed=123), path)
    return path


@pytest.mark.parametrize("shape", [RewardShape.SIGMOID, RewardShape.EXP, RewardShape.NLOG1MSIG])
def test_wdail_reaches_expert_level(shape, fifty_demos, tmp_path):
    reached = 0
    for seed in SEEDS:
        base = RunConfig(algo="wdail", demos=str(fifty_demos), n_traj=5, seed=seed, total_steps=300_000,
                         eval_interval=5, out=str(tmp_path / f"{shape.value}{seed}"))
        config = replace(base, adversary=replace(base.adversary, reward_shape=shape))
        frame = read_metrics(run_training(config) / METRICS_FILE_NAME)
        reached += frame["normalized_score"].max() >= 0.8
    assert reached >= 3


def test_baseline_ordering(fifty_demos, tmp_path):
    def final_score(**changes):
        config = RunConfig(demos=str(fifty_demos), eval_interval=5, out=str(tmp_path / "_".join(
            f"{k}{v}" for k, v in changes.items())), **changes)
        return read_metrics(run_training(config) / METRICS_FILE_NAME)["normalized_score"].iloc[-1]

    wdail = final_score(algo="wdail", n_traj=5)
    gail = final_score(algo="gail", n_traj=5)
    assert wdail >= gail - 0.1

    bc_many = final_score(algo="bc", n_traj=50)
    bc_one = final_score(algo="bc", n_traj=1)
    assert bc_many >= 0.9
    assert bc_one < bc_many


def test_full_shape_grid_completes(fifty_demos, tmp_path):
    base = RunConfig(demos=str(fifty_demos), total_steps=20_000, eval_interval=5, out=str(tmp_path / "grid"),
                     bc=BcConfig(epochs=20))
    sweep = SweepConfig(base=base, shapes=list(RewardShape), n_traj=[1, 5, 10, 50], seeds=list(SEEDS),
                        workers=4)
    results = SweepEngine({"max_workers": 4, "plot_dpi": 72}, sweep).run()
    assert results["success"], results["errors"]
    assert results["failed_cells"] == 0
    assert len(pd.read_csv(tmp_path / "grid" / AGGREGATE_FILE)) == 96
    assert (tmp_path / "grid" / PLOT_FILE).exists()
