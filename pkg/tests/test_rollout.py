import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.core.envs import make_env
from src.core.nets import GaussianPolicy, ValueNet
from src.core.rollout import (NORM_CLIP, RolloutCollector, RolloutConfig, RolloutError, RunningNormalizer,
                              TrajectoryBuffer, collect, compute_gae, discounted_advantages)


def _buffer(rewards, values, dones, next_state=None):
    n = len(rewards)
    buffer = TrajectoryBuffer(
        states=np.zeros((n, 2)), raw_states=np.zeros((n, 2)), actions=np.zeros((n, 1)),
        env_actions=np.zeros((n, 1)), true_rewards=np.zeros(n), dones=np.asarray(dones, dtype=bool),
        values=np.asarray(values, dtype=np.float64), log_probs_old=np.zeros(n), next_state=next_state,
    )
    buffer.fill_rewards(rewards)
    return buffer


def _nets(obs_dim=4, act_dim=2, seed=0):
    return (GaussianPolicy.create(obs_dim, act_dim, hidden=(8,), seed=seed),
            ValueNet.create(obs_dim, hidden=(8,), seed=seed + 1))


def _monte_carlo_advantages(rewards, values, gamma):
    returns = np.zeros(len(rewards))
    running = 0.0
    for t in reversed(range(len(rewards))):
        running = rewards[t] + gamma * running
        returns[t] = running
    return returns - values


def test_rollout_config_validation():
    with pytest.raises(ValueError, match="rollout steps must be >= 1"):
        RolloutConfig(steps=0)
    with pytest.raises(ValueError, match="gamma"):
        RolloutConfig(gamma=1.5)


def test_normalizer_tracks_batch_statistics():
    rng = np.random.default_rng(0)
    data = rng.normal(loc=[3.0, -1.0], scale=[2.0, 0.5], size=(1000, 2))
    normalizer = RunningNormalizer(2)
    for batch in np.array_split(data, 7):
        normalizer.update(batch)
    assert_allclose(normalizer.mean, data.mean(axis=0), atol=1e-3)
    assert_allclose(normalizer.var, data.var(axis=0), rtol=1e-3)
    assert normalizer.count == pytest.approx(1000.0001)


def test_normalizer_clips_and_freezes():
    normalizer = RunningNormalizer.from_data(np.array([[0.0], [2.0]]))
    assert normalizer.frozen
    assert_allclose(normalizer.normalize(np.array([1e6])), [NORM_CLIP])
    normalizer.update(np.array([[100.0]]))
    assert_allclose(normalizer.mean, [1.0])


def test_single_step_rollout():
    policy, value = _nets()
    buffer = collect(make_env("pointmass"), policy, value, RunningNormalizer(4), steps=1, seed=0)
    assert len(buffer) == 1
    assert buffer.episode_starts == [0]
    assert not buffer.dones[0]
    assert buffer.next_state is not None
    assert np.isnan(buffer.rewards).all()


def test_rollout_is_deterministic_per_seed():
    buffers = []
    for _ in range(2):
        policy, value = _nets()
        buffers.append(collect(make_env("pointmass"), policy, value, RunningNormalizer(4), steps=50, seed=3))
    first, second = buffers
    for name in ("states", "raw_states", "actions", "true_rewards", "values", "log_probs_old"):
        assert_allclose(getattr(first, name), getattr(second, name), rtol=0, atol=0)


def test_rollout_records_old_log_probs_and_values():
    policy, value = _nets()
    buffer = collect(make_env("pointmass"), policy, value, RunningNormalizer(4), steps=20, seed=1)
    assert_allclose(buffer.log_probs_old, policy.log_prob(buffer.states, buffer.actions), atol=1e-12)
    assert_allclose(buffer.values, value.predict(buffer.states), atol=1e-12)
    assert_allclose(buffer.env_actions, np.clip(buffer.actions, -1.0, 1.0))


def test_episode_boundaries_and_carry_over():
    env = make_env("pointmass", horizon=3)
    policy, value = _nets()
    collector = RolloutCollector(env, policy, value, RunningNormalizer(4), seed=0)

    buffer = collector.collect(7)
    assert buffer.episode_starts == [0, 3, 6]
    assert buffer.dones.nonzero()[0].tolist() == [2, 5]
    assert [s.stop - s.start for s in buffer.episode_segments()] == [3, 3, 1]

    carried = collector.collect(2)
    assert carried.dones.tolist() == [False, True]
    assert carried.episode_starts == [0]
    assert collector.total_steps == 9


def test_normalized_states_are_centered_over_a_long_rollout():
    policy, value = _nets()
    normalizer = RunningNormalizer(4)
    buffer = collect(make_env("pointmass"), policy, value, normalizer, steps=2000, seed=0)
    centered = normalizer.normalize(buffer.raw_states).mean(axis=0)
    assert np.all(np.abs(centered) < 0.2)


def test_state_action_pairs_use_applied_actions():
    policy, value = _nets()
    normalizer = RunningNormalizer(4)
    buffer = collect(make_env("pointmass"), policy, value, normalizer, steps=10, seed=0)
    pairs = buffer.state_action_pairs(normalizer)
    assert pairs.shape == (10, 6)
    assert_allclose(pairs[:, 4:], buffer.env_actions)


def test_gae_single_terminal_transition():
    buffer = compute_gae(_buffer([1.0], [0.0], [True]), None, gamma=0.99, lam=0.95, normalize=False)
    assert_allclose(buffer.advantages, [1.0])
    assert_allclose(buffer.return_targets, [1.0])


def test_gae_with_zero_lambda_is_td_error():
    rewards = np.array([0.5, -1.0, 2.0])
    values = np.array([0.3, 0.1, -0.4])
    advantages = discounted_advantages(rewards, values, np.array([False, False, True]), 0.0, 0.9, 0.0)
    expected = [0.5 + 0.9 * 0.1 - 0.3, -1.0 + 0.9 * -0.4 - 0.1, 2.0 + 0.4]
    assert_allclose(advantages, expected)


def test_gae_with_unit_lambda_is_monte_carlo():
    rng = np.random.default_rng(0)
    for gamma in (0.99, 1.0):
        for _ in range(500):
            length = int(rng.integers(1, 12))
            rewards, values = rng.normal(size=length), rng.normal(size=length)
            dones = np.zeros(length, dtype=bool)
            dones[-1] = True
            advantages = discounted_advantages(rewards, values, dones, 0.0, gamma, 1.0)
            assert_allclose(advantages, _monte_carlo_advantages(rewards, values, gamma), rtol=0, atol=1e-10)


def test_gae_does_not_cross_episode_boundaries():
    values = np.array([0.2, 0.1, 0.0, 0.4, -0.3])
    dones = np.array([False, False, True, False, True])
    first = discounted_advantages(np.array([1.0, 1.0, 1.0, 5.0, 5.0]), values, dones, 0.0, 0.99, 0.95)
    second = discounted_advantages(np.array([1.0, 1.0, 1.0, -7.0, 3.0]), values, dones, 0.0, 0.99, 0.95)
    assert_allclose(first[:3], second[:3], rtol=0, atol=0)
    assert not np.allclose(first[3:], second[3:])


def test_gae_bootstraps_unfinished_episode():
    _, value = _nets(obs_dim=2)
    next_state = np.array([0.3, -0.6])
    buffer = _buffer([0.0], [0.0], [False], next_state=next_state)
    compute_gae(buffer, value, gamma=0.9, lam=0.95, normalize=False)
    assert buffer.advantages[0] == pytest.approx(0.9 * float(value.predict(next_state)))


def test_gae_standardizes_advantages_but_not_targets():
    rewards = np.array([1.0, 0.0, 3.0, -2.0])
    values = np.array([0.5, 0.5, 0.5, 0.5])
    dones = [False, True, False, True]
    raw = discounted_advantages(rewards, values, np.array(dones), 0.0, 0.99, 0.95)
    buffer = compute_gae(_buffer(rewards, values, dones), None, gamma=0.99, lam=0.95)
    assert buffer.advantages.mean() == pytest.approx(0.0, abs=1e-12)
    assert buffer.advantages.std() == pytest.approx(1.0)
    assert_allclose(buffer.return_targets, raw + values)


def test_gae_requires_rewards():
    buffer = TrajectoryBuffer(
        states=np.zeros((2, 1)), raw_states=np.zeros((2, 1)), actions=np.zeros((2, 1)),
        env_actions=np.zeros((2, 1)), true_rewards=np.zeros(2), dones=np.array([False, True]),
        values=np.zeros(2), log_probs_old=np.zeros(2))
    with pytest.raises(RolloutError, match="rewards not yet filled"):
        compute_gae(buffer, None, 0.99, 0.95)
    with pytest.raises(RolloutError, match="expected 2 rewards"):
        buffer.fill_rewards(np.zeros(3))


def test_transition_view():
    buffer = _buffer([2.0, 3.0], [0.1, 0.2], [False, True])
    compute_gae(buffer, None, 0.99, 0.95)
    step = buffer.transition(1)
    assert step.imitation_reward == 3.0
    assert step.done
    assert step.return_target == pytest.approx(3.0)
    assert len(list(buffer.transitions())) == 2
