import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.core import autodiff as ad
from src.core.adversary import (NEGATIVE_SHAPES, POSITIVE_SHAPES, AdversaryConfig, AdversaryError, RewardShape,
                                disc_update, gail_disc_update, gail_objective, gail_reward, gradient_penalty,
                                interpolate, label_rewards, shape_reward, wasserstein_loss, _sample_batches)
from src.core.nets import Discriminator, LipschitzMode

GRID = np.linspace(-20.0, 20.0, 801)


class LinearCritic:
    """D(z) = z . w, a critic whose input gradient is w everywhere."""

    def __init__(self, w):
        self.w = np.asarray(w, dtype=np.float64).reshape(-1, 1)

    def bind(self, tape):
        return [tape.variable(self.w)]

    def forward(self, pairs, weights):
        return ad.matmul(pairs, weights[0])


def _clouds(rng, n=256, dim=3, gap=2.0):
    expert = rng.normal(loc=gap, scale=0.5, size=(n, dim))
    policy = rng.normal(loc=-gap, scale=0.5, size=(n, dim))
    return policy, expert


@pytest.mark.parametrize("shape", list(RewardShape))
def test_every_shape_is_monotone(shape):
    values = shape_reward(GRID, shape)
    assert np.all(np.isfinite(values))
    assert np.all(np.diff(values) >= 0.0)


def test_shape_signs():
    for shape in POSITIVE_SHAPES:
        assert np.all(shape_reward(GRID, shape) > 0.0), shape
    for shape in NEGATIVE_SHAPES:
        assert np.all(shape_reward(GRID, shape) < 0.0), shape


def test_log_shapes_sum_to_the_linear_reward():
    total = shape_reward(GRID, "logsig") + shape_reward(GRID, "nlog1msig")
    assert_allclose(total, shape_reward(GRID, RewardShape.LINEAR), rtol=0, atol=1e-9)
    assert_allclose(shape_reward(GRID, "airl"), GRID)


def test_shape_values():
    assert shape_reward(0.0, "sigmoid") == pytest.approx(0.5)
    assert shape_reward(0.0, "exp") == pytest.approx(1.0)
    assert shape_reward(0.0, "negexp") == pytest.approx(-1.0)
    assert shape_reward(0.0, "logsig") == pytest.approx(np.log(0.5))
    assert shape_reward(0.0, "nlog1msig") == pytest.approx(np.log(2.0))
    assert np.isfinite(shape_reward(1e4, "exp"))


def test_sigmoid_reward_stays_positive_for_very_negative_scores():
    assert shape_reward(-40.0, "sigmoid") > 0.0
    assert shape_reward(-700.0, "sigmoid") > 0.0
    assert shape_reward(40.0, "sigmoid") == pytest.approx(1.0)


def test_unknown_shape():
    with pytest.raises(ValueError, match="unknown reward shape 'tanh'"):
        shape_reward(0.0, "tanh")


def test_wasserstein_loss_and_antisymmetry():
    assert wasserstein_loss([2.0, 4.0], [1.0, 1.0]).item() == pytest.approx(2.0)
    a, b = np.array([0.3, -1.0, 2.5]), np.array([4.0, 0.1])
    assert wasserstein_loss(a, b).item() == -wasserstein_loss(b, a).item()
    with pytest.raises(AdversaryError, match="non-empty"):
        wasserstein_loss([], [1.0])


def test_interpolate_endpoints():
    rng = np.random.default_rng(0)
    policy, expert = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
    assert_allclose(interpolate(policy, expert, rng, eps=np.zeros(4)), expert, rtol=0, atol=0)
    assert_allclose(interpolate(policy, expert, rng, eps=np.ones(4)), policy, rtol=0, atol=0)
    mixed = interpolate(policy, expert, rng)
    lo, hi = np.minimum(policy, expert), np.maximum(policy, expert)
    assert np.all((mixed >= lo - 1e-12) & (mixed <= hi + 1e-12))
    with pytest.raises(AdversaryError, match="batch shapes differ"):
        interpolate(policy, expert[:3], rng)


def test_gradient_penalty_vanishes_for_unit_slope_critic():
    z = np.random.default_rng(1).normal(size=(8, 2))
    assert gradient_penalty(LinearCritic([0.6, 0.8]), z).item() < 1e-10
    assert gradient_penalty(LinearCritic([1.2, 1.6]), z).item() == pytest.approx(1.0)


def test_gradient_penalty_matches_finite_difference_input_gradients():
    rng = np.random.default_rng(2)
    disc = Discriminator.create(2, 1, hidden=(6,), seed=5)
    z = rng.normal(size=(4, 3))
    h = 1e-5
    norms = []
    for row in z:
        grad = []
        for j in range(3):
            step = np.zeros(3)
            step[j] = h
            grad.append((disc.score(row + step)[()] - disc.score(row - step)[()]) / (2 * h))
        norms.append(np.linalg.norm(grad))
    expected = np.mean((np.array(norms) - 1.0) ** 2)
    penalty = gradient_penalty(disc, z).item()
    assert penalty >= 0.0
    assert penalty == pytest.approx(expected, rel=1e-4)


@pytest.mark.parametrize("seed", range(3))
def test_gradient_penalty_parameter_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    disc = Discriminator.create(2, 1, hidden=(5,), seed=seed)
    z = rng.normal(size=(4, 3))

    tape = ad.Tape()
    weights = disc.bind(tape)
    penalty = gradient_penalty(disc, z, tape, weights)
    analytic = ad.backward(tape, penalty).arrays(weights)

    h = 1e-5
    for param, grad in zip(disc.parameters(), analytic):
        numeric = np.zeros_like(param)
        for index in np.ndindex(param.shape):
            saved = param[index]
            param[index] = saved + h
            plus = gradient_penalty(disc, z).item()
            param[index] = saved - h
            minus = gradient_penalty(disc, z).item()
            param[index] = saved
            numeric[index] = (plus - minus) / (2 * h)
        assert_allclose(grad, numeric, rtol=1e-4, atol=1e-8)


def test_disc_update_separates_clusters():
    rng = np.random.default_rng(0)
    policy, expert = _clouds(rng)
    disc = Discriminator.create(2, 1, hidden=(16,), seed=0)
    stats = disc_update(disc, policy, expert, AdversaryConfig(steps=200, minibatch=32, lr=1e-3),
                        rng=np.random.default_rng(1))
    assert disc.score(expert).mean() - disc.score(policy).mean() > 0.0
    assert stats.wd_estimate > 0.0
    assert stats.gp_value >= 0.0


def test_weight_clipping_mode_bounds_weights_after_update():
    rng = np.random.default_rng(0)
    policy, expert = _clouds(rng, n=64)
    disc = Discriminator.create(2, 1, hidden=(8,), seed=0, lipschitz_mode=LipschitzMode.WEIGHT_CLIPPING,
                                clip_c=0.01)
    config = AdversaryConfig(steps=3, minibatch=16, lr=1e-2, lipschitz_mode="clip")
    stats = disc_update(disc, policy, expert, config)
    assert max(np.abs(p).max() for p in disc.parameters()) <= 0.01
    assert stats.gp_value == 0.0


def test_disc_update_rejects_undersized_batches():
    rng = np.random.default_rng(0)
    policy, expert = _clouds(rng, n=10)
    disc = Discriminator.create(2, 1, hidden=(8,), seed=0)
    with pytest.raises(AdversaryError, match="need at least 32"):
        disc_update(disc, policy, expert, AdversaryConfig(minibatch=32))


@pytest.mark.parametrize("seed", range(10))
def test_single_critic_step_raises_wasserstein_estimate(seed):
    rng = np.random.default_rng(seed)
    policy, expert = _clouds(rng, n=64)
    m = 32
    disc = Discriminator.create(2, 1, hidden=(16,), seed=seed)
    policy_batch, expert_batch = _sample_batches(policy, expert, m, np.random.default_rng(seed))
    before = disc.score(expert_batch).mean() - disc.score(policy_batch).mean()
    disc_update(disc, policy, expert, AdversaryConfig(gp_lambda=0.0, steps=1, minibatch=m, lr=1e-4),
                rng=np.random.default_rng(seed))
    after = disc.score(expert_batch).mean() - disc.score(policy_batch).mean()
    assert after >= before


def test_adversary_config_validation():
    assert AdversaryConfig(reward_shape="airl").reward_shape is RewardShape.LINEAR
    with pytest.raises(ValueError, match="gp_lambda"):
        AdversaryConfig(gp_lambda=-1.0)


def test_gail_reward_and_objective():
    assert gail_reward(0.0) == pytest.approx(np.log(2.0))
    assert gail_reward(0.0) > 0.0
    assert np.isfinite(gail_reward(-1e3))
    assert gail_objective([0.0, 0.0], [0.0]).item() == pytest.approx(2.0 * np.log(0.5))


def test_gail_discriminator_learns_to_separate():
    rng = np.random.default_rng(3)
    policy, expert = _clouds(rng)
    disc = Discriminator.create(2, 1, hidden=(16,), seed=0)
    stats = gail_disc_update(disc, policy, expert, AdversaryConfig(steps=300, minibatch=32, lr=1e-2),
                             rng=np.random.default_rng(4))
    held_policy, held_expert = _clouds(np.random.default_rng(5), n=64)
    sigmoid = lambda x: 1.0 / (1.0 + np.exp(-x))  # noqa: E731
    assert sigmoid(disc.score(held_policy)).mean() > 0.8
    assert sigmoid(disc.score(held_expert)).mean() < 0.2
    assert stats.gp_value == 0.0
    assert stats.wd_estimate < 0.0


def test_label_rewards_use_the_frozen_critic():
    disc = Discriminator.create(2, 1, hidden=(8,), seed=0)
    pairs = np.random.default_rng(0).normal(size=(5, 3))
    before = [p.copy() for p in disc.parameters()]
    assert_allclose(label_rewards(disc, pairs, "exp"), np.exp(disc.score(pairs)))
    assert_allclose(label_rewards(disc, pairs, None, gail=True), gail_reward(disc.score(pairs)))
    for saved, current in zip(before, disc.parameters()):
        assert_allclose(current, saved, rtol=0, atol=0)
