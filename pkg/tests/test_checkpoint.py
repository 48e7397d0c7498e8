import struct

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.core.actors import load_actor, load_policy_checkpoint, save_policy_checkpoint
from src.core.nets import GaussianPolicy
from src.core.rollout import RunningNormalizer
from src.utils.checkpoint import CheckpointFormatError, read_tensors, write_tensors


def test_tensors_round_trip(tmp_path):
    tensors = [np.arange(6.0).reshape(2, 3), np.array([[-1.5]]), np.array(2.0)]
    write_tensors(tmp_path / "t.wdnp", tensors)
    loaded = read_tensors(tmp_path / "t.wdnp")
    assert [t.shape for t in loaded] == [(2, 3), (1, 1), ()]
    for a, b in zip(tensors, loaded):
        assert_allclose(a, b, rtol=0, atol=0)


@pytest.fixture
def blob(tmp_path):
    write_tensors(tmp_path / "ok.wdnp", [np.ones((2, 2))])
    return (tmp_path / "ok.wdnp").read_bytes()


def _corrupt(tmp_path, data):
    path = tmp_path / "bad.wdnp"
    path.write_bytes(data)
    return path


def test_bad_magic(tmp_path, blob):
    with pytest.raises(CheckpointFormatError, match="bad magic") as info:
        read_tensors(_corrupt(tmp_path, b"ABCD" + blob[4:]))
    assert info.value.offset == 0


def test_bad_version(tmp_path, blob):
    with pytest.raises(CheckpointFormatError, match="unsupported version 2") as info:
        read_tensors(_corrupt(tmp_path, blob[:4] + struct.pack("<I", 2) + blob[8:]))
    assert info.value.offset == 4


def test_truncated_data(tmp_path, blob):
    with pytest.raises(CheckpointFormatError, match="truncated while reading data of tensor 0") as info:
        read_tensors(_corrupt(tmp_path, blob[:-8]))
    assert info.value.offset == 4 + 8 + 4 + 8


def test_trailing_bytes(tmp_path, blob):
    with pytest.raises(CheckpointFormatError, match="1 trailing bytes"):
        read_tensors(_corrupt(tmp_path, blob + b"\x00"))


def test_policy_checkpoint_round_trip(tmp_path):
    policy = GaussianPolicy.create(4, 2, hidden=(8, 8), seed=3)
    policy.log_std[...] = [[-0.5, 0.25]]
    normalizer = RunningNormalizer(4)
    normalizer.update(np.random.default_rng(0).normal(size=(50, 4)))
    path = save_policy_checkpoint(tmp_path / "policy.wdnp", policy, normalizer)

    loaded, frozen = load_policy_checkpoint(path)
    assert frozen.frozen
    assert frozen.count == pytest.approx(normalizer.count)
    assert_allclose(loaded.log_std, policy.log_std)
    assert loaded.mean_net.spec.hidden == (8, 8)

    obs = np.array([0.3, -0.2, 0.05, 0.0])
    expected = policy.forward(normalizer.normalize(obs))[0]
    assert_allclose(load_actor(path)(obs), expected, rtol=0, atol=0)


def test_non_policy_checkpoint_is_rejected(tmp_path):
    write_tensors(tmp_path / "value.wdnp", [np.ones((4, 8)), np.zeros((1, 8))])
    with pytest.raises(CheckpointFormatError, match="expected a policy checkpoint"):
        load_policy_checkpoint(tmp_path / "value.wdnp")
