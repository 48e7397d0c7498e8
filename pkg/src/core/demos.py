"""
Expert demonstration datasets and their on-disk WDIL format.

Layout, all values little-endian:
    b"WDIL" | u32 version=1 | u32 obs_dim | u32 act_dim |
    u64 n_transitions | u64 n_trajectories |
    u64 boundaries[n_trajectories] | f64 returns[n_trajectories] |
    n_transitions x (f64 obs[obs_dim], f64 act[act_dim], u8 done)
"""

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Union

import numpy as np

from .envs import Actor, ToyEnv
from .rollout import RunningNormalizer

logger = logging.getLogger(__name__)

MAGIC = b"WDIL"
VERSION = 1
MAX_TRAJECTORY_PAIRS = 1024
HEADER = struct.Struct("<4sIIIQQ")


class DemoFormatError(ValueError):
    """Raised when a demonstration file is malformed."""

    def __init__(self, path: Union[str, Path], offset: int, message: str):
        self.path = str(path)
        self.offset = offset
        super().__init__(f"{path}: byte {offset}: {message}")


def record_dtype(obs_dim: int, act_dim: int) -> np.dtype:
    return np.dtype([("obs", "<f8", (obs_dim,)), ("act", "<f8", (act_dim,)), ("done", "u1")])


@dataclass
class DemoDataset:
    """
    Raw (unnormalized) expert states with the actions the environment applied.

    ``starts`` holds the first transition index of every trajectory and
    ``returns`` its undiscounted true return.
    """

    obs_dim: int
    act_dim: int
    obs: np.ndarray
    actions: np.ndarray
    dones: np.ndarray
    starts: List[int] = field(default_factory=list)
    returns: np.ndarray = None

    def __post_init__(self):
        self.obs = np.asarray(self.obs, dtype=np.float64).reshape(-1, self.obs_dim)
        self.actions = np.asarray(self.actions, dtype=np.float64).reshape(-1, self.act_dim)
        self.dones = np.asarray(self.dones, dtype=bool).reshape(-1)
        self.starts = [int(s) for s in self.starts]
        self.returns = np.asarray(self.returns if self.returns is not None else [], dtype=np.float64)
        self.validate()

    def validate(self) -> None:
        n = len(self.obs)
        if len(self.actions) != n or len(self.dones) != n:
            raise ValueError(f"demo columns differ in length: {n} obs, {len(self.actions)} actions, "
                             f"{len(self.dones)} done flags")
        if len(self.returns) != len(self.starts):
            raise ValueError(f"{len(self.starts)} trajectories but {len(self.returns)} returns")
        if n and (not self.starts or self.starts[0] != 0):
            raise ValueError("first trajectory boundary must be 0")
        if any(b <= a for a, b in zip(self.starts[:-1], self.starts[1:])):
            raise ValueError(f"trajectory boundaries must be strictly increasing: {self.starts}")
        if self.starts and self.starts[-1] >= n:
            raise ValueError(f"boundary {self.starts[-1]} lies past the last transition ({n})")
        longest = max(self.trajectory_lengths(), default=0)
        if longest > MAX_TRAJECTORY_PAIRS:
            raise ValueError(f"trajectory of {longest} pairs exceeds the cap of {MAX_TRAJECTORY_PAIRS}")

    def __len__(self) -> int:
        return len(self.obs)

    @property
    def n_trajectories(self) -> int:
        return len(self.starts)

    def trajectory_lengths(self) -> List[int]:
        bounds = [*self.starts, len(self)]
        return [b - a for a, b in zip(bounds[:-1], bounds[1:])]

    @property
    def mean_return(self) -> float:
        return float(np.mean(self.returns)) if len(self.returns) else float("nan")

    def subset(self, n_trajectories: int) -> "DemoDataset":
        """The first ``n_trajectories`` trajectories."""
        if not 1 <= n_trajectories <= self.n_trajectories:
            raise ValueError(
                f"requested {n_trajectories} trajectories, dataset holds {self.n_trajectories}")
        end = self.starts[n_trajectories] if n_trajectories < self.n_trajectories else len(self)
        return DemoDataset(self.obs_dim, self.act_dim, self.obs[:end], self.actions[:end],
                           self.dones[:end], self.starts[:n_trajectories],
                           self.returns[:n_trajectories])

    def pairs(self, normalizer: RunningNormalizer) -> np.ndarray:
        """Normalized states next to actions, the discriminator's input rows."""
        return np.concatenate([normalizer.normalize(self.obs), self.actions], axis=1)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DemoDataset):
            return NotImplemented
        return (self.obs_dim == other.obs_dim and self.act_dim == other.act_dim
                and self.starts == other.starts
                and np.array_equal(self.obs, other.obs)
                and np.array_equal(self.actions, other.actions)
                and np.array_equal(self.dones, other.dones)
                and np.array_equal(self.returns, other.returns))


def encode_demos(dataset: DemoDataset) -> bytes:
    records = np.zeros(len(dataset), dtype=record_dtype(dataset.obs_dim, dataset.act_dim))
    records["obs"] = dataset.obs
    records["act"] = dataset.actions
    records["done"] = dataset.dones
    return b"".join([
        HEADER.pack(MAGIC, VERSION, dataset.obs_dim, dataset.act_dim, len(dataset), dataset.n_trajectories),
        np.asarray(dataset.starts, dtype="<u8").tobytes(),
        np.asarray(dataset.returns, dtype="<f8").tobytes(),
        records.tobytes(),
    ])


def save_demos(dataset: DemoDataset, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_demos(dataset))
    logger.info(f"Saved {dataset.n_trajectories} trajectories ({len(dataset)} pairs) to {path}")
    return path


def load_demos(path: Union[str, Path]) -> DemoDataset:
    """
    Read a WDIL demonstration file.

    Raises:
        DemoFormatError: On bad magic, unsupported version, truncation,
            trailing bytes or inconsistent trajectory boundaries
    """
    blob = Path(path).read_bytes()
    if len(blob) < HEADER.size:
        raise DemoFormatError(path, len(blob), f"truncated header (need {HEADER.size} bytes, have {len(blob)})")
    magic, version, obs_dim, act_dim, n_transitions, n_trajectories = HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise DemoFormatError(path, 0, f"bad magic {magic!r}, expected {MAGIC!r} (\"WDIL\")")
    if version != VERSION:
        raise DemoFormatError(path, 4, f"unsupported version {version}, expected {VERSION}")
    if obs_dim < 1 or act_dim < 1:
        raise DemoFormatError(path, 8, f"invalid dimensions obs_dim={obs_dim} act_dim={act_dim}")

    dtype = record_dtype(obs_dim, act_dim)
    sections = [
        ("trajectory boundaries", 8 * n_trajectories),
        ("trajectory returns", 8 * n_trajectories),
        ("transition records", dtype.itemsize * n_transitions),
    ]
    offset = HEADER.size
    chunks = []
    for name, size in sections:
        if offset + size > len(blob):
            raise DemoFormatError(
                path, offset, f"truncated while reading {name} (need {size} bytes, have {len(blob) - offset})")
        chunks.append(blob[offset:offset + size])
        offset += size
    if offset != len(blob):
        raise DemoFormatError(path, offset, f"{len(blob) - offset} trailing bytes")

    starts = np.frombuffer(chunks[0], dtype="<u8").astype(np.int64).tolist()
    returns = np.frombuffer(chunks[1], dtype="<f8").astype(np.float64)
    records = np.frombuffer(chunks[2], dtype=dtype)
    try:
        return DemoDataset(obs_dim, act_dim, records["obs"].copy(), records["act"].copy(),
                           records["done"].astype(bool), starts, returns)
    except ValueError as exc:
        raise DemoFormatError(path, HEADER.size, str(exc)) from exc


def record_demos(env: ToyEnv, actor: Actor, n_trajectories: int, seed: int) -> DemoDataset:
    """
    Record ``n_trajectories`` episodes of ``actor`` (episode i resets with
    ``seed + i``), keeping at most 1024 pairs per trajectory.
    """
    if n_trajectories < 1:
        raise ValueError(f"n_trajectories must be >= 1, got {n_trajectories}")
    obs_rows, act_rows, done_rows, starts, returns = [], [], [], [], []
    for episode in range(n_trajectories):
        starts.append(len(obs_rows))
        obs = env.reset(seed + episode)
        total = 0.0
        for t in range(MAX_TRAJECTORY_PAIRS):
            action = env.clip_action(actor(obs))
            next_obs, reward, done = env.step(action)
            obs_rows.append(obs)
            act_rows.append(action)
            done_rows.append(done or t == MAX_TRAJECTORY_PAIRS - 1)
            total += reward
            obs = next_obs
            if done:
                break
        returns.append(total)
        logger.debug(f"Recorded trajectory {episode}: {len(obs_rows) - starts[-1]} pairs, return {total:.3f}")

    spec = env.spec
    return DemoDataset(spec.obs_dim, spec.act_dim, np.array(obs_rows), np.array(act_rows),
                       np.array(done_rows), starts, np.array(returns))
