"""
Configuration manager for the imitation learning lab.

Application settings come from ``config/app_config.json``. Run and sweep
settings are flat UTF-8 ``key = value`` files; the key table below is the
single list of run keys used for parsing, ``--set`` overrides, CLI flags and
the resolved ``config.txt`` written into every run directory.
"""

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Mapping, Optional, Tuple, Union

from ..core.adversary import AdversaryConfig, RewardShape
from ..core.bc import BcConfig
from ..core.envs import ENVIRONMENTS
from ..core.nets import LipschitzMode
from ..core.ppo import PpoConfig
from ..core.rollout import RolloutConfig

logger = logging.getLogger(__name__)

ALGORITHMS = ("wdail", "gail", "bc", "ppo-true-reward")
RESOLVED_CONFIG_NAME = "config.txt"


class ConfigError(ValueError):
    """Raised for unknown, duplicate or unparsable configuration entries."""

    def __init__(self, source: Union[str, Path], line: int, message: str):
        self.source = str(source)
        self.line = line
        location = f"{source}:{line}" if line else str(source)
        super().__init__(f"{location}: {message}")


def _parse_int(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        value = float(text)
        if not value.is_integer():
            raise
        return int(value)


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected true/false, got '{text}'")


def _parse_hidden(text: str) -> Tuple[int, ...]:
    sizes = tuple(int(part) for part in text.replace(" ", "").split(",") if part)
    if not sizes:
        raise ValueError("expected comma-separated layer widths")
    return sizes


def _parse_optional_float(text: str) -> Optional[float]:
    return None if text.strip() in ("", "none") else float(text)


def _parse_optional_str(text: str) -> Optional[str]:
    return None if text.strip() in ("", "none") else text.strip()


def _format(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (RewardShape, LipschitzMode)):
        return value.value
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


@dataclass(frozen=True)
class ConfigKey:
    name: str
    section: Optional[str]
    attr: str
    parse: Callable[[str], Any]
    help: str = ""


CONFIG_KEYS: Tuple[ConfigKey, ...] = (
    ConfigKey("env", None, "env", str, "environment id"),
    ConfigKey("algo", None, "algo", str, "wdail | gail | bc | ppo-true-reward"),
    ConfigKey("reward_shape", "adversary", "reward_shape", RewardShape.parse, "imitation reward shape"),
    ConfigKey("demos", None, "demos", _parse_optional_str, "demonstration file"),
    ConfigKey("n_traj", None, "n_traj", _parse_int, "expert trajectories used from the demo file"),
    ConfigKey("seed", None, "seed", _parse_int, "run seed"),
    ConfigKey("total_steps", None, "total_steps", _parse_int, "environment-step budget"),
    ConfigKey("eval_interval", None, "eval_interval", _parse_int, "iterations between evaluations"),
    ConfigKey("eval_episodes", None, "eval_episodes", _parse_int, "episodes per evaluation"),
    ConfigKey("out", None, "out", str, "run output directory"),
    ConfigKey("rollout_steps", "rollout", "steps", _parse_int, "transitions per iteration"),
    ConfigKey("gamma", "rollout", "gamma", float, "discount"),
    ConfigKey("gae_lambda", "rollout", "gae_lambda", float, "GAE lambda"),
    ConfigKey("clip_eps", "ppo", "clip_eps", float, "PPO clip range"),
    ConfigKey("ppo_epochs", "ppo", "epochs", _parse_int, "PPO epochs per iteration"),
    ConfigKey("minibatch", "ppo", "minibatch", _parse_int, "PPO minibatch size"),
    ConfigKey("lr_policy", "ppo", "lr", float, "policy/value learning rate"),
    ConfigKey("value_coef", "ppo", "value_coef", float, "value loss coefficient"),
    ConfigKey("entropy_coef", "ppo", "entropy_coef", float, "entropy bonus coefficient"),
    ConfigKey("max_grad_norm", "ppo", "max_grad_norm", float, "gradient norm clip"),
    ConfigKey("policy_hidden", None, "policy_hidden", _parse_hidden, "policy layer widths"),
    ConfigKey("value_hidden", None, "value_hidden", _parse_hidden, "value layer widths"),
    ConfigKey("lr_disc", "adversary", "lr", float, "discriminator learning rate"),
    ConfigKey("gp_lambda", "adversary", "gp_lambda", float, "gradient penalty coefficient"),
    ConfigKey("disc_steps", "adversary", "steps", _parse_int, "discriminator updates per iteration"),
    ConfigKey("disc_minibatch", "adversary", "minibatch", _parse_int, "discriminator minibatch"),
    ConfigKey("lipschitz", "adversary", "lipschitz_mode", LipschitzMode, "gp | clip"),
    ConfigKey("clip_c", "adversary", "clip_c", float, "weight clip constant"),
    ConfigKey("disc_hidden", None, "disc_hidden", _parse_hidden, "discriminator layer widths"),
    ConfigKey("bc_epochs", "bc", "epochs", _parse_int, "behavior cloning epochs"),
    ConfigKey("bc_minibatch", "bc", "minibatch", _parse_int, "behavior cloning minibatch"),
    ConfigKey("lr_bc", "bc", "lr", float, "behavior cloning learning rate"),
    ConfigKey("expert_return", None, "expert_return", _parse_optional_float,
              "expert reference return for normalized scores"),
    ConfigKey("record_timing", None, "record_timing", _parse_bool, "fill the wall_ms column"),
)
KEYS_BY_NAME: Dict[str, ConfigKey] = {key.name: key for key in CONFIG_KEYS}

SWEEP_KEYS: Dict[str, Callable[[str], Any]] = {
    "sweep_shapes": lambda text: [RewardShape.parse(s) for s in _split_list(text)],
    "sweep_n_traj": lambda text: [_parse_int(s) for s in _split_list(text)],
    "sweep_seeds": lambda text: [_parse_int(s) for s in _split_list(text)],
    "sweep_algos": lambda text: _split_list(text),
    "sweep_workers": _parse_int,
    "record_missing": _parse_bool,
}


def _split_list(text: str) -> List[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


@dataclass
class RunConfig:
    """Fully resolved configuration of one experiment."""

    env: str = "pointmass"
    algo: str = "wdail"
    demos: Optional[str] = None
    n_traj: int = 5
    seed: int = 0
    total_steps: int = 300_000
    eval_interval: int = 1
    eval_episodes: int = 5
    out: str = "runs/run"
    policy_hidden: Tuple[int, ...] = (64, 64)
    value_hidden: Tuple[int, ...] = (64, 64)
    disc_hidden: Tuple[int, ...] = (100,)
    expert_return: Optional[float] = None
    record_timing: bool = False
    rollout: RolloutConfig = field(default_factory=RolloutConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    adversary: AdversaryConfig = field(default_factory=AdversaryConfig)
    bc: BcConfig = field(default_factory=BcConfig)

    def __post_init__(self):
        if self.algo not in ALGORITHMS:
            raise ValueError(f"unknown algorithm '{self.algo}', expected one of {list(ALGORITHMS)}")
        if self.env not in ENVIRONMENTS:
            raise ValueError(f"unknown environment '{self.env}', expected one of {sorted(ENVIRONMENTS)}")
        if self.total_steps < 0:
            raise ValueError(f"total_steps must be >= 0, got {self.total_steps}")
        if self.n_traj < 1:
            raise ValueError(f"n_traj must be >= 1, got {self.n_traj}")
        if self.eval_interval < 1 or self.eval_episodes < 1:
            raise ValueError("eval_interval and eval_episodes must be >= 1")

    @property
    def reward_shape(self) -> RewardShape:
        return self.adversary.reward_shape

    @property
    def uses_demos(self) -> bool:
        return self.algo in ("wdail", "gail", "bc")

    def to_mapping(self) -> Dict[str, str]:
        """Every key of the table, in table order, formatted as text."""
        values = {}
        for key in CONFIG_KEYS:
            owner = self if key.section is None else getattr(self, key.section)
            values[key.name] = _format(getattr(owner, key.attr))
        return values

    @classmethod
    def from_mapping(cls, values: Mapping[str, str], source: str = "<config>",
                     lines: Optional[Mapping[str, int]] = None) -> "RunConfig":
        """
        Build a config from textual values; missing keys keep their defaults.

        Raises:
            ConfigError: For unknown keys or values that fail to parse or validate
        """
        lines = lines or {}
        run_kwargs: Dict[str, Any] = {}
        sections: Dict[str, Dict[str, Any]] = {"rollout": {}, "ppo": {}, "adversary": {}, "bc": {}}
        for name, text in values.items():
            key = KEYS_BY_NAME.get(name)
            if key is None:
                raise ConfigError(source, lines.get(name, 0), f"unknown key '{name}'")
            try:
                parsed = key.parse(text)
            except ValueError as exc:
                raise ConfigError(source, lines.get(name, 0), f"invalid value for '{name}': {exc}") from None
            target = run_kwargs if key.section is None else sections[key.section]
            target[key.attr] = parsed

        try:
            return cls(
                rollout=RolloutConfig(**sections["rollout"]),
                ppo=PpoConfig(**sections["ppo"]),
                adversary=AdversaryConfig(**sections["adversary"]),
                bc=BcConfig(**sections["bc"]),
                **run_kwargs,
            )
        except ValueError as exc:
            raise ConfigError(source, 0, str(exc)) from None

    def with_overrides(self, overrides: Mapping[str, Any], source: str = "--set") -> "RunConfig":
        merged = self.to_mapping()
        merged.update({name: value if isinstance(value, str) else _format(value)
                       for name, value in overrides.items()})
        return RunConfig.from_mapping(merged, source)

    def render(self) -> str:
        return "".join(f"{name} = {value}\n" for name, value in self.to_mapping().items())

    def write(self, directory: Union[str, Path]) -> Path:
        path = Path(directory) / RESOLVED_CONFIG_NAME
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(self.render())
        return path


@dataclass
class SweepConfig:
    base: RunConfig
    shapes: List[RewardShape] = field(default_factory=lambda: [RewardShape.SIGMOID])
    n_traj: List[int] = field(default_factory=lambda: [5])
    seeds: List[int] = field(default_factory=lambda: [0])
    algos: List[str] = field(default_factory=lambda: ["wdail"])
    workers: int = 1
    record_missing: bool = False

    def __post_init__(self):
        unknown = [a for a in self.algos if a not in ALGORITHMS]
        if unknown:
            raise ValueError(f"unknown sweep algorithms {unknown}")
        if not (self.shapes and self.n_traj and self.seeds and self.algos):
            raise ValueError("sweep axes must be non-empty")
        if self.workers < 1:
            raise ValueError(f"sweep_workers must be >= 1, got {self.workers}")


def read_key_values(path: Union[str, Path], allowed: Iterable[str]) -> Tuple[Dict[str, str], Dict[str, int]]:
    """
    Read ``key = value`` lines; ``#`` starts a comment.

    Returns:
        Tuple of (values, line number per key)

    Raises:
        ConfigError: For malformed lines, unknown keys or duplicates
    """
    allowed = set(allowed)
    values: Dict[str, str] = {}
    lines: Dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as f:
        for number, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(path, number, f"expected 'key = value', got '{raw.strip()}'")
            name, value = (part.strip() for part in line.split("=", 1))
            if name not in allowed:
                raise ConfigError(path, number, f"unknown key '{name}'")
            if name in values:
                raise ConfigError(path, number, f"duplicate key '{name}' (first set on line {lines[name]})")
            values[name] = value
            lines[name] = number
    return values, lines


def parse_overrides(items: Iterable[str]) -> Dict[str, str]:
    """Parse ``key=value`` strings from ``--set``."""
    overrides = {}
    for item in items:
        if "=" not in item:
            raise ConfigError("--set", 0, f"expected key=value, got '{item}'")
        name, value = (part.strip() for part in item.split("=", 1))
        if name not in KEYS_BY_NAME:
            raise ConfigError("--set", 0, f"unknown key '{name}'")
        overrides[name] = value
    return overrides


class ConfigManager:
    """Loads application settings and run/sweep configuration files."""

    def __init__(self, config_dir: str = "config"):
        self.config_dir = config_dir
        self.app_config_path = os.path.join(config_dir, "app_config.json")

    def load_app_config(self) -> Dict[str, Any]:
        """Load application configuration, filling missing entries with defaults."""
        config = self._get_default_app_config()
        try:
            with open(self.app_config_path, "r", encoding="utf-8") as f:
                config.update(json.load(f))
        except FileNotFoundError:
            logger.debug(f"{self.app_config_path} not found, using defaults")
        return config

    def load_run_config(self, path: Union[str, Path]) -> RunConfig:
        values, lines = read_key_values(path, KEYS_BY_NAME)
        return RunConfig.from_mapping(values, str(path), lines)

    def load_sweep_config(self, path: Union[str, Path]) -> SweepConfig:
        values, lines = read_key_values(path, [*KEYS_BY_NAME, *SWEEP_KEYS])
        run_values = {k: v for k, v in values.items() if k in KEYS_BY_NAME}
        base = RunConfig.from_mapping(run_values, str(path), lines)

        sweep_kwargs = {}
        names = {"sweep_shapes": "shapes", "sweep_n_traj": "n_traj", "sweep_seeds": "seeds",
                 "sweep_algos": "algos", "sweep_workers": "workers", "record_missing": "record_missing"}
        for key, parse in SWEEP_KEYS.items():
            if key in values:
                try:
                    sweep_kwargs[names[key]] = parse(values[key])
                except ValueError as exc:
                    raise ConfigError(path, lines[key], f"invalid value for '{key}': {exc}") from None
        if "shapes" not in sweep_kwargs:
            sweep_kwargs["shapes"] = [base.reward_shape]
        if "n_traj" not in sweep_kwargs:
            sweep_kwargs["n_traj"] = [base.n_traj]
        if "seeds" not in sweep_kwargs:
            sweep_kwargs["seeds"] = [base.seed]
        try:
            return SweepConfig(base=base, **sweep_kwargs)
        except ValueError as exc:
            raise ConfigError(path, 0, str(exc)) from None

    def _get_default_app_config(self) -> Dict[str, Any]:
        """Get default application configuration."""
        return {
            "app_title": "WDAIL Lab",
            "version": "1.0.0",
            "log_level": "INFO",
            "max_workers": 4,
            "output_root": "runs",
            "plot_dpi": 100,
        }
