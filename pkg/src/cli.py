"""
Command line interface: expert training and recording, training runs,
evaluation, sweeps and plots.
"""

import argparse
import logging
from dataclasses import replace
from pathlib import Path
from typing import Dict

from .core.actors import load_actor
from .core.demos import save_demos
from .core.envs import ENVIRONMENTS, make_env, true_return
from .core.expert import record_expert_demos, train_expert
from .core.sweep_engine import SweepEngine
from .core.training import run_training
from .utils.config_manager import ALGORITHMS, CONFIG_KEYS, ConfigManager, RunConfig, parse_overrides
from .utils.plotting import emit_plot

logger = logging.getLogger(__name__)

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")
FLAG_ALIASES = {"total_steps": ["--steps"]}
FLAG_CHOICES = {"algo": ALGORITHMS, "env": tuple(sorted(ENVIRONMENTS)), "lipschitz": ("gp", "clip")}
HANDLED_ERRORS = (ValueError, RuntimeError, KeyError, OSError, ArithmeticError)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("run settings (override --config)")
    for key in CONFIG_KEYS:
        flags = [f"--{key.name.replace('_', '-')}", *FLAG_ALIASES.get(key.name, [])]
        group.add_argument(*flags, dest=f"cfg_{key.name}", default=None, metavar=key.name.upper(),
                           choices=FLAG_CHOICES.get(key.name), help=key.help)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wdail", description="Adversarial imitation learning lab")
    parser.add_argument("--log-level", choices=LOG_LEVELS, default=None,
                        help="override log_level from config/app_config.json")
    parser.add_argument("--config-dir", default="config", help="directory holding app_config.json")
    commands = parser.add_subparsers(dest="command", required=True)

    expert = commands.add_parser("expert", help="train experts or record demonstrations")
    expert_commands = expert.add_subparsers(dest="expert_command", required=True)
    expert_train = expert_commands.add_parser("train", help="PPO on the true reward")
    expert_train.add_argument("--env", required=True, choices=sorted(ENVIRONMENTS))
    expert_train.add_argument("--seed", type=int, default=0)
    expert_train.add_argument("--out", required=True, help="checkpoint path")
    expert_train.add_argument("--target", type=float, default=None, help="evaluation return to reach")
    expert_train.add_argument("--max-iterations", type=int, default=None)

    record = expert_commands.add_parser("record", help="record demonstrations")
    record.add_argument("--env", required=True, choices=sorted(ENVIRONMENTS))
    source = record.add_mutually_exclusive_group(required=True)
    source.add_argument("--ckpt", help="policy checkpoint")
    source.add_argument("--scripted", action="store_true", help="scripted PointMass controller")
    record.add_argument("--n-traj", type=int, required=True)
    record.add_argument("--seed", type=int, default=0)
    record.add_argument("--out", required=True, help="demonstration file (.wdil)")

    train = commands.add_parser("train", help="run one experiment")
    train.add_argument("--config", help="key = value run file")
    train.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override any run key (repeatable)")
    _add_config_flags(train)

    evaluate = commands.add_parser("eval", help="evaluate a policy checkpoint")
    evaluate.add_argument("--ckpt", required=True)
    evaluate.add_argument("--env", required=True, choices=sorted(ENVIRONMENTS))
    evaluate.add_argument("--episodes", type=int, default=10)
    evaluate.add_argument("--seed", type=int, default=0)

    sweep = commands.add_parser("sweep", help="run a reward-shape / trajectory-count / seed grid")
    sweep.add_argument("--config", required=True, help="key = value sweep file")

    plot = commands.add_parser("plot", help="plot normalized score curves")
    plot.add_argument("--out", required=True, help="SVG output path")
    plot.add_argument("--label", action="append", default=None,
                      help="series label per metrics file (repeat in file order)")
    plot.add_argument("metrics", nargs="+", help="metrics.csv files")
    return parser


def resolve_run_config(args: argparse.Namespace, config_manager: ConfigManager) -> RunConfig:
    """--config file, then dedicated flags, then --set overrides."""
    config = config_manager.load_run_config(args.config) if args.config else RunConfig()
    flags: Dict[str, str] = {key.name: getattr(args, f"cfg_{key.name}") for key in CONFIG_KEYS
                             if getattr(args, f"cfg_{key.name}") is not None}
    if flags:
        config = config.with_overrides(flags, source="command line")
    overrides = parse_overrides(args.set)
    if overrides:
        config = config.with_overrides(overrides)
    return config


def _cmd_expert(args: argparse.Namespace) -> int:
    if args.expert_command == "train":
        path = train_expert(args.env, args.out, seed=args.seed, target_score=args.target,
                            max_iterations=args.max_iterations)
        print(f"Expert checkpoint: {path}")
        return 0

    dataset = record_expert_demos(args.env, args.n_traj, seed=args.seed,
                                  checkpoint=None if args.scripted else args.ckpt)
    save_demos(dataset, args.out)
    print(f"Recorded {dataset.n_trajectories} trajectories ({len(dataset)} pairs), "
          f"mean return {dataset.mean_return:.3f}: {args.out}")
    return 0


def _cmd_train(args: argparse.Namespace, config_manager: ConfigManager, app_config: Dict) -> int:
    config = resolve_run_config(args, config_manager)
    if config.out == RunConfig.out:
        name = f"{config.algo}_{config.env}_seed{config.seed}"
        config = replace(config, out=str(Path(app_config.get("output_root", "runs")) / name))
    if config.total_steps == 0:
        logger.info("Step budget is 0; writing an empty metrics file")
    run_dir = run_training(config)
    print(f"Run directory: {run_dir}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    actor = load_actor(args.ckpt)
    mean_return = true_return(make_env(args.env), actor, args.episodes, args.seed)
    print(f"Mean return over {args.episodes} episodes: {mean_return:.6f}")
    return 0


def _cmd_sweep(args: argparse.Namespace, config_manager: ConfigManager, app_config: Dict) -> int:
    sweep = config_manager.load_sweep_config(args.config)

    def progress(percent: int, message: str) -> None:
        logger.info(f"[{percent:3d}%] {message}")

    results = SweepEngine(app_config, sweep).run(progress_callback=progress)
    if not results["success"]:
        for error in results["errors"]:
            logger.error(error)
        return 1
    print(f"Sweep finished: {results['completed_cells']}/{results['total_cells']} cells succeeded")
    print(f"Aggregate: {results['aggregate_path']}")
    print(f"Summary: {results['summary_path']}")
    if results.get("plot_path"):
        print(f"Plot: {results['plot_path']}")
    return 0


def _cmd_plot(args: argparse.Namespace, app_config: Dict) -> int:
    path = emit_plot(args.metrics, args.out, labels=args.label, dpi=app_config.get("plot_dpi", 100))
    print(f"Plot: {path}")
    return 0


def run(args: argparse.Namespace, app_config: Dict, config_manager: ConfigManager) -> int:
    """Dispatch a parsed command; library errors become exit status 1."""
    try:
        if args.command == "expert":
            return _cmd_expert(args)
        if args.command == "train":
            return _cmd_train(args, config_manager, app_config)
        if args.command == "eval":
            return _cmd_eval(args)
        if args.command == "sweep":
            return _cmd_sweep(args, config_manager, app_config)
        if args.command == "plot":
            return _cmd_plot(args, app_config)
    except HANDLED_ERRORS as e:
        logger.error(f"{args.command} failed: {e}")
        return 1
    raise ValueError(f"unknown command {args.command}")

