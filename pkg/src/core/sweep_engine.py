"""
Sweep engine that runs a grid of training runs and aggregates their results.
"""

import logging
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

from ..utils.config_manager import RunConfig, SweepConfig
from ..utils.metrics import METRICS_FILE_NAME, read_metrics
from ..utils.plotting import emit_plot
from ..utils.report_writer import ReportWriter, area_under_curve
from .adversary import RewardShape
from .demos import save_demos
from .envs import PointMassEnv
from .expert import record_expert_demos
from .training import run_training

logger = logging.getLogger(__name__)

ProgressCallback = Callable[[int, str], None]
NO_SHAPE = "n/a"
AGGREGATE_FILE = "aggregate.csv"
SUMMARY_FILE = "summary.csv"
EXCEL_FILE = "sweep_report.xlsx"
PLOT_FILE = "curves.svg"


@dataclass(frozen=True)
class SweepCell:
    algo: str
    shape: str
    n_traj: int
    seed: int
    config: RunConfig

    @property
    def name(self) -> str:
        return f"{self.algo}_{self.shape}_n{self.n_traj}_seed{self.seed}"


def build_cells(sweep: SweepConfig, root: Path) -> List[SweepCell]:
    """
    Cross product of the sweep axes. Reward shapes only vary WDAIL; demo
    counts do not vary PPO on the true reward.
    """
    base = sweep.base
    cells = []
    for algo in sweep.algos:
        shapes = [s.value for s in sweep.shapes] if algo == "wdail" else [NO_SHAPE]
        counts = sweep.n_traj if algo != "ppo-true-reward" else [0]
        for shape in shapes:
            for n_traj in counts:
                for seed in sweep.seeds:
                    adversary = base.adversary if shape == NO_SHAPE else replace(
                        base.adversary, reward_shape=RewardShape(shape))
                    name = f"{algo}_{shape}_n{n_traj}_seed{seed}"
                    config = replace(base, algo=algo, seed=seed, n_traj=n_traj or base.n_traj,
                                     adversary=adversary, out=str(root / name))
                    cells.append(SweepCell(algo, shape, n_traj, seed, config))
    return cells


def run_cell(cell: SweepCell) -> Dict[str, Any]:
    """Run one cell; failures are returned in the result, never raised."""
    result = {
        "algo": cell.algo,
        "shape": cell.shape,
        "n_traj": cell.n_traj,
        "seed": cell.seed,
        "final_score": float("nan"),
        "auc": float("nan"),
        "final_return": float("nan"),
        "env_steps": 0,
        "status": "Failed",
        "error": "",
        "run_dir": cell.config.out,
    }
    try:
        run_dir = run_training(cell.config)
        frame = read_metrics(run_dir / METRICS_FILE_NAME)
        if not frame.empty:
            result["final_score"] = float(frame["normalized_score"].iloc[-1])
            result["final_return"] = float(frame["mean_true_return"].iloc[-1])
            result["env_steps"] = int(frame["env_steps"].iloc[-1])
            result["auc"] = area_under_curve(frame["env_steps"].to_numpy(), frame["normalized_score"].to_numpy())
        result["status"] = "Success"
    except Exception as e:
        result["error"] = str(e)
    return result


class SweepEngine:
    """Runs sweep cells sequentially or across worker processes."""

    def __init__(self, app_config: Dict[str, Any], sweep: SweepConfig):
        """
        Args:
            app_config: Application configuration (``max_workers``, ``plot_dpi``)
            sweep: Sweep grid and base run configuration
        """
        self.app_config = app_config
        self.sweep = sweep
        self.root = Path(sweep.base.out)
        self.max_workers = max(1, min(sweep.workers, app_config.get("max_workers", 4)))
        self.report_writer = ReportWriter()

    def run(self, progress_callback: Optional[ProgressCallback] = None) -> Dict[str, Any]:
        """
        Run every cell and write the aggregate CSV, summary CSV, Excel
        workbook and curve plot into the sweep root.

        Returns:
            Dictionary with per-cell results, counts, output paths and errors
        """
        results = {
            "success": False,
            "cells": [],
            "total_cells": 0,
            "completed_cells": 0,
            "failed_cells": 0,
            "errors": [],
        }
        try:
            if progress_callback:
                progress_callback(10, "Preparing demonstrations...")
            self._prepare_demos()

            cells = build_cells(self.sweep, self.root)
            results["total_cells"] = len(cells)
            if progress_callback:
                progress_callback(20, f"Running {len(cells)} cells...")

            results["cells"] = self._run_cells(cells, progress_callback)
            results["completed_cells"] = sum(c["status"] == "Success" for c in results["cells"])
            results["failed_cells"] = results["total_cells"] - results["completed_cells"]
            for cell in results["cells"]:
                if cell["status"] != "Success":
                    results["errors"].append(f"{cell['run_dir']}: {cell['error']}")

            if progress_callback:
                progress_callback(90, "Writing sweep report...")
            results.update(self.write_report(results["cells"]))
            results["success"] = True
        except Exception as e:
            logger.error(f"Sweep error: {e}")
            results["errors"].append(f"Sweep error: {e}")

        if progress_callback:
            progress_callback(100, "Sweep completed")
        return results

    def _prepare_demos(self) -> None:
        base = self.sweep.base
        if not any(a in ("wdail", "gail", "bc") for a in self.sweep.algos):
            return
        if not base.demos:
            raise ValueError("sweep needs a demonstration file (set 'demos')")
        path = Path(base.demos)
        if path.exists():
            return
        if not self.sweep.record_missing or base.env != PointMassEnv.env_id:
            raise FileNotFoundError(f"demonstration file {path} does not exist")
        count = max(self.sweep.n_traj)
        logger.info(f"Recording {count} scripted PointMass trajectories into {path}")
        save_demos(record_expert_demos(base.env, count, seed=base.seed), path)

    def _run_cells(self, cells: List[SweepCell],
                   progress_callback: Optional[ProgressCallback]) -> List[Dict[str, Any]]:
        outcomes = []
        total = len(cells)

        def report(done: int, result: Dict[str, Any]) -> None:
            if result["status"] != "Success":
                logger.warning(f"Sweep cell {result['run_dir']} failed: {result['error']}")
            if progress_callback:
                progress = 20 + int((done / total) * 70)
                progress_callback(progress, f"Finished {Path(result['run_dir']).name} ({done}/{total})")

        if self.max_workers == 1:
            for done, cell in enumerate(cells, start=1):
                outcomes.append(run_cell(cell))
                report(done, outcomes[-1])
            return outcomes

        with ProcessPoolExecutor(max_workers=self.max_workers) as executor:
            future_to_cell = {executor.submit(run_cell, cell): cell for cell in cells}
            done = 0
            for future in as_completed(future_to_cell):
                done += 1
                cell = future_to_cell[future]
                try:
                    result = future.result()
                except Exception as e:
                    result = {"algo": cell.algo, "shape": cell.shape, "n_traj": cell.n_traj, "seed": cell.seed,
                              "final_score": float("nan"), "auc": float("nan"), "final_return": float("nan"),
                              "env_steps": 0, "status": "Failed", "error": str(e), "run_dir": cell.config.out}
                outcomes.append(result)
                report(done, result)
        return outcomes

    def write_report(self, cells: List[Dict[str, Any]]) -> Dict[str, Any]:
        aggregate = self.report_writer.aggregate_frame(cells)
        summary = self.report_writer.summary_frame(aggregate)
        paths = {
            "aggregate_path": self.report_writer.write_csv(aggregate, self.root / AGGREGATE_FILE),
            "summary_path": self.report_writer.write_csv(summary, self.root / SUMMARY_FILE),
            "excel_path": None,
            "plot_path": None,
        }
        if self.report_writer.export_to_excel(aggregate, summary, self.root / EXCEL_FILE):
            paths["excel_path"] = self.root / EXCEL_FILE

        finished = aggregate[aggregate["status"] == "Success"] if not aggregate.empty else aggregate
        metrics = [Path(run_dir) / METRICS_FILE_NAME for run_dir in finished.get("run_dir", [])]
        if metrics:
            paths["plot_path"] = emit_plot(metrics, self.root / PLOT_FILE,
                                           dpi=self.app_config.get("plot_dpi", 100))
        return paths
