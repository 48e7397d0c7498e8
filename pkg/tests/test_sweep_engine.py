from dataclasses import replace
from pathlib import Path

import pandas as pd
import pytest

from src.core.adversary import AdversaryConfig, RewardShape
from src.core.sweep_engine import (AGGREGATE_FILE, EXCEL_FILE, NO_SHAPE, PLOT_FILE, SUMMARY_FILE, SweepEngine,
                                   build_cells, run_cell)
from src.utils.config_manager import SweepConfig

APP_CONFIG = {"max_workers": 4, "plot_dpi": 50}


@pytest.fixture
def sweep_base(tiny_config, tmp_path):
    return replace(tiny_config, demos=str(tmp_path / "sweep_demos" / "pointmass.wdil"), n_traj=1,
                   out=str(tmp_path / "sweep"))


def test_cells_cover_the_grid(sweep_base, tmp_path):
    sweep = SweepConfig(base=sweep_base, shapes=[RewardShape.SIGMOID, RewardShape.EXP], n_traj=[1, 5],
                        seeds=[0, 1, 2], algos=["wdail", "gail", "ppo-true-reward"])
    cells = build_cells(sweep, tmp_path / "grid")
    by_algo = {algo: [c for c in cells if c.algo == algo] for algo in sweep.algos}
    assert len(by_algo["wdail"]) == 2 * 2 * 3
    assert len(by_algo["gail"]) == 2 * 3
    assert len(by_algo["ppo-true-reward"]) == 3
    assert {c.shape for c in by_algo["gail"]} == {NO_SHAPE}
    exp_cell = next(c for c in by_algo["wdail"] if c.shape == "exp" and c.n_traj == 5 and c.seed == 2)
    assert exp_cell.config.reward_shape is RewardShape.EXP
    assert exp_cell.config.n_traj == 5
    assert exp_cell.config.seed == 2
    assert Path(exp_cell.config.out) == tmp_path / "grid" / "wdail_exp_n5_seed2"
    assert len({c.config.out for c in cells}) == len(cells)


def test_failed_cell_is_reported_not_raised(sweep_base):
    sweep = SweepConfig(base=sweep_base)
    cell = build_cells(sweep, Path(sweep_base.out))[0]
    result = run_cell(cell)
    assert result["status"] == "Failed"
    assert "does not exist" in result["error"]


def test_sweep_writes_reports(sweep_base):
    sweep = SweepConfig(base=sweep_base, shapes=[RewardShape.SIGMOID, RewardShape.LINEAR], n_traj=[1, 2],
                        seeds=[0], algos=["wdail", "bc"], record_missing=True)
    progress = []
    results = SweepEngine(APP_CONFIG, sweep).run(lambda percent, message: progress.append(percent))

    assert results["success"], results["errors"]
    assert results["total_cells"] == 6
    assert results["completed_cells"] == 6
    assert Path(sweep_base.demos).exists()
    assert progress[0] == 10 and progress[-1] == 100
    assert progress == sorted(progress)

    root = Path(sweep_base.out)
    aggregate = pd.read_csv(root / AGGREGATE_FILE)
    assert len(aggregate) == 6
    assert set(aggregate["status"]) == {"Success"}
    summary = pd.read_csv(root / SUMMARY_FILE)
    assert len(summary) == 6
    assert (root / EXCEL_FILE).exists()
    assert (root / PLOT_FILE).read_bytes().startswith(b"<?xml")


def test_failing_cells_still_produce_a_report(sweep_base, pointmass_demos):
    from src.core.demos import save_demos

    save_demos(pointmass_demos, sweep_base.demos)
    base = replace(sweep_base, adversary=AdversaryConfig(steps=1, minibatch=64))
    results = SweepEngine(APP_CONFIG, SweepConfig(base=base, n_traj=[1], seeds=[0, 1])).run()
    assert results["success"]
    assert results["failed_cells"] == 2
    assert all("need at least 64" in error for error in results["errors"])
    assert results["plot_path"] is None
    assert (Path(base.out) / SUMMARY_FILE).exists()


def test_missing_demonstrations_fail_the_sweep(sweep_base):
    results = SweepEngine(APP_CONFIG, SweepConfig(base=sweep_base)).run()
    assert not results["success"]
    assert "does not exist" in results["errors"][0]


def test_worker_count_is_capped_by_app_config(sweep_base):
    engine = SweepEngine({"max_workers": 2}, SweepConfig(base=sweep_base, workers=8))
    assert engine.max_workers == 2
