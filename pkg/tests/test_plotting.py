import pytest

from src.utils.metrics import METRICS_COLUMNS, MetricsLog
from src.utils.plotting import MetricsFileError, default_label, emit_plot, group_series


def _run(tmp_path, name, scores):
    log = MetricsLog(tmp_path / name / "metrics.csv")
    for index, score in enumerate(scores, start=1):
        row = {column: 0.0 for column in METRICS_COLUMNS}
        row.update(iteration=index, env_steps=100 * index, normalized_score=score)
        log.append(row)
    return log.path


def test_default_label_strips_seed_suffix():
    assert default_label("runs/wdail_sigmoid_n5_seed3/metrics.csv") == "wdail_sigmoid_n5"
    assert default_label("runs/gail-seed-0") == "gail"
    assert default_label("runs/bc/metrics.csv") == "bc"


def test_runs_sharing_a_label_are_combined(tmp_path):
    paths = [_run(tmp_path, "wdail_seed0", [0.0, 0.5, 1.0]),
             _run(tmp_path, "wdail_seed1", [0.2, 0.3, 0.6]),
             _run(tmp_path, "gail_seed0", [0.1, 0.1, 0.1])]
    series = group_series(paths)
    assert list(series) == ["wdail", "gail"]
    wdail = series["wdail"]
    assert wdail.index.tolist() == [100, 200, 300]
    assert wdail["mean"].tolist() == pytest.approx([0.1, 0.4, 0.8])
    assert wdail["min"].tolist() == pytest.approx([0.0, 0.3, 0.6])
    assert wdail["max"].tolist() == pytest.approx([0.2, 0.5, 1.0])
    assert series["gail"]["runs"].iloc[0] == 1


def test_explicit_labels(tmp_path):
    paths = [_run(tmp_path, "a", [0.1]), _run(tmp_path, "b", [0.2])]
    assert list(group_series(paths, labels=["x", "x"])) == ["x"]
    with pytest.raises(ValueError, match="1 labels for 2 metrics files"):
        group_series(paths, labels=["x"])
    with pytest.raises(ValueError, match="at least one metrics file"):
        group_series([])


def test_emit_plot_is_byte_identical(tmp_path):
    paths = [_run(tmp_path, "wdail_seed0", [0.0, 0.5]), _run(tmp_path, "wdail_seed1", [0.1, 0.7])]
    first = emit_plot(paths, tmp_path / "a.svg", title="PointMass").read_bytes()
    second = emit_plot(paths, tmp_path / "b.svg", title="PointMass").read_bytes()
    assert first.startswith(b"<?xml")
    assert b"<svg" in first
    assert first == second


def test_malformed_metrics_file_is_reported(tmp_path):
    bad = tmp_path / "bad" / "metrics.csv"
    bad.parent.mkdir()
    bad.write_text("iteration,score\n1,0.5\n")
    with pytest.raises(MetricsFileError, match=":1: header"):
        emit_plot([bad], tmp_path / "out.svg")
    assert not (tmp_path / "out.svg").exists()
