import math

import pytest

from src.utils.metrics import METRICS_COLUMNS, MetricsFileError, MetricsLog, read_metrics


def _row(iteration, env_steps, score=0.5, **changes):
    row = {column: 0.0 for column in METRICS_COLUMNS}
    row.update(iteration=iteration, env_steps=env_steps, mean_true_return=-10.0 * iteration,
               normalized_score=score, wall_ms=0)
    row.update(changes)
    return row


def test_log_writes_header_and_rows(tmp_path):
    log = MetricsLog(tmp_path / "run" / "metrics.csv")
    assert log.path.read_text() == ",".join(METRICS_COLUMNS) + "\n"
    log.append(_row(1, 32, 0.25))
    log.append(_row(2, 64, 0.5, policy_loss=-0.125))
    assert log.rows == 2

    raw = log.path.read_bytes()
    assert b"\r\n" not in raw
    assert raw.decode().splitlines()[1].startswith("1,32,-10.0,0.25,")

    frame = read_metrics(log.path)
    assert list(frame.columns) == METRICS_COLUMNS
    assert frame["env_steps"].tolist() == [32, 64]
    assert frame["policy_loss"].tolist() == [0.0, -0.125]


def test_append_rejects_bad_rows(tmp_path):
    log = MetricsLog(tmp_path / "metrics.csv")
    log.append(_row(1, 32))
    with pytest.raises(ValueError, match="env_steps must increase"):
        log.append(_row(2, 32))
    with pytest.raises(ValueError, match="non-finite metrics \\['disc_loss'\\]"):
        log.append(_row(2, 64, disc_loss=math.nan))
    incomplete = _row(2, 64)
    del incomplete["entropy"]
    with pytest.raises(ValueError, match="missing columns \\['entropy'\\]"):
        log.append(incomplete)
    assert log.rows == 1


def test_header_only_file_reads_empty(tmp_path):
    log = MetricsLog(tmp_path / "metrics.csv")
    assert read_metrics(log.path).empty


def _csv(tmp_path, lines):
    path = tmp_path / "metrics.csv"
    path.write_text("\n".join(lines) + "\n")
    return path


def test_wrong_header(tmp_path):
    path = _csv(tmp_path, ["iteration,env_steps", "1,2"])
    with pytest.raises(MetricsFileError, match=r"metrics.csv:1: header") as info:
        read_metrics(path)
    assert info.value.line == 1


def test_non_numeric_value_names_its_line(tmp_path):
    header = ",".join(METRICS_COLUMNS)
    good = ",".join(["1", "32"] + ["0.5"] * (len(METRICS_COLUMNS) - 3) + ["0"])
    bad = ",".join(["2", "64", "oops"] + ["0.5"] * (len(METRICS_COLUMNS) - 4) + ["0"])
    with pytest.raises(MetricsFileError, match=r":3: invalid value 'oops' in column 'mean_true_return'") as info:
        read_metrics(_csv(tmp_path, [header, good, bad]))
    assert info.value.line == 3


def test_non_finite_value_is_rejected(tmp_path):
    header = ",".join(METRICS_COLUMNS)
    row = ",".join(["1", "32", "inf"] + ["0.5"] * (len(METRICS_COLUMNS) - 4) + ["0"])
    with pytest.raises(MetricsFileError, match=":2: invalid value 'inf'"):
        read_metrics(_csv(tmp_path, [header, row]))


def test_ragged_row(tmp_path):
    header = ",".join(METRICS_COLUMNS)
    good = ",".join(["1"] * len(METRICS_COLUMNS))
    ragged = ",".join(["2"] * (len(METRICS_COLUMNS) + 1))
    with pytest.raises(MetricsFileError) as info:
        read_metrics(_csv(tmp_path, [header, good, ragged]))
    assert info.value.line == 3


def test_missing_and_empty_files(tmp_path):
    with pytest.raises(MetricsFileError, match="file not found"):
        read_metrics(tmp_path / "absent.csv")
    (tmp_path / "empty.csv").write_text("")
    with pytest.raises(MetricsFileError, match="file is empty"):
        read_metrics(tmp_path / "empty.csv")
