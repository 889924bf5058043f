import json
import math

import pandas as pd
import pytest
from pydantic import ValidationError

from reports import (
    ROUND_COLUMNS,
    RoundRecord,
    Summary,
    aggregate,
    bucket_column,
    build_id,
    emit_outputs,
    load_report,
    mean_errors,
    rounds_frame,
)


def _record(t, accous=0.2, masses=None):
    return RoundRecord(
        t=t,
        alpha=0.5,
        errors={"accous": accous, "olre": 0.3, "fix": 0.4, "ulsif": None, "kliep": 0.1},
        loss_hat=0.69,
        est_err=0.05,
        bucket_mass=masses if masses is not None else {1: 0.25, 2: 0.75},
    )


def test_errors_outside_unit_interval_are_rejected():
    with pytest.raises(ValidationError):
        RoundRecord(t=1, errors={"fix": 1.5})


def test_bucket_masses_must_sum_to_one():
    with pytest.raises(ValidationError):
        _record(1, masses={1: 0.5, 2: 0.4})
    assert RoundRecord(t=1).bucket_mass == {}


def test_round_rows_follow_the_column_order():
    frame = rounds_frame([_record(1), _record(2, masses={})], [1, 2, 4])
    assert list(frame.columns) == ROUND_COLUMNS + [bucket_column(1), bucket_column(2), bucket_column(4)]
    assert frame.loc[0, "w_len_4"] == 0.0
    assert pd.isna(frame.loc[1, "w_len_1"])
    assert pd.isna(frame.loc[0, "err_ulsif"])


def test_mean_errors_skips_missing_values():
    means = mean_errors([_record(1, accous=0.2), _record(2, accous=0.4)])
    assert means["accous"] == pytest.approx(0.3)
    assert "ulsif" not in means


def test_aggregate_uses_finished_seeds_only():
    summaries = [
        Summary(seed=0, mean_error={"accous": 0.2, "fix": 0.4}),
        Summary(seed=1, mean_error={"accous": 0.4, "fix": 0.4}),
        Summary(seed=2, failed=True, error="boom"),
    ]
    agg = aggregate(summaries)
    assert agg.mean["accous"] == pytest.approx(0.3)
    assert agg.std["accous"] == pytest.approx(math.sqrt(0.02))
    assert agg.std["fix"] == 0.0
    assert agg.seeds == [0, 1]
    assert agg.failed_seeds == [2]
    assert list(agg.mean) == ["accous", "fix"]


def test_single_seed_has_zero_spread():
    assert aggregate([Summary(seed=3, mean_error={"olre": 0.1})]).std == {"olre": 0.0}


def test_emit_outputs_writes_all_files(tmp_path):
    records = {0: [_record(1), _record(2)], 1: [_record(1)]}
    summaries = [
        Summary(seed=0, mean_error={"accous": 0.2}, cumulative_est_error=float("nan")),
        Summary(seed=1, mean_error={"accous": 0.25}),
    ]
    heatmap = pd.DataFrame({"seed": [0], "window_start": [1], "w_len_1": [0.25], "w_len_2": [0.75]})
    written = emit_outputs(records, summaries, {"horizon": 2}, heatmap, [1, 2], tmp_path / "out")

    names = sorted(p.name for p in written)
    assert names == ["heatmap.csv", "rounds_0.csv", "rounds_1.csv", "summary.json"]
    assert len(pd.read_csv(tmp_path / "out" / "rounds_0.csv")) == 2

    raw = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert raw["summaries"][0]["cumulative_est_error"] is None
    assert raw["config"] == {"horizon": 2}

    report = load_report(tmp_path / "out" / "summary.json")
    assert report.aggregate.mean["accous"] == pytest.approx(0.225)
    assert [s.seed for s in report.summaries] == [0, 1]
    assert report.build_id == build_id()


def test_build_id_is_short_and_stable():
    first = build_id()
    assert len(first) == 12
    int(first, 16)
    assert build_id() == first
