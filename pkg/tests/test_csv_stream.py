import numpy as np
import pytest
from conftest import write_csv

from core import DataFormatError
from data_sources.csv_stream import load_csv_stream

OFFLINE = """
x1,x2,y
1.0,0.0,1
0.0,2.0,-1
"""


def test_loads_offline_set_and_batches(csv_pair):
    offline, stream = csv_pair
    loaded = load_csv_stream(offline, stream, 3.0)
    assert len(loaded.offline) == 4
    assert loaded.horizon == 3
    assert [len(b) for b in loaded.batches] == [2, 1, 1]
    assert [b.round for b in loaded.batches] == [1, 2, 3]
    np.testing.assert_array_equal(loaded.batches[0].hidden_ys, [1, -1])
    np.testing.assert_array_equal(loaded.offline.ys, [1, -1, 1, -1])


def test_features_are_rescaled_to_the_bound(csv_pair):
    offline, stream = csv_pair
    loaded = load_csv_stream(offline, stream, 3.0)
    assert loaded.scale == pytest.approx(1.5)
    norms = np.concatenate(
        [np.linalg.norm(loaded.offline.xs, axis=1)] + [np.linalg.norm(b.xs, axis=1) for b in loaded.batches]
    )
    assert norms.max() == pytest.approx(3.0)
    np.testing.assert_allclose(loaded.batches[1].xs, [[1.5, 1.5]])


def _stream_error(tmp_path, stream_text, offline_text=OFFLINE):
    offline = write_csv(tmp_path / "offline.csv", offline_text)
    stream = write_csv(tmp_path / "stream.csv", stream_text)
    with pytest.raises(DataFormatError) as info:
        load_csv_stream(offline, stream, 1.0)
    return str(info.value)


def test_non_numeric_value_names_the_line(tmp_path):
    message = _stream_error(tmp_path, "round,x1,x2,y\n1,0.1,0.2,1\n2,NaN,0.2,-1")
    assert "line 3" in message


def test_short_row_names_the_line(tmp_path):
    message = _stream_error(tmp_path, "round,x1,x2,y\n1,0.1,0.2,1\n2,0.3,0.2,1\n3,0.1")
    assert "line 4" in message


def test_missing_round_column(tmp_path):
    message = _stream_error(tmp_path, "x1,x2,y\n0.1,0.2,1")
    assert "round" in message


def test_rounds_must_be_contiguous(tmp_path):
    message = _stream_error(tmp_path, "round,x1,x2,y\n1,0.1,0.2,1\n3,0.1,0.2,1")
    assert "line 3" in message


def test_rounds_must_be_ordered(tmp_path):
    _stream_error(tmp_path, "round,x1,x2,y\n1,0.1,0.2,1\n2,0.1,0.2,1\n1,0.1,0.2,1")


def test_rounds_must_start_at_one(tmp_path):
    message = _stream_error(tmp_path, "round,x1,x2,y\n2,0.1,0.2,1")
    assert "start at 1" in message


def test_labels_must_be_signs(tmp_path):
    message = _stream_error(tmp_path, "round,x1,x2,y\n1,0.1,0.2,1\n1,0.1,0.2,0")
    assert "line 3" in message


def test_dimension_mismatch(tmp_path):
    message = _stream_error(tmp_path, "round,x1,x2,x3,y\n1,0.1,0.2,0.3,1")
    assert "Dimension mismatch" in message


def test_missing_file(tmp_path, csv_pair):
    offline, _ = csv_pair
    with pytest.raises(DataFormatError, match="not found"):
        load_csv_stream(offline, tmp_path / "absent.csv", 1.0)
