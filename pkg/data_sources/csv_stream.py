"""
CSV Feature Streams

Reads a labelled offline set and an online stream from CSV files of
precomputed features:

    offline.csv   x1,...,xd,y
    stream.csv    round,x1,...,xd,y

Stream labels are kept only as evaluation labels on each batch. All features
are rescaled by one common factor so that the largest norm over both files
equals the feature bound R.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Union

import numpy as np
import pandas as pd

from core import DataFormatError, LabeledSet, UnlabeledBatch

logger = logging.getLogger(__name__)

LABEL_COLUMN = "y"
ROUND_COLUMN = "round"


@dataclass
class CsvStream:
    """
    A loaded offline set and its ordered online batches.

    Attributes:
        offline (LabeledSet): Offline features and labels
        batches (List[UnlabeledBatch]): Online batches for rounds 1..T
        scale (float): Factor applied to every raw feature vector
    """

    offline: LabeledSet
    batches: List[UnlabeledBatch]
    scale: float

    @property
    def horizon(self) -> int:
        return len(self.batches)


def _read_numeric(path: Path) -> pd.DataFrame:
    if not path.is_file():
        raise DataFormatError(f"CSV file not found: {path}")
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, skip_blank_lines=False)
    except pd.errors.ParserError as e:
        raise DataFormatError(f"{path}: {e}") from e
    except pd.errors.EmptyDataError as e:
        raise DataFormatError(f"{path}: file is empty") from e
    if raw.empty:
        raise DataFormatError(f"{path}: no data rows")

    raw.columns = [str(c).strip() for c in raw.columns]
    numeric = raw.apply(lambda col: pd.to_numeric(col.str.strip(), errors="coerce"))
    for idx in range(len(raw)):
        line = idx + 2
        row = raw.iloc[idx]
        if row.isna().any():
            raise DataFormatError(f"{path}, line {line}: expected {raw.shape[1]} fields")
        values = numeric.iloc[idx].to_numpy(dtype=float)
        if not np.all(np.isfinite(values)):
            bad = [col for col, v in zip(raw.columns, values) if not np.isfinite(v)]
            raise DataFormatError(f"{path}, line {line}: non-numeric or non-finite value in {', '.join(bad)}")
    return numeric


def _labels(frame: pd.DataFrame, path: Path) -> np.ndarray:
    ys = frame[LABEL_COLUMN].to_numpy(dtype=float)
    bad = np.flatnonzero(~np.isin(ys, (-1.0, 1.0)))
    if bad.size:
        raise DataFormatError(f"{path}, line {int(bad[0]) + 2}: label must be -1 or +1")
    return ys.astype(int)


def _split_features(frame: pd.DataFrame, path: Path, leading: List[str]) -> pd.DataFrame:
    columns = list(frame.columns)
    if columns[: len(leading)] != leading:
        raise DataFormatError(f"{path}: header must start with {','.join(leading)}")
    if columns[-1] != LABEL_COLUMN:
        raise DataFormatError(f"{path}: last header column must be '{LABEL_COLUMN}'")
    features = frame[columns[len(leading) : -1]]
    if features.shape[1] == 0:
        raise DataFormatError(f"{path}: no feature columns")
    return features


def load_csv_stream(
    offline_path: Union[str, Path],
    stream_path: Union[str, Path],
    feature_bound: float,
) -> CsvStream:
    """
    Load an offline set and an online stream from CSV files.

    Args:
        offline_path: CSV with header x1..xd,y
        stream_path: CSV with header round,x1..xd,y; rounds start at 1,
            are non-decreasing and have no gaps
        feature_bound: R; features are rescaled so the largest norm equals R

    Returns:
        CsvStream: The offline set, the ordered batches and the scale factor

    Raises:
        DataFormatError: On missing files, ragged rows, non-numeric cells,
            missing columns, mismatched dimensions or non-contiguous rounds
    """
    offline_path, stream_path = Path(offline_path), Path(stream_path)
    offline_frame = _read_numeric(offline_path)
    stream_frame = _read_numeric(stream_path)
    if ROUND_COLUMN not in stream_frame.columns:
        raise DataFormatError(f"{stream_path}: missing '{ROUND_COLUMN}' column")

    offline_xs = _split_features(offline_frame, offline_path, []).to_numpy(dtype=float)
    stream_xs = _split_features(stream_frame, stream_path, [ROUND_COLUMN]).to_numpy(dtype=float)
    if offline_xs.shape[1] != stream_xs.shape[1]:
        raise DataFormatError(
            f"Dimension mismatch: offline has {offline_xs.shape[1]} features, "
            f"stream has {stream_xs.shape[1]}"
        )

    rounds = stream_frame[ROUND_COLUMN].to_numpy(dtype=float)
    if np.any(rounds != np.round(rounds)):
        raise DataFormatError(f"{stream_path}: round values must be integers")
    rounds = rounds.astype(int)
    steps = np.diff(rounds)
    if rounds[0] != 1:
        raise DataFormatError(f"{stream_path}, line 2: rounds must start at 1, got {rounds[0]}")
    broken = np.flatnonzero((steps < 0) | (steps > 1))
    if broken.size:
        line = int(broken[0]) + 3
        raise DataFormatError(f"{stream_path}, line {line}: rounds must be contiguous and ordered")

    largest = max(float(np.linalg.norm(offline_xs, axis=1).max()), float(np.linalg.norm(stream_xs, axis=1).max()))
    scale = feature_bound / largest if largest > 0 else 1.0
    offline = LabeledSet(xs=offline_xs * scale, ys=_labels(offline_frame, offline_path))
    stream_ys = _labels(stream_frame, stream_path)

    batches: List[UnlabeledBatch] = []
    for t in range(1, int(rounds[-1]) + 1):
        mask = rounds == t
        batches.append(UnlabeledBatch(round=t, xs=stream_xs[mask] * scale, hidden_ys=stream_ys[mask]))
    logger.info(
        f"Loaded {len(offline)} offline rows and {len(batches)} rounds "
        f"({len(rounds)} rows) from CSV, scale {scale:.6g}"
    )
    return CsvStream(offline=offline, batches=batches, scale=scale)
