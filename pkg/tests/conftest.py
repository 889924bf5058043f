from pathlib import Path
from typing import Any, Dict, Tuple

import numpy as np
import pytest

from core import Hyperparams, validate_hyperparams


def small_hyper(dim: int = 2, horizon: int = 8, radius: float = 10.0, gamma: float = 1.0, lam: float = 1.0) -> Hyperparams:
    return validate_hyperparams(
        {
            "dim": dim,
            "feature_bound": 1.0,
            "radius": radius,
            "gamma_ons": gamma,
            "lambda_ons": lam,
            "horizon": horizon,
        }
    )


def unit_ball_points(rng: np.random.Generator, n: int, dim: int, shift: float = 0.0) -> np.ndarray:
    xs = rng.uniform(-1.0, 1.0, (n, dim)) + shift
    norms = np.linalg.norm(xs, axis=1, keepdims=True)
    return xs / np.maximum(norms, 1.0)


def write_csv(path: Path, text: str) -> Path:
    path.write_text(text.strip() + "\n", encoding="utf-8")
    return path


@pytest.fixture
def hyper() -> Hyperparams:
    return small_hyper()


@pytest.fixture
def tiny_values(tmp_path: Path) -> Dict[str, Any]:
    """Flat settings for a short synthetic run."""
    return {
        "horizon": 6,
        "n_offline": 60,
        "gamma_ons": 5.0,
        "seeds": "0",
        "prop2_mc": 0,
        "kliep_steps": 20,
        "min_len": 1,
        "out": str(tmp_path / "out"),
    }


@pytest.fixture
def csv_pair(tmp_path: Path) -> Tuple[Path, Path]:
    offline = write_csv(
        tmp_path / "offline.csv",
        """
x1,x2,y
1.0,0.0,1
0.0,2.0,-1
-1.0,-1.0,1
0.5,0.5,-1
""",
    )
    stream = write_csv(
        tmp_path / "stream.csv",
        """
round,x1,x2,y
1,0.5,0.0,1
1,0.0,0.5,-1
2,1.0,1.0,1
3,-0.5,0.2,-1
""",
    )
    return offline, stream
