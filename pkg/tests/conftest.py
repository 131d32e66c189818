import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gazeaffect.timeline import FrameRate, GazeLog


@pytest.fixture
def fps25():
    return FrameRate(25.0)


def random_gaze_log(rng: np.random.Generator, n: int, fps: float = 25.0,
                    p_invalid: float = 0.05, p_closed: float = 0.1) -> GazeLog:
    h = np.cumsum(rng.normal(0, 0.02, n))
    v = np.cumsum(rng.normal(0, 0.02, n))
    np.clip(h, -1, 1, out=h)
    np.clip(v, -1, 1, out=v)
    return GazeLog(
        h=h,
        v=v,
        eye_closed=rng.random(n) < p_closed,
        valid=rng.random(n) >= p_invalid,
        fps=FrameRate(fps),
    )
