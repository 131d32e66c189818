"""Evaluation metrics: concordance correlation coefficient, Pearson, SSE.

All moments are population (1/N) moments. Degenerate denominators return 0
with a flag instead of raising, so sweeps over many windows never abort on a
flat segment.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError

_EPS = 1e-12


def _as_pair(x, y, min_len: int = 2) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError(f"prediction pair length mismatch: {x.shape} vs {y.shape}")
    if len(x) < min_len:
        raise DataError(f"prediction pair too short: {len(x)} < {min_len}")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise DataError("prediction pair contains non-finite values")
    return x, y


def ccc_flagged(x, y) -> tuple[float, bool]:
    """CCC = 2*cov(x,y) / (var(x) + var(y) + (mean(x)-mean(y))^2).

    Returns (value, degenerate); degenerate pairs (denominator < 1e-12)
    score 0.
    """
    x, y = _as_pair(x, y)
    mx, my = x.mean(), y.mean()
    vx = np.mean((x - mx) ** 2)
    vy = np.mean((y - my) ** 2)
    sxy = np.mean((x - mx) * (y - my))
    denom = vx + vy + (mx - my) ** 2
    if denom < _EPS:
        return 0.0, True
    return float(2.0 * sxy / denom), False


def ccc(x, y) -> float:
    """Concordance correlation coefficient with population moments."""
    return ccc_flagged(x, y)[0]


def pearson_flagged(x, y) -> tuple[float, bool]:
    """Pearson correlation; constant series score 0 with the degenerate flag."""
    x, y = _as_pair(x, y)
    mx, my = x.mean(), y.mean()
    sx = np.sqrt(np.mean((x - mx) ** 2))
    sy = np.sqrt(np.mean((y - my) ** 2))
    if sx < _EPS or sy < _EPS:
        return 0.0, True
    sxy = np.mean((x - mx) * (y - my))
    return float(np.clip(sxy / (sx * sy), -1.0, 1.0)), False


def pearson(x, y) -> float:
    return pearson_flagged(x, y)[0]


def sse(x, y) -> float:
    """Sum of squared errors between two equal-length series."""
    x, y = _as_pair(x, y, min_len=1)
    return float(np.sum((x - y) ** 2))
