"""Eye-gaze affective feature extraction over sliding windows.

Produces a 31-dimensional feature vector per frame from raw gaze logs:
approach statistics on gaze distance, scan-path statistics over fixations,
per-axis distribution functionals and periodogram band powers, fixation-zone
coordinate spread, and eye-closure run-length statistics.

Invalid frames are excluded from all statistics; a window with zero valid
frames emits an all-zero vector so frame alignment is never broken.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .timeline import FeatureMatrix, FrameRate, GazeLog, frames_for_duration

# Fixed output order of the 31 gaze features.
GAZE_FEATURE_NAMES: tuple[str, ...] = (
    "approach_ratio",
    "approach_time_ms",
    "scanpath_mean",
    "scanpath_std",
    *(
        f"{axis}_{stat}"
        for axis in ("h", "v")
        for stat in (
            "mean",
            "iqr12",
            "iqr23",
            "std",
            "skew",
            "psd_band1",
            "psd_band2",
            "psd_band3",
            "psd_band4",
            "psd_band5",
            "zone_std_mean",
            "zone_std_std",
        )
    ),
    "closure_runlen_mean",
    "closure_runlen_std",
    "closure_runlen_skew",
)

# Periodogram bin groups for the five band-power features.
PSD_BIN_GROUPS: tuple[tuple[int, ...], ...] = (
    (1,),
    (2,),
    (3, 4),
    (5, 6),
    (7, 8, 9, 10, 11, 12),
)


@dataclass(frozen=True)
class WindowSpec:
    """Sliding-window geometry: 4 s for arousal, 6 s for valence, 1-frame step."""

    size_seconds: float
    step_frames: int = 1

    def __post_init__(self):
        if not self.size_seconds > 0:
            raise DataError("window size must be positive")
        if self.step_frames < 1:
            raise DataError("window step must be >= 1 frame")


@dataclass(frozen=True)
class Fixation:
    start_frame: int
    end_frame: int
    centroid_h: float
    centroid_v: float


@dataclass(frozen=True)
class ZoneGrid:
    """Grid of fixation zones over a coordinate rectangle (default 3x3 on [-1,1]^2)."""

    rows: int = 3
    cols: int = 3
    h_min: float = -1.0
    h_max: float = 1.0
    v_min: float = -1.0
    v_max: float = 1.0

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise DataError("zone grid must have at least one row and column")
        if not (self.h_max > self.h_min and self.v_max > self.v_min):
            raise DataError("zone grid bounds are degenerate")

    def cell_of(self, h: float, v: float) -> tuple[int, int]:
        col = int((h - self.h_min) / (self.h_max - self.h_min) * self.cols)
        row = int((v - self.v_min) / (self.v_max - self.v_min) * self.rows)
        return (min(max(row, 0), self.rows - 1), min(max(col, 0), self.cols - 1))


@dataclass(frozen=True)
class FixationParams:
    """I-DT segmentation parameters (dispersion units, duration in seconds)."""

    dispersion_threshold: float = 0.05
    min_duration_seconds: float = 0.1


def _run_lengths(flags: np.ndarray) -> list[int]:
    runs = []
    count = 0
    for f in flags:
        if f:
            count += 1
        elif count:
            runs.append(count)
            count = 0
    if count:
        runs.append(count)
    return runs


def _moment_stats(values: np.ndarray) -> tuple[float, float, float]:
    """(mean, population std, skew); skew is 0 when variance < 1e-12."""
    mean = float(values.mean())
    centered = values - mean
    m2 = float(np.mean(centered**2))
    if m2 < 1e-12:
        return mean, 0.0, 0.0
    m3 = float(np.mean(centered**3))
    return mean, float(np.sqrt(m2)), m3 / m2**1.5


def approach_stats(
    distances: np.ndarray, fps: FrameRate
) -> tuple[float, float]:
    """Gaze-approach ratio and mean approach-run time in milliseconds.

    An approach frame is one whose gaze distance decreased from the previous
    frame; runs are maximal consecutive approach-frame sequences.
    """
    n = len(distances)
    if n <= 1:
        return 0.0, 0.0
    approaching = distances[1:] < distances[:-1]
    ratio = float(np.count_nonzero(approaching)) / (n - 1)
    runs = _run_lengths(approaching)
    if not runs:
        return ratio, 0.0
    return ratio, float(np.mean(runs)) * fps.frame_ms


def segment_fixations(
    h: np.ndarray,
    v: np.ndarray,
    dispersion_threshold: float,
    min_duration_frames: int,
) -> list[Fixation]:
    """Dispersion-threshold (I-DT) fixation segmentation.

    A fixation is a maximal run of at least `min_duration_frames` frames whose
    bounding-box diagonal stays within `dispersion_threshold`.
    """
    n = len(h)
    min_duration_frames = max(1, min_duration_frames)
    fixations: list[Fixation] = []
    start = 0
    while start + min_duration_frames <= n:
        end = start + min_duration_frames  # candidate window [start, end)
        if _dispersion(h, v, start, end) <= dispersion_threshold:
            while end < n and _dispersion(h, v, start, end + 1) <= dispersion_threshold:
                end += 1
            fixations.append(
                Fixation(
                    start_frame=start,
                    end_frame=end - 1,
                    centroid_h=float(h[start:end].mean()),
                    centroid_v=float(v[start:end].mean()),
                )
            )
            start = end
        else:
            start += 1
    return fixations


def _dispersion(h: np.ndarray, v: np.ndarray, start: int, end: int) -> float:
    hw = h[start:end]
    vw = v[start:end]
    dh = hw.max() - hw.min()
    dv = vw.max() - vw.min()
    return float(np.hypot(dh, dv))


def scan_path_stats(fixations: list[Fixation]) -> tuple[float, float]:
    """Mean and population std of distances between consecutive fixation centroids."""
    if len(fixations) < 2:
        return 0.0, 0.0
    ch = np.array([f.centroid_h for f in fixations])
    cv = np.array([f.centroid_v for f in fixations])
    segments = np.hypot(np.diff(ch), np.diff(cv))
    return float(segments.mean()), float(segments.std())


def coordinate_functionals(
    series: np.ndarray,
) -> tuple[float, float, float, float, float]:
    """(mean, iqr12, iqr23, population std, skew) of a coordinate series.

    Quantiles use linear interpolation at index p*(N-1).
    """
    if len(series) == 0:
        raise DataError("coordinate series is empty")
    q1, q2, q3 = np.quantile(series, [0.25, 0.5, 0.75])
    mean, std, skew = _moment_stats(series)
    return mean, float(q2 - q1), float(q3 - q2), std, skew


def psd_band_powers(series: np.ndarray) -> np.ndarray:
    """Five periodogram band powers over low-frequency DFT bin groups.

    The series is mean-removed; P_k = |DFT_k|^2 / N. Bins above N/2 or beyond
    the available resolution contribute 0.
    """
    n = len(series)
    bands = np.zeros(len(PSD_BIN_GROUPS))
    if n < 2:
        return bands
    spectrum = np.fft.fft(series - series.mean())
    power = np.abs(spectrum) ** 2 / n
    limit = n / 2
    for b, group in enumerate(PSD_BIN_GROUPS):
        bands[b] = sum(power[k] for k in group if k <= limit and k < n)
    return bands


def fixation_zone_spread(
    h: np.ndarray, v: np.ndarray, grid: ZoneGrid
) -> tuple[tuple[float, float], tuple[float, float]]:
    """Per-axis (mean, population std) of per-zone coordinate stds.

    Each sample is binned into its grid cell; cells with fewer than 2 samples
    are skipped. Returns ((h_mean, h_std), (v_mean, v_std)), zeros when no
    cell qualifies.
    """
    cells: dict[tuple[int, int], list[int]] = {}
    for i in range(len(h)):
        cells.setdefault(grid.cell_of(h[i], v[i]), []).append(i)
    h_stds = []
    v_stds = []
    for members in cells.values():
        if len(members) >= 2:
            idx = np.array(members)
            h_stds.append(float(h[idx].std()))
            v_stds.append(float(v[idx].std()))
    if not h_stds:
        return (0.0, 0.0), (0.0, 0.0)
    h_arr = np.array(h_stds)
    v_arr = np.array(v_stds)
    return (
        (float(h_arr.mean()), float(h_arr.std())),
        (float(v_arr.mean()), float(v_arr.std())),
    )


def eye_closure_stats(closed: np.ndarray) -> tuple[float, float, float]:
    """(mean, population std, skew) of closed-eye run lengths; zeros if none."""
    runs = _run_lengths(np.asarray(closed, dtype=bool))
    if not runs:
        return 0.0, 0.0, 0.0
    return _moment_stats(np.array(runs, dtype=float))


def window_features(
    h: np.ndarray,
    v: np.ndarray,
    closed: np.ndarray,
    valid: np.ndarray,
    fps: FrameRate,
    fixation: FixationParams,
    grid: ZoneGrid,
) -> np.ndarray:
    """Compute all 31 features for one window of raw gaze frames."""
    out = np.zeros(len(GAZE_FEATURE_NAMES))
    mask = valid.astype(bool)
    if not mask.any():
        return out
    h = h[mask]
    v = v[mask]
    closed = np.asarray(closed, dtype=bool)[mask]

    distances = np.hypot(h, v)
    out[0], out[1] = approach_stats(distances, fps)

    min_dur = frames_for_duration(fixation.min_duration_seconds, fps)
    fixations = segment_fixations(h, v, fixation.dispersion_threshold, min_dur)
    out[2], out[3] = scan_path_stats(fixations)

    zone = fixation_zone_spread(h, v, grid)
    for a, series in enumerate((h, v)):
        base = 4 + a * 12
        out[base : base + 5] = coordinate_functionals(series)
        out[base + 5 : base + 10] = psd_band_powers(series)
        out[base + 10], out[base + 11] = zone[a]

    out[28], out[29], out[30] = eye_closure_stats(closed)
    return out


def extract_gaze_features(
    log: GazeLog,
    window: WindowSpec,
    fixation: FixationParams | None = None,
    grid: ZoneGrid | None = None,
) -> FeatureMatrix:
    """Windowed gaze features: one 31-dim row per frame (causal trailing window).

    Frame t uses the window [max(0, t-W+1), t] where W covers
    `window.size_seconds` at the log's frame rate; early frames use the
    truncated window.
    """
    fixation = fixation or FixationParams()
    grid = grid or ZoneGrid()
    w = frames_for_duration(window.size_seconds, log.fps)
    frames = range(0, len(log), window.step_frames)
    rows = np.empty((len(frames), len(GAZE_FEATURE_NAMES)))
    for out_i, t in enumerate(frames):
        lo = max(0, t - w + 1)
        rows[out_i] = window_features(
            log.h[lo : t + 1],
            log.v[lo : t + 1],
            log.eye_closed[lo : t + 1],
            log.valid[lo : t + 1],
            log.fps,
            fixation,
            grid,
        )
    return FeatureMatrix(names=GAZE_FEATURE_NAMES, values=rows, fps=log.fps)
