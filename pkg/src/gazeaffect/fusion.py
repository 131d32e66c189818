"""Ground-truth time-shift, frame-rate shift conversion, feature fusion,
and z-normalization fitted on the training partition."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .timeline import AnnotationTrace, FeatureMatrix, FrameRate

_STD_FLOOR = 1e-12


@dataclass(frozen=True)
class ShiftSpec:
    """A backward time-shift of ground-truth annotations, in frames."""

    frames: int
    source_fps: FrameRate

    def __post_init__(self):
        if self.frames < 0:
            raise DataError("shift frames must be non-negative")


@dataclass(frozen=True)
class ShiftConversion:
    """Result of converting a shift to another frame rate.

    Records the rounded computed value even when an override is used, so
    experiment reports can show both.
    """

    shift: ShiftSpec
    computed_frames: int
    override_frames: int | None

    @property
    def override_used(self) -> bool:
        return self.override_frames is not None


def shift_annotations(trace: AnnotationTrace, shift: ShiftSpec) -> AnnotationTrace:
    """Shift annotations back in time by k frames, zero-padding the tail."""
    k = shift.frames
    n = len(trace)
    if k >= n:
        raise DataError(f"shift of {k} frames >= trace length {n}")
    shifted = np.zeros(n)
    shifted[: n - k] = trace.values[k:]
    return AnnotationTrace(dimension=trace.dimension, values=shifted, fps=trace.fps)


def convert_shift(
    shift: ShiftSpec, target_fps: FrameRate, override: int | None = None
) -> ShiftConversion:
    """Convert a shift between frame rates (round-to-nearest), honoring overrides."""
    computed = int(round(shift.frames / shift.source_fps.fps * target_fps.fps))
    frames = override if override is not None else computed
    return ShiftConversion(
        shift=ShiftSpec(frames=frames, source_fps=target_fps),
        computed_frames=computed,
        override_frames=override,
    )


def fuse_features(
    a: FeatureMatrix,
    b: FeatureMatrix,
    a_tag: str = "a",
    b_tag: str = "b",
) -> FeatureMatrix:
    """Per-frame concatenation of two modalities' feature matrices.

    Name collisions are disambiguated by suffixing each colliding name with
    its modality tag.
    """
    if a.n_frames != b.n_frames:
        raise DataError(
            f"frame count mismatch {a.n_frames} vs {b.n_frames}"
        )
    if a.fps != b.fps:
        raise DataError(f"fps mismatch {a.fps.fps} vs {b.fps.fps}")
    collisions = set(a.names) & set(b.names)
    names_a = [f"{n}_{a_tag}" if n in collisions else n for n in a.names]
    names_b = [f"{n}_{b_tag}" if n in collisions else n for n in b.names]
    return FeatureMatrix(
        names=tuple(names_a) + tuple(names_b),
        values=np.concatenate([a.values, b.values], axis=1),
        fps=a.fps,
    )


@dataclass(frozen=True)
class NormStats:
    """Zero-mean/unit-variance statistics fitted on the training partition only."""

    feature_names: tuple[str, ...]
    feature_means: np.ndarray
    feature_stds: np.ndarray
    target_mean: float
    target_std: float

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "feature_means": [float(x) for x in self.feature_means],
            "feature_stds": [float(x) for x in self.feature_stds],
            "target_mean": self.target_mean,
            "target_std": self.target_std,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "NormStats":
        return cls(
            feature_names=tuple(doc["feature_names"]),
            feature_means=np.array(doc["feature_means"], dtype=float),
            feature_stds=np.array(doc["feature_stds"], dtype=float),
            target_mean=float(doc["target_mean"]),
            target_std=float(doc["target_std"]),
        )


def _guard_std(std: np.ndarray | float):
    return np.where(np.asarray(std) < _STD_FLOOR, 1.0, std)


def fit_norm_stats(
    train_features: list[FeatureMatrix],
    train_targets: list[AnnotationTrace],
) -> NormStats:
    """Pooled per-feature and target mean/std over all training frames.

    Constant features (std < 1e-12) store std 1 so normalization is a no-op
    for them.
    """
    if not train_features or not train_targets:
        raise DataError("training set is empty")
    names = train_features[0].names
    for m in train_features[1:]:
        if m.names != names:
            raise DataError("training feature matrices have mismatched names")
    stacked = np.concatenate([m.values for m in train_features], axis=0)
    targets = np.concatenate([t.values for t in train_targets])
    f_means = stacked.mean(axis=0)
    f_stds = _guard_std(stacked.std(axis=0))
    t_std = float(_guard_std(targets.std()))
    return NormStats(
        feature_names=names,
        feature_means=f_means,
        feature_stds=f_stds,
        target_mean=float(targets.mean()),
        target_std=t_std,
    )


def normalize_features(matrix: FeatureMatrix, stats: NormStats) -> np.ndarray:
    """Forward z-normalization of a feature matrix; returns the raw array."""
    if matrix.names != stats.feature_names:
        raise DataError(
            "feature names do not match normalization stats "
            f"({len(matrix.names)} vs {len(stats.feature_names)} features)"
        )
    return (matrix.values - stats.feature_means) / stats.feature_stds


def normalize_target(values: np.ndarray, stats: NormStats) -> np.ndarray:
    """Forward z-normalization of a target trace."""
    return (np.asarray(values, dtype=float) - stats.target_mean) / stats.target_std


def denormalize_target(values: np.ndarray, stats: NormStats) -> np.ndarray:
    """Inverse target normalization, back to annotation units."""
    return np.asarray(values, dtype=float) * stats.target_std + stats.target_mean
