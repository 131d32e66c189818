"""Deterministic synthetic corpus generation for desk-scale experiments.

Each recording carries two latent channels: a fast speech-like channel
(embedded in the speech feature CSV) and a slow gaze-like channel (driving the
horizontal gaze coordinate). Annotations are a lagged, clipped mixture of the
two latents plus noise, so annotator-lag recovery and fusion-benefit
experiments are both testable from one corpus family.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .timeline import DIMENSIONS

SPEECH_SIGNAL_COLUMN = "speech_env"


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    name: str = "synth"
    train_recordings: int = 3
    validation_recordings: int = 2
    test_recordings: int = 2
    frames: int = 400
    fps: float = 25.0
    lag_frames: int = 0
    noise_level: float = 0.05
    speech_weight: float = 0.6
    gaze_weight: float = 0.4
    speech_dim: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.lag_frames >= self.frames:
            raise DataError("injected lag must be smaller than the recording length")
        if self.noise_level < 0:
            raise DataError("noise level must be >= 0")
        if self.frames < 2 or self.speech_dim < 1:
            raise DataError("need at least 2 frames and 1 speech feature")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "train_recordings": self.train_recordings,
            "validation_recordings": self.validation_recordings,
            "test_recordings": self.test_recordings,
            "frames": self.frames,
            "fps": self.fps,
            "lag_frames": self.lag_frames,
            "noise_level": self.noise_level,
            "speech_weight": self.speech_weight,
            "gaze_weight": self.gaze_weight,
            "speech_dim": self.speech_dim,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SyntheticCorpusSpec":
        return cls(**doc)


def _standardize(x: np.ndarray) -> np.ndarray:
    std = x.std()
    return (x - x.mean()) / (std if std > 1e-12 else 1.0)


def _ar1(rng: np.random.Generator, n: int, coeff: float) -> np.ndarray:
    noise = rng.normal(size=n)
    out = np.empty(n)
    out[0] = noise[0]
    for t in range(1, n):
        out[t] = coeff * out[t - 1] + noise[t]
    return _standardize(out)


def _slow_wave(rng: np.random.Generator, n: int) -> np.ndarray:
    """Smooth low-frequency latent: a few sinusoids with random phase."""
    t = np.arange(n)
    out = np.zeros(n)
    for cycles in (1.3, 2.7, 4.1):
        phase = rng.uniform(0, 2 * np.pi)
        out += rng.uniform(0.5, 1.0) * np.sin(2 * np.pi * cycles * t / n + phase)
    return _standardize(out)


def _closure_flags(rng: np.random.Generator, n: int) -> np.ndarray:
    closed = np.zeros(n, dtype=int)
    t = 0
    while t < n:
        if rng.random() < 0.01:
            length = 1 + rng.geometric(0.4)
            closed[t : t + length] = 1
            t += length
        else:
            t += 1
    return closed


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _generate_recording(spec: SyntheticCorpusSpec, out_dir: Path, rec_id: str, rec_seed: int) -> dict:
    rng = np.random.default_rng([spec.seed, rec_seed])
    n = spec.frames
    speech_latent = _ar1(rng, n, 0.9)
    gaze_latent = _slow_wave(rng, n)

    # Speech features: the latent plus distractor channels.
    speech = np.empty((n, spec.speech_dim))
    speech[:, 0] = speech_latent + 0.05 * rng.normal(size=n)
    for j in range(1, spec.speech_dim):
        speech[:, j] = 0.3 * speech_latent + _ar1(rng, n, 0.8)
    speech_names = [SPEECH_SIGNAL_COLUMN] + [
        f"speech_aux{j}" for j in range(1, spec.speech_dim)
    ]

    # Gaze log: horizontal coordinate tracks the slow latent.
    h = np.clip(0.5 * gaze_latent + 0.02 * rng.normal(size=n), -1.0, 1.0)
    v = np.clip(0.3 * _ar1(rng, n, 0.95), -1.0, 1.0)
    closed = _closure_flags(rng, n)
    valid = (rng.random(n) >= 0.02).astype(int)

    # Annotations: lagged mixture of the two latents, per dimension.
    traces = {}
    for dim in DIMENSIONS:
        if dim == "arousal":
            w_s, w_g = spec.speech_weight, spec.gaze_weight
        else:
            w_s, w_g = spec.gaze_weight, spec.speech_weight
        core = np.zeros(n)
        k = spec.lag_frames
        core[k:] = w_s * speech_latent[: n - k] + w_g * gaze_latent[: n - k]
        trace = 0.5 * core + spec.noise_level * rng.normal(size=n)
        traces[dim] = np.clip(trace, -1.0, 1.0)

    speech_path = out_dir / f"{rec_id}_speech.csv"
    gaze_path = out_dir / f"{rec_id}_gaze.csv"
    _write_csv(
        speech_path,
        speech_names,
        ([repr(float(x)) for x in row] for row in speech),
    )
    _write_csv(
        gaze_path,
        ["frame", "h", "v", "eye_closed", "valid"],
        (
            [str(t), repr(float(h[t])), repr(float(v[t])), str(closed[t]), str(valid[t])]
            for t in range(n)
        ),
    )
    ann_paths = {}
    for dim, values in traces.items():
        p = out_dir / f"{rec_id}_{dim}.csv"
        _write_csv(p, ["value"], ([repr(float(y))] for y in values))
        ann_paths[dim] = p.name
    return {
        "id": rec_id,
        "fps": spec.fps,
        "speech": speech_path.name,
        "gaze": gaze_path.name,
        "annotations": ann_paths,
    }


def generate_synthetic_corpus(spec: SyntheticCorpusSpec, out_dir: str | Path) -> Path:
    """Write a full synthetic corpus (manifest + CSVs); returns the manifest path.

    Byte-identical output for identical (spec, seed).
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out_dir}: {exc}") from exc
    counts = {
        "train": spec.train_recordings,
        "validation": spec.validation_recordings,
        "test": spec.test_recordings,
    }
    recordings = []
    rec_seed = 0
    for partition, count in counts.items():
        for i in range(count):
            rec_id = f"{partition}{i:02d}"
            entry = _generate_recording(spec, out_dir, rec_id, rec_seed)
            entry["partition"] = partition
            recordings.append(entry)
            rec_seed += 1
    manifest = {"corpus": spec.name, "recordings": recordings}
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2))
    return manifest_path
