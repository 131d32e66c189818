"""Experiment orchestration: shift sweeps, intra-corpus and cross-corpus runs,
model selection, and report rendering.

Hyperparameter selection follows the training protocol: within each
(modality, network) cell the (learning rate, seed) grid point with the lowest
validation SSE wins, but every completed run is recorded in the results table.
Runs that diverge are logged with a NaN CCC (rendered as "div") and the sweep
continues.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, DivergenceError
from .fusion import (
    ShiftSpec,
    convert_shift,
    denormalize_target,
    fit_norm_stats,
    fuse_features,
    normalize_features,
    normalize_target,
    shift_annotations,
)
from .gaze_features import WindowSpec, extract_gaze_features
from .metrics import ccc
from .network import (
    LayerSpec,
    NetworkSpec,
    TrainConfig,
    TrainedModel,
    predict,
    train_network,
)
from .timeline import (
    AnnotationTrace,
    CorpusManifest,
    FeatureMatrix,
    load_annotation_csv,
    load_corpus_manifest,
    load_feature_csv,
    load_gaze_log_csv,
)

MODALITIES = ("speech", "gaze", "fused")

DEFAULT_WINDOW_SECONDS = {"arousal": 4.0, "valence": 6.0}
# Audio-modality sweep anchors and the shifts selected for the final system,
# at 25 fps.
DEFAULT_ANCHOR_FRAMES = {"arousal": 59, "valence": 78}
DEFAULT_CHOSEN_FRAMES = {"arousal": 69, "valence": 78}
DEFAULT_NETWORKS = (
    {"kind": "blstm", "sizes": [40, 30]},
    {"kind": "lstm", "sizes": [80, 60]},
)


@dataclass(frozen=True)
class NetworkChoice:
    kind: str  # "lstm" | "blstm"
    sizes: tuple[int, ...]

    @property
    def label(self) -> str:
        return self.kind

    def build_spec(self, input_dim: int) -> NetworkSpec:
        return NetworkSpec(
            layers=tuple(LayerSpec(self.kind, s) for s in self.sizes),
            input_dim=input_dim,
        )


@dataclass
class ShiftSettings:
    anchor_frames: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_ANCHOR_FRAMES))
    chosen_frames: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_CHOSEN_FRAMES))
    range_seconds: float = 1.0
    stride_frames: int = 3
    cross_overrides: dict[str, int | None] = field(default_factory=dict)


@dataclass
class ExperimentConfig:
    train_manifest: Path
    test_manifest: Path | None = None
    dimension: str = "arousal"
    modalities: tuple[str, ...] = MODALITIES
    window_seconds: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_WINDOW_SECONDS))
    shift: ShiftSettings = field(default_factory=ShiftSettings)
    networks: tuple[NetworkChoice, ...] = tuple(
        NetworkChoice(n["kind"], tuple(n["sizes"])) for n in DEFAULT_NETWORKS
    )
    learning_rates: tuple[float, ...] = (1e-5,)
    seeds: tuple[int, ...] = (1787452436,)
    max_epochs: int = 100
    patience_epochs: int = 20
    noise_sigma: float = 0.1
    momentum: float = 0.0
    batch_sequences: int = 1
    gaze_columns: dict[str, str] | None = None
    out_dir: Path = Path(".")
    jobs: int = 1
    cross_both_directions: bool = False

    def __post_init__(self):
        if self.dimension not in ("arousal", "valence"):
            raise ConfigError(f"unknown dimension {self.dimension!r}")
        for m in self.modalities:
            if m not in MODALITIES:
                raise ConfigError(f"unknown modality {m!r}")
        if not (self.networks and self.learning_rates and self.seeds):
            raise ConfigError("network/learning-rate/seed grids must be non-empty")

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(doc, base=path.parent)

    @classmethod
    def from_dict(cls, doc: dict, base: Path = Path(".")) -> "ExperimentConfig":
        try:
            shift_doc = doc.get("shift", {})
            shift = ShiftSettings(
                anchor_frames={**DEFAULT_ANCHOR_FRAMES, **shift_doc.get("anchor_frames", {})},
                chosen_frames={**DEFAULT_CHOSEN_FRAMES, **shift_doc.get("chosen_frames", {})},
                range_seconds=float(shift_doc.get("range_seconds", 1.0)),
                stride_frames=int(shift_doc.get("stride_frames", 3)),
                cross_overrides=shift_doc.get("cross_overrides", {}),
            )
            networks = tuple(
                NetworkChoice(n["kind"], tuple(int(s) for s in n["sizes"]))
                for n in doc.get("networks", DEFAULT_NETWORKS)
            )
            training = doc.get("training", {})
            return cls(
                train_manifest=(base / doc["train_manifest"]).resolve(),
                test_manifest=(
                    (base / doc["test_manifest"]).resolve()
                    if doc.get("test_manifest")
                    else None
                ),
                dimension=doc.get("dimension", "arousal"),
                modalities=tuple(doc.get("modalities", MODALITIES)),
                window_seconds={
                    **DEFAULT_WINDOW_SECONDS,
                    **{k: float(v) for k, v in doc.get("window_seconds", {}).items()},
                },
                shift=shift,
                networks=networks,
                learning_rates=tuple(float(x) for x in training.get("learning_rates", [1e-5])),
                seeds=tuple(int(x) for x in training.get("seeds", [1787452436])),
                max_epochs=int(training.get("max_epochs", 100)),
                patience_epochs=int(training.get("patience_epochs", 20)),
                noise_sigma=float(training.get("noise_sigma", 0.1)),
                momentum=float(training.get("momentum", 0.0)),
                batch_sequences=int(training.get("batch_sequences", 1)),
                gaze_columns=doc.get("gaze_columns"),
                out_dir=(base / doc.get("out_dir", ".")).resolve(),
                jobs=int(doc.get("jobs", 1)),
                cross_both_directions=bool(doc.get("cross_both_directions", False)),
            )
        except KeyError as exc:
            raise ConfigError(f"config missing required field {exc}") from exc


@dataclass
class ResultRow:
    dimension: str
    modality: str
    network: str
    shift_frames: int
    seed: int
    learning_rate: float
    val_sse: float = math.nan
    val_ccc: float = math.nan
    test_ccc: float | None = None
    status: str = "ok"
    train_corpus: str = ""
    test_corpus: str = ""


@dataclass
class ResultsTable:
    rows: list[ResultRow] = field(default_factory=list)

    def sorted_rows(self) -> list[ResultRow]:
        return sorted(
            self.rows,
            key=lambda r: (
                r.dimension,
                r.modality,
                r.network,
                r.shift_frames,
                r.seed,
                r.learning_rate,
            ),
        )


# ---------------------------------------------------------------------------
# Corpus data assembly

@dataclass
class RecordingData:
    id: str
    partition: str
    features: dict[str, FeatureMatrix]  # modality -> matrix
    annotation: AnnotationTrace


def load_corpus_data(
    manifest: CorpusManifest,
    dimension: str,
    window_seconds: float,
    gaze_columns: dict[str, str] | None = None,
    modalities: tuple[str, ...] = MODALITIES,
) -> list[RecordingData]:
    """Load and featurize every recording of a corpus for one dimension.

    Recordings with unequal per-modality frame counts are a hard error.
    """
    need_gaze = "gaze" in modalities or "fused" in modalities
    need_speech = "speech" in modalities or "fused" in modalities
    out = []
    for entry in manifest.recordings:
        if dimension not in entry.annotation_paths:
            raise DataError(
                f"recording {entry.id!r} has no {dimension} annotations"
            )
        annotation = load_annotation_csv(
            entry.annotation_paths[dimension], dimension, entry.fps
        )
        features: dict[str, FeatureMatrix] = {}
        n_frames = len(annotation)
        if need_speech:
            speech = load_feature_csv(entry.speech_path, entry.fps)
            if speech.n_frames != n_frames:
                raise DataError(
                    f"recording {entry.id!r}: speech has {speech.n_frames} frames "
                    f"but annotations have {n_frames}"
                )
            features["speech"] = speech
        if need_gaze:
            log = load_gaze_log_csv(entry.gaze_path, entry.fps, gaze_columns)
            if len(log) != n_frames:
                raise DataError(
                    f"recording {entry.id!r}: gaze log has {len(log)} frames "
                    f"but annotations have {n_frames}"
                )
            features["gaze"] = extract_gaze_features(log, WindowSpec(window_seconds))
        if "fused" in modalities:
            features["fused"] = fuse_features(
                features["speech"], features["gaze"], "speech", "gaze"
            )
        out.append(
            RecordingData(
                id=entry.id,
                partition=entry.partition,
                features=features,
                annotation=annotation,
            )
        )
    return out


def _partition(recs: list[RecordingData], name: str) -> list[RecordingData]:
    got = [r for r in recs if r.partition == name]
    if not got:
        raise DataError(f"corpus has no recordings in the {name!r} partition")
    return got


# ---------------------------------------------------------------------------
# Single training run

@dataclass
class RunTask:
    """Everything one training run needs; picklable for process pools."""

    row: ResultRow
    spec: NetworkSpec
    train_config: TrainConfig
    train_set: list  # (features, shifted trace) per recording, raw units
    val_set: list
    test_set: list | None


def _prepare_shifted(
    recs: list[RecordingData], modality: str, shift_frames: int
) -> list[tuple[FeatureMatrix, AnnotationTrace]]:
    out = []
    for rec in recs:
        shift = ShiftSpec(shift_frames, rec.annotation.fps)
        out.append((rec.features[modality], shift_annotations(rec.annotation, shift)))
    return out


def run_task(task: RunTask) -> tuple[ResultRow, TrainedModel | None]:
    """Train one grid point and score it; divergence yields a 'div' row."""
    row = task.row
    stats = fit_norm_stats(
        [f for f, _ in task.train_set], [t for _, t in task.train_set]
    )

    def dataset(pairs):
        return [
            (normalize_features(f, stats), normalize_target(t.values, stats))
            for f, t in pairs
        ]

    try:
        model = train_network(
            task.spec,
            dataset(task.train_set),
            dataset(task.val_set),
            task.train_config,
            norm_stats=stats,
            dimension=row.dimension,
            shift_used=row.shift_frames,
            metadata={"modality": row.modality, "network": row.network},
        )
    except DivergenceError:
        row.status = "div"
        return row, None
    row.val_sse = model.metadata["best_val_sse"]
    row.val_ccc = _score_ccc(model, task.val_set, stats)
    if task.test_set:
        row.test_ccc = _score_ccc(model, task.test_set, stats)
    return row, model


def _score_ccc(model: TrainedModel, pairs, stats) -> float:
    """CCC between concatenated predictions and targets, in annotation units."""
    preds = []
    truths = []
    for f, t in pairs:
        x = normalize_features(f, stats)
        preds.append(denormalize_target(predict(model.params, model.spec, x), stats))
        truths.append(t.values)
    return ccc(np.concatenate(preds), np.concatenate(truths))


def _execute(tasks: list[RunTask], jobs: int):
    if jobs <= 1:
        return [run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run_task, tasks))


def _train_config(config: ExperimentConfig, lr: float, seed: int) -> TrainConfig:
    return TrainConfig(
        learning_rate=lr,
        seed=seed,
        max_epochs=config.max_epochs,
        patience_epochs=config.patience_epochs,
        noise_sigma=config.noise_sigma,
        batch_sequences=config.batch_sequences,
        momentum=config.momentum,
    )


# ---------------------------------------------------------------------------
# Experiment drivers

def sweep_shifts(config: ExperimentConfig, fps: float) -> list[int]:
    """Shift grid: anchor +/- range_seconds at the sweep stride, clamped at 0."""
    anchor = config.shift.anchor_frames[config.dimension]
    radius = int(round(config.shift.range_seconds * fps))
    stride = max(1, config.shift.stride_frames)
    steps = radius // stride
    shifts = sorted(
        {max(0, anchor + k * stride) for k in range(-steps, steps + 1)}
    )
    return shifts


def run_shift_sweep(
    config: ExperimentConfig, modality: str = "fused"
) -> tuple[ResultsTable, dict[str, int]]:
    """Train at every shift in the sweep; returns the table and the best shift
    per network kind (argmax of validation CCC)."""
    manifest = load_corpus_manifest(config.train_manifest)
    recs = load_corpus_data(
        manifest,
        config.dimension,
        config.window_seconds[config.dimension],
        config.gaze_columns,
        modalities=(modality,) if modality != "fused" else MODALITIES,
    )
    train = _partition(recs, "train")
    val = _partition(recs, "validation")
    fps = train[0].annotation.fps.fps
    shifts = sweep_shifts(config, fps)

    tasks = []
    input_dim = train[0].features[modality].n_features
    for net in config.networks:
        for shift in shifts:
            train_set = _prepare_shifted(train, modality, shift)
            val_set = _prepare_shifted(val, modality, shift)
            for lr in config.learning_rates:
                for seed in config.seeds:
                    row = ResultRow(
                        dimension=config.dimension,
                        modality=modality,
                        network=net.label,
                        shift_frames=shift,
                        seed=seed,
                        learning_rate=lr,
                        train_corpus=manifest.corpus_name,
                    )
                    tasks.append(
                        RunTask(
                            row=row,
                            spec=net.build_spec(input_dim),
                            train_config=_train_config(config, lr, seed),
                            train_set=train_set,
                            val_set=val_set,
                            test_set=None,
                        )
                    )
    results = _execute(tasks, config.jobs)
    table = ResultsTable(rows=[row for row, _ in results])
    best: dict[str, int] = {}
    for net in config.networks:
        candidates = [
            r for r in table.rows if r.network == net.label and r.status == "ok"
        ]
        if candidates:
            best[net.label] = max(candidates, key=lambda r: r.val_ccc).shift_frames
    return table, best


def run_intra_corpus(
    config: ExperimentConfig,
) -> tuple[ResultsTable, dict[str, dict]]:
    """Unimodal/bimodal runs at the chosen shift for every (modality, network)
    cell; reports the relative improvement of fused over the best unimodal."""
    manifest = load_corpus_manifest(config.train_manifest)
    recs = load_corpus_data(
        manifest,
        config.dimension,
        config.window_seconds[config.dimension],
        config.gaze_columns,
        modalities=config.modalities,
    )
    train = _partition(recs, "train")
    val = _partition(recs, "validation")
    test = [r for r in recs if r.partition == "test"] or None
    shift = config.shift.chosen_frames[config.dimension]

    tasks = []
    for modality in config.modalities:
        input_dim = train[0].features[modality].n_features
        train_set = _prepare_shifted(train, modality, shift)
        val_set = _prepare_shifted(val, modality, shift)
        test_set = _prepare_shifted(test, modality, shift) if test else None
        for net in config.networks:
            for lr in config.learning_rates:
                for seed in config.seeds:
                    row = ResultRow(
                        dimension=config.dimension,
                        modality=modality,
                        network=net.label,
                        shift_frames=shift,
                        seed=seed,
                        learning_rate=lr,
                        train_corpus=manifest.corpus_name,
                        test_corpus=manifest.corpus_name if test else "",
                    )
                    tasks.append(
                        RunTask(
                            row=row,
                            spec=net.build_spec(input_dim),
                            train_config=_train_config(config, lr, seed),
                            train_set=train_set,
                            val_set=val_set,
                            test_set=test_set,
                        )
                    )
    results = _execute(tasks, config.jobs)
    table = ResultsTable(rows=[row for row, _ in results])
    improvements = {}
    for net in config.networks:
        selected = {}
        for modality in config.modalities:
            cell = [
                r
                for r in table.rows
                if r.network == net.label and r.modality == modality and r.status == "ok"
            ]
            if cell:
                selected[modality] = min(cell, key=lambda r: r.val_sse)
        if "fused" in selected:
            unimodal = [
                selected[m].val_ccc for m in ("speech", "gaze") if m in selected
            ]
            if unimodal:
                best_uni = max(unimodal)
                fused = selected["fused"].val_ccc
                improvements[net.label] = {
                    "fused_ccc": fused,
                    "best_unimodal_ccc": best_uni,
                    "relative_improvement": relative_improvement(fused, best_uni),
                }
    return table, improvements


def relative_improvement(fused: float, best_unimodal: float) -> float:
    """(fused - best_unimodal) / best_unimodal."""
    if best_unimodal == 0:
        return math.nan
    return (fused - best_unimodal) / best_unimodal


def run_cross_corpus(config: ExperimentConfig) -> tuple[ResultsTable, list[TrainedModel]]:
    """Train on corpus A, test once on corpus B's test partition (and the
    reverse direction when configured). The shift is converted to B's frame
    rate, honoring any configured override."""
    if config.test_manifest is None:
        raise ConfigError("cross-corpus run requires a test manifest")
    manifest_a = load_corpus_manifest(config.train_manifest)
    manifest_b = load_corpus_manifest(config.test_manifest)
    directions = [(manifest_a, manifest_b)]
    if config.cross_both_directions:
        directions.append((manifest_b, manifest_a))

    table = ResultsTable()
    models: list[TrainedModel] = []
    for train_manifest, test_manifest in directions:
        rows, run_models = _cross_direction(config, train_manifest, test_manifest)
        table.rows.extend(rows)
        models.extend(run_models)
    return table, models


def _cross_direction(config, train_manifest, test_manifest):
    window = config.window_seconds[config.dimension]
    train_recs = load_corpus_data(
        train_manifest, config.dimension, window, config.gaze_columns, config.modalities
    )
    test_recs = load_corpus_data(
        test_manifest, config.dimension, window, config.gaze_columns, config.modalities
    )
    train = _partition(train_recs, "train")
    val = _partition(train_recs, "validation")
    test = _partition(test_recs, "test")

    shift_a = config.shift.chosen_frames[config.dimension]
    fps_a = train[0].annotation.fps
    fps_b = test[0].annotation.fps
    conversion = convert_shift(
        ShiftSpec(shift_a, fps_a),
        fps_b,
        override=config.shift.cross_overrides.get(config.dimension),
    )
    shift_b = conversion.shift.frames

    tasks = []
    for modality in config.modalities:
        a_names = train[0].features[modality].names
        b_names = test[0].features[modality].names
        if a_names != b_names:
            raise DataError(
                f"feature-name mismatch between corpora for modality {modality!r}"
            )
        input_dim = len(a_names)
        train_set = _prepare_shifted(train, modality, shift_a)
        val_set = _prepare_shifted(val, modality, shift_a)
        test_set = _prepare_shifted(test, modality, shift_b)
        for net in config.networks:
            for lr in config.learning_rates:
                for seed in config.seeds:
                    row = ResultRow(
                        dimension=config.dimension,
                        modality=modality,
                        network=net.label,
                        shift_frames=shift_a,
                        seed=seed,
                        learning_rate=lr,
                        train_corpus=train_manifest.corpus_name,
                        test_corpus=test_manifest.corpus_name,
                    )
                    tasks.append(
                        RunTask(
                            row=row,
                            spec=net.build_spec(input_dim),
                            train_config=_train_config(config, lr, seed),
                            train_set=train_set,
                            val_set=val_set,
                            test_set=test_set,
                        )
                    )
    results = _execute(tasks, config.jobs)
    rows = []
    models = []
    for row, model in results:
        if model is not None:
            model.metadata["shift_conversion"] = {
                "train_shift_frames": shift_a,
                "test_shift_frames": shift_b,
                "computed_frames": conversion.computed_frames,
                "override_frames": conversion.override_frames,
            }
            models.append(model)
        rows.append(row)
    return rows, models


# ---------------------------------------------------------------------------
# Report rendering

_REPORT_COLUMNS = (
    "dimension",
    "modality",
    "network",
    "shift_frames",
    "seed",
    "learning_rate",
    "val_ccc",
    "test_ccc",
    "train_corpus",
    "test_corpus",
    "status",
)


def _cell(row: ResultRow, col: str) -> str:
    value = getattr(row, col)
    if col in ("val_ccc", "test_ccc"):
        if value is None:
            return ""
        if isinstance(value, float) and math.isnan(value):
            return "div"
        return f"{value:.4f}"
    return str(value)


def render_report(table: ResultsTable, fmt: str, path: str | Path) -> None:
    """Write the results table as CSV or markdown with deterministic ordering.

    Markdown output bolds the best validation-CCC row per dimension.
    """
    if not table.rows:
        raise DataError("cannot render an empty results table")
    rows = table.sorted_rows()
    path = Path(path)
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(_REPORT_COLUMNS)
            for row in rows:
                writer.writerow([_cell(row, c) for c in _REPORT_COLUMNS])
        return
    if fmt != "markdown":
        raise ConfigError(f"unknown report format {fmt!r}")
    best_by_dim = {}
    for row in rows:
        if row.status == "ok" and not math.isnan(row.val_ccc):
            cur = best_by_dim.get(row.dimension)
            if cur is None or row.val_ccc > cur.val_ccc:
                best_by_dim[row.dimension] = row
    lines = [
        "| " + " | ".join(_REPORT_COLUMNS) + " |",
        "| " + " | ".join("---" for _ in _REPORT_COLUMNS) + " |",
    ]
    for row in rows:
        cells = [_cell(row, c) for c in _REPORT_COLUMNS]
        if best_by_dim.get(row.dimension) is row:
            cells = [f"**{c}**" if c else c for c in cells]
        lines.append("| " + " | ".join(cells) + " |")
    path.write_text("\n".join(lines) + "\n")


def save_results_csv(table: ResultsTable, path: str | Path) -> None:
    render_report(table, "csv", path)


def load_results_csv(path: str | Path) -> ResultsTable:
    """Read back a CSV report into a ResultsTable."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"results file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for rec in reader:
            def _f(key):
                raw = rec.get(key, "")
                if raw in ("", "div"):
                    return math.nan
                return float(raw)

            rows.append(
                ResultRow(
                    dimension=rec["dimension"],
                    modality=rec["modality"],
                    network=rec["network"],
                    shift_frames=int(rec["shift_frames"]),
                    seed=int(rec["seed"]),
                    learning_rate=float(rec["learning_rate"]),
                    val_ccc=_f("val_ccc"),
                    test_ccc=None if rec.get("test_ccc", "") == "" else _f("test_ccc"),
                    status=rec.get("status", "ok"),
                    train_corpus=rec.get("train_corpus", ""),
                    test_corpus=rec.get("test_corpus", ""),
                )
            )
    return ResultsTable(rows=rows)
