"""From-scratch LSTM / BLSTM sequence regression in double precision.

Cells are the standard formulation: logistic input/forget/output gates, tanh
cell-candidate and cell-output nonlinearities, no peepholes. A BLSTM layer of
size N runs N/2 units per direction and concatenates their outputs. Training
is full-sequence BPTT with an SSE loss, plain gradient descent (optional
momentum), per-presentation Gaussian input noise, and early stopping on
validation SSE.

Gate blocks are stacked row-wise in the order (input, forget, cell, output)
inside each weight array.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, DivergenceError
from .fusion import NormStats

GATE_ORDER = ("input", "forget", "cell", "output")
MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class LayerSpec:
    kind: str  # "lstm" | "blstm"
    size: int

    def __post_init__(self):
        if self.kind not in ("lstm", "blstm"):
            raise DataError(f"unknown layer kind {self.kind!r}")
        if self.size < 1:
            raise DataError("layer size must be >= 1")
        if self.kind == "blstm" and self.size % 2:
            raise DataError("blstm layer size must be even (split across directions)")


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple[LayerSpec, ...]
    input_dim: int
    output_dim: int = 1

    def __post_init__(self):
        if not self.layers:
            raise DataError("network needs at least one hidden layer")
        if self.input_dim < 1:
            raise DataError("input_dim must be >= 1")
        if self.output_dim != 1:
            raise DataError("only single-task (output_dim 1) networks are supported")

    def layer_widths(self) -> list[tuple[int, int]]:
        """(input width, output width) for each layer, in order."""
        widths = []
        in_dim = self.input_dim
        for layer in self.layers:
            widths.append((in_dim, layer.size))
            in_dim = layer.size
        return widths

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
            "layers": [{"kind": l.kind, "size": l.size} for l in self.layers],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "NetworkSpec":
        return cls(
            layers=tuple(LayerSpec(l["kind"], int(l["size"])) for l in doc["layers"]),
            input_dim=int(doc["input_dim"]),
            output_dim=int(doc.get("output_dim", 1)),
        )


@dataclass
class DirectionWeights:
    """Parameters for one recurrent direction: stacked-gate arrays."""

    w: np.ndarray  # (4H, D) input weights
    r: np.ndarray  # (4H, H) recurrent weights
    b: np.ndarray  # (4H,) biases

    @property
    def hidden(self) -> int:
        return self.r.shape[1]


@dataclass
class NetworkParams:
    """All trainable parameters: per layer one or two directions, plus readout."""

    layers: list[list[DirectionWeights]]
    w_out: np.ndarray  # (last layer width,)
    b_out: float

    def arrays(self):
        """All parameter arrays in a fixed traversal order (readout last)."""
        for layer in self.layers:
            for d in layer:
                yield d.w
                yield d.r
                yield d.b
        yield self.w_out

    def clone(self) -> "NetworkParams":
        return copy.deepcopy(self)


@dataclass
class TrainConfig:
    learning_rate: float
    seed: int
    max_epochs: int = 100
    patience_epochs: int = 20
    noise_sigma: float = 0.1
    batch_sequences: int = 1
    momentum: float = 0.0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise DataError("learning rate must be positive")
        if not 0 < self.patience_epochs < self.max_epochs:
            raise DataError("need 0 < patience_epochs < max_epochs")
        if self.noise_sigma < 0 or self.momentum < 0:
            raise DataError("noise_sigma and momentum must be >= 0")
        if self.batch_sequences < 1:
            raise DataError("batch_sequences must be >= 1")


@dataclass
class TrainedModel:
    spec: NetworkSpec
    params: NetworkParams
    norm_stats: NormStats | None = None
    dimension: str | None = None
    shift_used: int | None = None
    history: list[tuple[float, float]] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-z))


def init_network(spec: NetworkSpec, seed: int) -> NetworkParams:
    """Deterministic init: weights uniform in [-0.1, 0.1], biases zero."""
    rng = np.random.default_rng(seed)
    layers = []
    for layer, (in_dim, _) in zip(spec.layers, spec.layer_widths()):
        directions = 1 if layer.kind == "lstm" else 2
        h = layer.size if layer.kind == "lstm" else layer.size // 2
        dir_weights = []
        for _ in range(directions):
            dir_weights.append(
                DirectionWeights(
                    w=rng.uniform(-0.1, 0.1, size=(4 * h, in_dim)),
                    r=rng.uniform(-0.1, 0.1, size=(4 * h, h)),
                    b=np.zeros(4 * h),
                )
            )
        layers.append(dir_weights)
    last_width = spec.layers[-1].size
    return NetworkParams(
        layers=layers,
        w_out=rng.uniform(-0.1, 0.1, size=last_width),
        b_out=0.0,
    )


def _direction_forward(dw: DirectionWeights, x: np.ndarray):
    """Run one LSTM direction over x (N, D); returns hidden states and cache."""
    n = x.shape[0]
    h_dim = dw.hidden
    pre = x @ dw.w.T + dw.b  # (N, 4H)
    hs = np.empty((n, h_dim))
    cache = {
        "i": np.empty((n, h_dim)),
        "f": np.empty((n, h_dim)),
        "g": np.empty((n, h_dim)),
        "o": np.empty((n, h_dim)),
        "c": np.empty((n, h_dim)),
        "x": x,
    }
    h = np.zeros(h_dim)
    c = np.zeros(h_dim)
    for t in range(n):
        z = pre[t] + dw.r @ h
        i = _sigmoid(z[:h_dim])
        f = _sigmoid(z[h_dim : 2 * h_dim])
        g = np.tanh(z[2 * h_dim : 3 * h_dim])
        o = _sigmoid(z[3 * h_dim :])
        c = f * c + i * g
        h = o * np.tanh(c)
        cache["i"][t] = i
        cache["f"][t] = f
        cache["g"][t] = g
        cache["o"][t] = o
        cache["c"][t] = c
        hs[t] = h
    return hs, cache


def _direction_backward(dw: DirectionWeights, cache: dict, d_hs: np.ndarray):
    """BPTT through one direction; returns (gradients, d_inputs)."""
    x = cache["x"]
    n, h_dim = d_hs.shape
    grad = DirectionWeights(
        w=np.zeros_like(dw.w), r=np.zeros_like(dw.r), b=np.zeros_like(dw.b)
    )
    dx = np.zeros_like(x)
    dh_rec = np.zeros(h_dim)
    dc_next = np.zeros(h_dim)
    for t in range(n - 1, -1, -1):
        i = cache["i"][t]
        f = cache["f"][t]
        g = cache["g"][t]
        o = cache["o"][t]
        c = cache["c"][t]
        c_prev = cache["c"][t - 1] if t > 0 else np.zeros(h_dim)
        dh = d_hs[t] + dh_rec
        tc = np.tanh(c)
        do = dh * tc
        dc = dh * o * (1.0 - tc**2) + dc_next
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        dc_next = dc * f
        dz = np.concatenate(
            [
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * (1.0 - g**2),
                do * o * (1.0 - o),
            ]
        )
        grad.w += np.outer(dz, x[t])
        if t > 0:
            grad.r += np.outer(dz, _hidden_at(cache, t - 1))
        grad.b += dz
        dx[t] = dz @ dw.w
        dh_rec = dz @ dw.r
    return grad, dx


def _hidden_at(cache: dict, t: int) -> np.ndarray:
    """Hidden state at frame t, recomputed from cached gate values."""
    return cache["o"][t] * np.tanh(cache["c"][t])


def _layer_forward(layer_spec: LayerSpec, directions: list[DirectionWeights], x):
    if layer_spec.kind == "lstm":
        hs, cache = _direction_forward(directions[0], x)
        return hs, (cache,)
    hs_f, cache_f = _direction_forward(directions[0], x)
    hs_b_rev, cache_b = _direction_forward(directions[1], x[::-1])
    return np.concatenate([hs_f, hs_b_rev[::-1]], axis=1), (cache_f, cache_b)


def _layer_backward(
    layer_spec: LayerSpec,
    directions: list[DirectionWeights],
    caches,
    d_out: np.ndarray,
):
    if layer_spec.kind == "lstm":
        grad, dx = _direction_backward(directions[0], caches[0], d_out)
        return [grad], dx
    h_f = directions[0].hidden
    grad_f, dx_f = _direction_backward(directions[0], caches[0], d_out[:, :h_f])
    grad_b, dx_b_rev = _direction_backward(
        directions[1], caches[1], d_out[:, h_f:][::-1]
    )
    return [grad_f, grad_b], dx_f + dx_b_rev[::-1]


def network_forward(params: NetworkParams, spec: NetworkSpec, x: np.ndarray):
    """Full forward pass; returns (per-frame predictions, layer caches)."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise DataError(
            f"input width {x.shape[-1] if x.ndim == 2 else '?'} != "
            f"network input_dim {spec.input_dim}"
        )
    caches = []
    current = x
    for layer_spec, directions in zip(spec.layers, params.layers):
        current, cache = _layer_forward(layer_spec, directions, current)
        caches.append(cache)
    preds = current @ params.w_out + params.b_out
    return preds, (caches, current)


def predict(params: NetworkParams, spec: NetworkSpec, x: np.ndarray) -> np.ndarray:
    return network_forward(params, spec, x)[0]


def bptt_gradients(
    params: NetworkParams,
    spec: NetworkSpec,
    x: np.ndarray,
    targets: np.ndarray,
):
    """Exact gradients of the SSE loss w.r.t. every parameter.

    Returns (gradients as a NetworkParams, loss).
    """
    targets = np.asarray(targets, dtype=float)
    preds, (caches, last_h) = network_forward(params, spec, x)
    if len(targets) != len(preds):
        raise DataError(
            f"target length {len(targets)} != sequence length {len(preds)}"
        )
    err = preds - targets
    loss = float(np.sum(err**2))
    dy = 2.0 * err  # (N,)
    grad_w_out = last_h.T @ dy
    grad_b_out = float(dy.sum())
    d_h = np.outer(dy, params.w_out)
    grad_layers = []
    for layer_spec, directions, cache in zip(
        reversed(spec.layers), reversed(params.layers), reversed(caches)
    ):
        grads, d_h = _layer_backward(layer_spec, directions, cache, d_h)
        grad_layers.append(grads)
    grad_layers.reverse()
    return (
        NetworkParams(layers=grad_layers, w_out=grad_w_out, b_out=grad_b_out),
        loss,
    )


def inject_noise(
    x: np.ndarray, sigma: float, rng: np.random.Generator
) -> np.ndarray:
    """Fresh i.i.d. zero-mean Gaussian noise per element; sigma 0 is identity."""
    if sigma < 0:
        raise DataError("noise sigma must be >= 0")
    if sigma == 0:
        return x
    return x + rng.normal(0.0, sigma, size=x.shape)


def evaluate_sse(
    params: NetworkParams, spec: NetworkSpec, dataset: list[tuple[np.ndarray, np.ndarray]]
) -> float:
    """Noise-free total SSE of the network over a dataset of (x, y) sequences."""
    total = 0.0
    for x, y in dataset:
        preds = predict(params, spec, x)
        total += float(np.sum((preds - np.asarray(y, dtype=float)) ** 2))
    return total


def _apply_update(params, grads, velocity, lr, momentum):
    for p, g, v in zip(params.arrays(), grads.arrays(), velocity.arrays()):
        if momentum > 0:
            v *= momentum
            v -= lr * g
            p += v
        else:
            p -= lr * g
    if momentum > 0:
        velocity.b_out = momentum * velocity.b_out - lr * grads.b_out
        params.b_out += velocity.b_out
    else:
        params.b_out -= lr * grads.b_out


def _accumulate(total: NetworkParams | None, grads: NetworkParams) -> NetworkParams:
    if total is None:
        return grads
    for t, g in zip(total.arrays(), grads.arrays()):
        t += g
    total.b_out += grads.b_out
    return total


def train_network(
    spec: NetworkSpec,
    train: list[tuple[np.ndarray, np.ndarray]],
    val: list[tuple[np.ndarray, np.ndarray]],
    config: TrainConfig,
    norm_stats: NormStats | None = None,
    dimension: str | None = None,
    shift_used: int | None = None,
    metadata: dict | None = None,
) -> TrainedModel:
    """Early-stopped gradient-descent training; returns the best-epoch model.

    Each epoch shuffles the training sequences (seeded), injects fresh input
    noise per presentation, and evaluates noise-free validation SSE. Training
    stops at max_epochs or once the best epoch is patience_epochs old.
    """
    if not train or not val:
        raise DataError("train and validation partitions must be non-empty")
    train = [(np.asarray(x, dtype=float), np.asarray(y, dtype=float)) for x, y in train]
    val = [(np.asarray(x, dtype=float), np.asarray(y, dtype=float)) for x, y in val]
    params = init_network(spec, config.seed)
    velocity = init_network(spec, config.seed)
    for arr in velocity.arrays():
        arr[...] = 0.0
    velocity.b_out = 0.0
    rng = np.random.default_rng(config.seed)

    history: list[tuple[float, float]] = []
    best_val = np.inf
    best_params = params.clone()
    best_epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train))
        train_sse = 0.0
        batch_grads: NetworkParams | None = None
        batch_count = 0
        for seq_i in order:
            x, y = train[seq_i]
            noisy = inject_noise(x, config.noise_sigma, rng)
            grads, loss = bptt_gradients(params, spec, noisy, y)
            train_sse += loss
            batch_grads = _accumulate(batch_grads, grads)
            batch_count += 1
            if batch_count == config.batch_sequences:
                _apply_update(params, batch_grads, velocity, config.learning_rate, config.momentum)
                batch_grads = None
                batch_count = 0
        if batch_grads is not None:
            _apply_update(params, batch_grads, velocity, config.learning_rate, config.momentum)
        val_sse = evaluate_sse(params, spec, val)
        if not (np.isfinite(train_sse) and np.isfinite(val_sse)):
            raise DivergenceError(
                f"non-finite loss at epoch {epoch} "
                f"(last finite epoch: {epoch - 1})",
                last_finite_epoch=epoch - 1,
            )
        history.append((train_sse, val_sse))
        if val_sse < best_val:
            best_val = val_sse
            best_params = params.clone()
            best_epoch = epoch
        if epoch - best_epoch >= config.patience_epochs:
            break
    meta = {
        "seed": config.seed,
        "learning_rate": config.learning_rate,
        "best_epoch": best_epoch,
        "best_val_sse": best_val,
    }
    meta.update(metadata or {})
    return TrainedModel(
        spec=spec,
        params=best_params,
        norm_stats=norm_stats,
        dimension=dimension,
        shift_used=shift_used,
        history=history,
        metadata=meta,
    )


def predict_trace(model: TrainedModel, matrix) -> np.ndarray:
    """Inference path: normalize features, run the network, denormalize output.

    No noise is injected. Returns per-frame predictions in annotation units.
    """
    from .fusion import denormalize_target, normalize_features

    if model.norm_stats is None:
        raise DataError("model has no normalization stats; cannot predict raw features")
    x = normalize_features(matrix, model.norm_stats)
    preds = predict(model.params, model.spec, x)
    return denormalize_target(preds, model.norm_stats)


# ---------------------------------------------------------------------------
# Gradient verification

def _flatten(params: NetworkParams) -> np.ndarray:
    parts = [arr.ravel() for arr in params.arrays()]
    parts.append(np.array([params.b_out]))
    return np.concatenate(parts)


def _write_flat(params: NetworkParams, vec: np.ndarray) -> None:
    offset = 0
    for arr in params.arrays():
        n = arr.size
        arr[...] = vec[offset : offset + n].reshape(arr.shape)
        offset += n
    params.b_out = float(vec[offset])


@dataclass(frozen=True)
class GradientCheckReport:
    max_relative_error: float
    n_parameters: int
    worst_index: int


def gradient_check(
    spec: NetworkSpec,
    seed: int,
    sequence_length: int = 20,
    step: float = 1e-5,
) -> GradientCheckReport:
    """Compare BPTT gradients to central finite differences, parameter by parameter.

    Relative error is |g_a - g_n| / max(|g_a|, |g_n|, 1e-5). The absolute
    floor sits at the noise scale of central differences with this step, so
    components whose true gradient is essentially zero are compared
    absolutely (to ~1e-9) instead of dividing roundoff by roundoff.
    Parameters are drawn from a wider distribution than the training init to
    keep activations away from full saturation.
    """
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(sequence_length, spec.input_dim))
    y = rng.normal(size=sequence_length)
    params = init_network(spec, seed)
    for arr in params.arrays():
        arr[...] = rng.normal(0.0, 0.3, size=arr.shape)
    params.b_out = float(rng.normal(0.0, 0.3))
    analytic, _ = bptt_gradients(params, spec, x, y)
    ga = _flatten(analytic)

    theta = _flatten(params)
    gn = np.empty_like(ga)
    work = params.clone()
    for j in range(len(theta)):
        for sign, slot in ((+1.0, 0), (-1.0, 1)):
            perturbed = theta.copy()
            perturbed[j] += sign * step
            _write_flat(work, perturbed)
            preds = predict(work, spec, x)
            loss = float(np.sum((preds - y) ** 2))
            if slot == 0:
                plus = loss
            else:
                minus = loss
        gn[j] = (plus - minus) / (2.0 * step)
    rel = np.abs(ga - gn) / np.maximum(np.maximum(np.abs(ga), np.abs(gn)), 1e-5)
    worst = int(np.argmax(rel))
    return GradientCheckReport(
        max_relative_error=float(rel[worst]),
        n_parameters=len(theta),
        worst_index=worst,
    )


# ---------------------------------------------------------------------------
# Model persistence

def _direction_to_dict(dw: DirectionWeights) -> dict:
    h = dw.hidden
    doc = {}
    for gi, gate in enumerate(GATE_ORDER):
        doc[f"w_{gate}"] = dw.w[gi * h : (gi + 1) * h].ravel().tolist()
        doc[f"r_{gate}"] = dw.r[gi * h : (gi + 1) * h].ravel().tolist()
        doc[f"b_{gate}"] = dw.b[gi * h : (gi + 1) * h].tolist()
    return doc


def _direction_from_dict(doc: dict, in_dim: int, h: int) -> DirectionWeights:
    w = np.empty((4 * h, in_dim))
    r = np.empty((4 * h, h))
    b = np.empty(4 * h)
    for gi, gate in enumerate(GATE_ORDER):
        w[gi * h : (gi + 1) * h] = np.array(doc[f"w_{gate}"]).reshape(h, in_dim)
        r[gi * h : (gi + 1) * h] = np.array(doc[f"r_{gate}"]).reshape(h, h)
        b[gi * h : (gi + 1) * h] = np.array(doc[f"b_{gate}"])
    return DirectionWeights(w=w, r=r, b=b)


def save_model(model: TrainedModel, path: str | Path) -> None:
    """Serialize a trained model to JSON with round-trip-exact weights."""
    weights = {}
    for li, (layer_spec, directions) in enumerate(zip(model.spec.layers, model.params.layers)):
        if layer_spec.kind == "lstm":
            weights[f"layer{li}"] = _direction_to_dict(directions[0])
        else:
            weights[f"layer{li}_forward"] = _direction_to_dict(directions[0])
            weights[f"layer{li}_backward"] = _direction_to_dict(directions[1])
    weights["readout"] = {
        "w": model.params.w_out.tolist(),
        "b": model.params.b_out,
    }
    doc = {
        "version": MODEL_FORMAT_VERSION,
        "spec": model.spec.to_dict(),
        "norm_stats": model.norm_stats.to_dict() if model.norm_stats else None,
        "dimension": model.dimension,
        "shift_used": model.shift_used,
        "weights": weights,
        "history": [[tr, va] for tr, va in model.history],
        "metadata": model.metadata,
    }
    Path(path).write_text(json.dumps(doc))


def load_model(path: str | Path) -> TrainedModel:
    """Load a model JSON; rejects truncated files and version mismatches."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"model file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"model file is not valid JSON: {exc}") from exc
    version = doc.get("version")
    if version != MODEL_FORMAT_VERSION:
        raise DataError(
            f"model format version mismatch: file has {version!r}, "
            f"expected {MODEL_FORMAT_VERSION}"
        )
    spec = NetworkSpec.from_dict(doc["spec"])
    layers = []
    for li, (layer_spec, (in_dim, _)) in enumerate(
        zip(spec.layers, spec.layer_widths())
    ):
        if layer_spec.kind == "lstm":
            layers.append(
                [_direction_from_dict(doc["weights"][f"layer{li}"], in_dim, layer_spec.size)]
            )
        else:
            h = layer_spec.size // 2
            layers.append(
                [
                    _direction_from_dict(doc["weights"][f"layer{li}_forward"], in_dim, h),
                    _direction_from_dict(doc["weights"][f"layer{li}_backward"], in_dim, h),
                ]
            )
    readout = doc["weights"]["readout"]
    params = NetworkParams(
        layers=layers,
        w_out=np.array(readout["w"], dtype=float),
        b_out=float(readout["b"]),
    )
    stats = doc.get("norm_stats")
    return TrainedModel(
        spec=spec,
        params=params,
        norm_stats=NormStats.from_dict(stats) if stats else None,
        dimension=doc.get("dimension"),
        shift_used=doc.get("shift_used"),
        history=[(tr, va) for tr, va in doc.get("history", [])],
        metadata=doc.get("metadata", {}),
    )
