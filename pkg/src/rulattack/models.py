"""Recurrent regressors mapping a sensor window to a remaining-useful-life scalar.

Single-layer LSTM or GRU, final hidden state through a linear head. The
unroll is built on the ndgrad tape, so input gradients (for attacks) and
weight gradients (for training) come from the same forward code. Training
is plain Adam with global-norm gradient clipping, fully seeded.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import ndgrad as ng
from .data import Window, stack_windows
from .errors import ConfigError, DimensionError, FormatError, TrainingDivergedError
from .ndgrad import Tensor

ARCHS = ("lstm", "gru")
CHECKPOINT_VERSION = 1


def _weight_shapes(arch: str, input_dim: int, hidden_dim: int) -> dict[str, tuple]:
    gates = ("i", "f", "g", "o") if arch == "lstm" else ("r", "z", "n")
    shapes: dict[str, tuple] = {}
    for gate in gates:
        shapes[f"wx_{gate}"] = (input_dim, hidden_dim)
        shapes[f"wh_{gate}"] = (hidden_dim, hidden_dim)
        shapes[f"b_{gate}"] = (hidden_dim,)
    shapes["head_w"] = (hidden_dim, 1)
    shapes["head_b"] = (1,)
    return shapes


@dataclass
class ModelParams:
    """Weights of one trained (or freshly initialized) model.

    y_scale multiplies the head output so the network can learn targets in
    O(1) range while predictions stay in raw cycles; 1.0 until training
    fits it from the labels.
    """

    arch: str
    input_dim: int
    hidden_dim: int
    seed: int
    weights: dict[str, np.ndarray]
    y_scale: float = 1.0

    def clone(self) -> "ModelParams":
        return ModelParams(
            arch=self.arch,
            input_dim=self.input_dim,
            hidden_dim=self.hidden_dim,
            seed=self.seed,
            weights={k: v.copy() for k, v in self.weights.items()},
            y_scale=self.y_scale,
        )


@dataclass
class TrainConfig:
    epochs: int = 30
    learning_rate: float = 1e-3
    batch_size: int = 64
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: float = 5.0

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")


def init_params(arch: str, input_dim: int, hidden_dim: int, seed: int) -> ModelParams:
    """Uniform init in [-1/sqrt(H), 1/sqrt(H)] for every array, biases included."""
    if arch not in ARCHS:
        raise ConfigError(f"arch must be one of {ARCHS}, got {arch!r}")
    rng = np.random.default_rng(seed)
    bound = 1.0 / math.sqrt(hidden_dim)
    weights = {
        name: rng.uniform(-bound, bound, size=shape)
        for name, shape in _weight_shapes(arch, input_dim, hidden_dim).items()
    }
    return ModelParams(arch=arch, input_dim=input_dim, hidden_dim=hidden_dim, seed=seed, weights=weights)


# ---------------------------------------------------------------------------
# forward
# ---------------------------------------------------------------------------

def _unroll(params: ModelParams, wt: dict[str, Tensor], steps: list[Tensor]) -> Tensor:
    """Run the recurrent cell over the step inputs; returns (B,1) predictions."""
    hid = params.hidden_dim
    rows = steps[0].shape[0]
    h = Tensor(np.zeros((rows, hid)))

    if params.arch == "lstm":
        wx = ng.hstack([wt["wx_i"], wt["wx_f"], wt["wx_g"], wt["wx_o"]])
        wh = ng.hstack([wt["wh_i"], wt["wh_f"], wt["wh_g"], wt["wh_o"]])
        b = ng.hstack([wt["b_i"], wt["b_f"], wt["b_g"], wt["b_o"]])
        c = Tensor(np.zeros((rows, hid)))
        for x_t in steps:
            pre = ng.add_bias(ng.add(ng.matmul(x_t, wx), ng.matmul(h, wh)), b)
            gate_i = ng.sigmoid(ng.cols(pre, 0, hid))
            gate_f = ng.sigmoid(ng.cols(pre, hid, 2 * hid))
            gate_g = ng.tanh(ng.cols(pre, 2 * hid, 3 * hid))
            gate_o = ng.sigmoid(ng.cols(pre, 3 * hid, 4 * hid))
            c = ng.add(ng.mul(gate_f, c), ng.mul(gate_i, gate_g))
            h = ng.mul(gate_o, ng.tanh(c))
    else:
        wx = ng.hstack([wt["wx_r"], wt["wx_z"]])
        wh = ng.hstack([wt["wh_r"], wt["wh_z"]])
        b = ng.hstack([wt["b_r"], wt["b_z"]])
        ones = Tensor(np.ones((rows, hid)))
        for x_t in steps:
            pre = ng.add_bias(ng.add(ng.matmul(x_t, wx), ng.matmul(h, wh)), b)
            gate_r = ng.sigmoid(ng.cols(pre, 0, hid))
            gate_z = ng.sigmoid(ng.cols(pre, hid, 2 * hid))
            cand = ng.tanh(
                ng.add_bias(
                    ng.add(ng.matmul(x_t, wt["wx_n"]), ng.matmul(ng.mul(gate_r, h), wt["wh_n"])),
                    wt["b_n"],
                )
            )
            h = ng.add(ng.mul(ng.sub(ones, gate_z), h), ng.mul(gate_z, cand))

    out = ng.add_bias(ng.matmul(h, wt["head_w"]), wt["head_b"])
    return ng.scale(out, params.y_scale)


def forward(params: ModelParams, window) -> Tensor:
    """Predict RUL for one (M, N) window; joins the tape if the window does."""
    x = window if isinstance(window, Tensor) else Tensor(window)
    if x.data.ndim != 2 or x.shape[1] != params.input_dim:
        raise DimensionError(
            f"window shape {tuple(x.shape)} does not match input_dim {params.input_dim}"
        )
    wt = {k: Tensor(v) for k, v in params.weights.items()}
    steps = [ng.row(x, t) for t in range(x.shape[0])]
    return _unroll(params, wt, steps)


def predict(params: ModelParams, windows: np.ndarray) -> np.ndarray:
    """Batched predictions for a (B, M, N) stack; no gradients recorded."""
    x = np.asarray(windows, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] != params.input_dim:
        raise DimensionError(
            f"window stack shape {x.shape} does not match input_dim {params.input_dim}"
        )
    wt = {k: Tensor(v) for k, v in params.weights.items()}
    steps = [Tensor(np.ascontiguousarray(x[:, t, :])) for t in range(x.shape[1])]
    return _unroll(params, wt, steps).data[:, 0].copy()


class RulPredictor:
    """Params plus the forward/predict duo the attack and report code expects."""

    def __init__(self, params: ModelParams, model_id: str | None = None):
        self.params = params
        self.model_id = model_id if model_id is not None else params.arch

    def forward(self, x) -> Tensor:
        return forward(self.params, x)

    def predict(self, windows: np.ndarray) -> np.ndarray:
        return predict(self.params, windows)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def train(
    params: ModelParams,
    dataset: Sequence[Window],
    cfg: TrainConfig,
) -> tuple[ModelParams, list[float]]:
    """Adam training on mean-squared error; returns new params and per-epoch loss.

    Deterministic given cfg.seed: init is untouched, batch order comes from
    one seeded generator. Raises TrainingDivergedError on a non-finite loss.
    """
    work = params.clone()
    if cfg.epochs == 0:
        return work, []

    x_all, y_all = stack_windows(dataset)
    if x_all.shape[2] != params.input_dim:
        raise DimensionError(
            f"dataset feature count {x_all.shape[2]} does not match input_dim {params.input_dim}"
        )
    work.y_scale = float(max(y_all.max(), 1.0))

    rng = np.random.default_rng(cfg.seed)
    adam_m = {k: np.zeros_like(v) for k, v in work.weights.items()}
    adam_v = {k: np.zeros_like(v) for k, v in work.weights.items()}
    step = 0
    n = len(y_all)
    history = []

    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            xb = x_all[idx]
            yb = y_all[idx]
            wt = {k: Tensor(v, requires_grad=True) for k, v in work.weights.items()}
            steps = [Tensor(np.ascontiguousarray(xb[:, t, :])) for t in range(xb.shape[1])]
            pred = _unroll(work, wt, steps)
            loss = ng.mse_loss(pred, Tensor(yb[:, None]))
            loss_val = loss.item()
            if not math.isfinite(loss_val):
                raise TrainingDivergedError(
                    f"non-finite loss {loss_val} at epoch {epoch}, batch starting {start} "
                    f"(lr={cfg.learning_rate}, batch_size={cfg.batch_size})"
                )
            ng.backward(loss)

            grads = {k: (wt[k].grad if wt[k].grad is not None else np.zeros_like(wt[k].data)) for k in wt}
            gnorm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
            if cfg.clip_norm > 0 and gnorm > cfg.clip_norm:
                scale = cfg.clip_norm / gnorm
                grads = {k: g * scale for k, g in grads.items()}

            step += 1
            bias1 = 1.0 - cfg.beta1**step
            bias2 = 1.0 - cfg.beta2**step
            for k, g in grads.items():
                adam_m[k] = cfg.beta1 * adam_m[k] + (1.0 - cfg.beta1) * g
                adam_v[k] = cfg.beta2 * adam_v[k] + (1.0 - cfg.beta2) * g * g
                update = (adam_m[k] / bias1) / (np.sqrt(adam_v[k] / bias2) + cfg.adam_eps)
                work.weights[k] = work.weights[k] - cfg.learning_rate * update
            epoch_loss += loss_val * len(idx)
        history.append(epoch_loss / n)
    return work, history


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save(params: ModelParams, path) -> None:
    """Write a JSON checkpoint; float round-trip is exact via repr formatting."""
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "arch": params.arch,
        "input_dim": params.input_dim,
        "hidden_dim": params.hidden_dim,
        "seed": params.seed,
        "y_scale": params.y_scale,
        "weights": {k: v.tolist() for k, v in params.weights.items()},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load(path, arch: str | None = None) -> ModelParams:
    """Read a checkpoint, validating version, arch, and every weight shape."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: not a valid checkpoint ({exc})") from None
    if not isinstance(doc, dict) or doc.get("format_version") != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint format_version "
                          f"{doc.get('format_version') if isinstance(doc, dict) else doc!r}")
    file_arch = doc.get("arch")
    if file_arch not in ARCHS:
        raise FormatError(f"{path}: unknown arch {file_arch!r}")
    if arch is not None and arch != file_arch:
        raise FormatError(f"{path}: checkpoint holds a {file_arch} model, expected {arch}")
    try:
        input_dim = int(doc["input_dim"])
        hidden_dim = int(doc["hidden_dim"])
        seed = int(doc["seed"])
        y_scale = float(doc["y_scale"])
        raw = doc["weights"]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: missing or malformed checkpoint field ({exc})") from None

    shapes = _weight_shapes(file_arch, input_dim, hidden_dim)
    if set(raw) != set(shapes):
        raise FormatError(f"{path}: weight names do not match a {file_arch} model")
    weights = {}
    for name, shape in shapes.items():
        arr = np.asarray(raw[name], dtype=np.float64)
        if arr.shape != shape:
            raise FormatError(f"{path}: weight {name} has shape {arr.shape}, expected {shape}")
        weights[name] = arr
    return ModelParams(
        arch=file_arch,
        input_dim=input_dim,
        hidden_dim=hidden_dim,
        seed=seed,
        weights=weights,
        y_scale=y_scale,
    )
