"""Estimator-style sequence models for tactile force and contact location.

Both models share the two-layer LSTM backbone (32 and 12 hidden units,
dropout 0.2 after each layer) and differ in window length and head:
force regression uses windows of 20 samples and a rectified scalar output,
contact classification uses windows of 80 samples and a 5-class softmax.

Training runs in float64 numpy; streaming inference uses a compiled
float32 kernel to stay inside the 1 ms per-window real-time budget.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .cell import HeadParams, LstmLayerParams, ModelParams, model_forward
from .data import NormalizationStats, WindowDataset
from .train import TrainConfig, TrainHistory, predict as _predict, train as _train

FORMAT_MAGIC = b"SHIFTSCAN-LSTM\n"
FORMAT_VERSION = 1


class ModelIOError(Exception):
    pass


class NotFitted(Exception):
    pass


_LOG2E = np.float32(1.4426950408889634)
_LN2 = np.float32(0.6931471805599453)
# powers of two for 2^n reconstruction after range reduction; indexed n + 64
_POW2_TABLE = np.array([math.ldexp(1.0, n) for n in range(-64, 65)], dtype=np.float32)


@njit(cache=True, fastmath=True, inline="always")
def _expv(s, e, tab):  # pragma: no cover
    # elementwise exp: x = n*ln2 + r with |r| <= ln2/2, then
    # e^x = 2^n * (degree-6 series in r).  Branch free and table based
    # (no ldexp call) so the loop vectorizes; relative error ~1e-7.
    for j in range(s.size):
        x = min(max(s[j], np.float32(-40.0)), np.float32(40.0))
        n = int(np.floor(x * _LOG2E + np.float32(0.5)))
        r = x - np.float32(n) * _LN2
        p = np.float32(1.0) + r * (np.float32(1.0) + r * (np.float32(0.5) + r * (
            np.float32(1.0 / 6.0) + r * (np.float32(1.0 / 24.0) + r * (
                np.float32(1.0 / 120.0) + r * np.float32(1.0 / 720.0))))))
        e[j] = p * tab[n + 64]


@njit(cache=True, fastmath=True)
def _forward_window_f32(x, wx1, wh1, b1, wx2, wh2, b2, head_w, head_b, m1, m2, tab):  # pragma: no cover
    # Weight matrices are (fan_in, 4*hidden): accumulating whole gate rows
    # keeps the inner loops contiguous over the 4*hidden axis so they
    # vectorize.  Gate nonlinearities share one exp pass per layer: m holds
    # -1 for sigmoid slots (i, f, o) and +2 for the tanh slot (g), so with
    # e = exp(m*z), sigmoid(z) = 1/(1+e) and tanh(z) = (e-1)/(e+1).
    steps = x.shape[0]
    n_in = x.shape[1]
    h1n = wh1.shape[0]
    h2n = wh2.shape[0]
    one = np.float32(1.0)
    two = np.float32(2.0)
    h1 = np.zeros(h1n, dtype=np.float32)
    c1 = np.zeros(h1n, dtype=np.float32)
    h2 = np.zeros(h2n, dtype=np.float32)
    c2 = np.zeros(h2n, dtype=np.float32)
    z1 = np.empty(4 * h1n, dtype=np.float32)
    z2 = np.empty(4 * h2n, dtype=np.float32)
    e1 = np.empty(4 * h1n, dtype=np.float32)
    e2 = np.empty(4 * h2n, dtype=np.float32)
    sc1 = np.empty(h1n, dtype=np.float32)
    ec1 = np.empty(h1n, dtype=np.float32)
    sc2 = np.empty(h2n, dtype=np.float32)
    ec2 = np.empty(h2n, dtype=np.float32)
    for t in range(steps):
        for j in range(4 * h1n):
            z1[j] = b1[j]
        for k in range(n_in):
            v = x[t, k]
            for j in range(4 * h1n):
                z1[j] += v * wx1[k, j]
        for k in range(h1n):
            v = h1[k]
            for j in range(4 * h1n):
                z1[j] += v * wh1[k, j]
        for j in range(4 * h1n):
            z1[j] = m1[j] * z1[j]
        _expv(z1, e1, tab)
        for k in range(h1n):
            gg = (e1[2 * h1n + k] - one) / (e1[2 * h1n + k] + one)
            c1[k] = c1[k] / (one + e1[h1n + k]) + gg / (one + e1[k])
            sc1[k] = two * c1[k]
        _expv(sc1, ec1, tab)
        for k in range(h1n):
            h1[k] = (ec1[k] - one) / (ec1[k] + one) / (one + e1[3 * h1n + k])
        for j in range(4 * h2n):
            z2[j] = b2[j]
        for k in range(h1n):
            v = h1[k]
            for j in range(4 * h2n):
                z2[j] += v * wx2[k, j]
        for k in range(h2n):
            v = h2[k]
            for j in range(4 * h2n):
                z2[j] += v * wh2[k, j]
        for j in range(4 * h2n):
            z2[j] = m2[j] * z2[j]
        _expv(z2, e2, tab)
        for k in range(h2n):
            gg = (e2[2 * h2n + k] - one) / (e2[2 * h2n + k] + one)
            c2[k] = c2[k] / (one + e2[h2n + k]) + gg / (one + e2[k])
            sc2[k] = two * c2[k]
        _expv(sc2, ec2, tab)
        for k in range(h2n):
            h2[k] = (ec2[k] - one) / (ec2[k] + one) / (one + e2[3 * h2n + k])
    out = np.empty(head_b.shape[0], dtype=np.float32)
    for j in range(head_b.shape[0]):
        acc = head_b[j]
        for k in range(h2n):
            acc += h2[k] * head_w[k, j]
        out[j] = acc
    return out


def _gate_sign_vector(hidden: int) -> np.ndarray:
    m = np.full(4 * hidden, -1.0, dtype=np.float32)
    m[2 * hidden : 3 * hidden] = 2.0
    return m


class _LstmSequenceModel:
    """Shared fit/predict machinery; subclasses fix the task and defaults."""

    task: str = ""
    _default_sequence_length: int = 0
    _param_names = (
        "sequence_length",
        "hidden_sizes",
        "dropout_rate",
        "learning_rate",
        "batch_size",
        "max_epochs",
        "patience",
        "seed",
    )

    def __init__(
        self,
        sequence_length: Optional[int] = None,
        hidden_sizes: tuple[int, ...] = (32, 12),
        dropout_rate: float = 0.2,
        learning_rate: float = 1e-3,
        batch_size: int = 64,
        max_epochs: int = 500,
        patience: int = 20,
        seed: int = 0,
    ):
        self.sequence_length = (
            self._default_sequence_length if sequence_length is None else sequence_length
        )
        self.hidden_sizes = tuple(hidden_sizes)
        self.dropout_rate = dropout_rate
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.seed = seed
        self.params_: Optional[ModelParams] = None
        self.stats_: Optional[NormalizationStats] = None
        self.history_: Optional[TrainHistory] = None

    # sklearn-style parameter plumbing
    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names}

    def set_params(self, **params) -> "_LstmSequenceModel":
        for name, value in params.items():
            if name not in self._param_names:
                raise ValueError(f"unknown parameter {name!r}")
            setattr(self, name, value)
        return self

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            patience=self.patience,
            dropout_rate=self.dropout_rate,
            seed=self.seed,
        )

    def fit(self, train_ds: WindowDataset, val_ds: WindowDataset) -> "_LstmSequenceModel":
        for name, ds in (("train", train_ds), ("validation", val_ds)):
            if ds.windows.shape[1] != self.sequence_length:
                raise ValueError(
                    f"{name} windows have length {ds.windows.shape[1]}, "
                    f"model expects {self.sequence_length}"
                )
        self.params_, self.history_ = _train(
            train_ds, val_ds, self.task, self.hidden_sizes, self._train_config()
        )
        self.stats_ = train_ds.stats
        return self

    def _check_fitted(self) -> ModelParams:
        if self.params_ is None:
            raise NotFitted("call fit() or load() first")
        return self.params_

    def _forward(self, windows: np.ndarray) -> np.ndarray:
        params = self._check_fitted()
        windows = np.asarray(windows, dtype=float)
        if windows.ndim != 3 or windows.shape[1] != self.sequence_length:
            raise ValueError(
                f"expected windows of shape (n, {self.sequence_length}, features)"
            )
        return _predict(params, windows, self.task)

    # serialization: deterministic flat binary with a JSON shape header
    def save(self, path) -> None:
        params = self._check_fitted()
        if self.stats_ is None:
            raise NotFitted("model has no normalization statistics")
        arrays: list[tuple[str, np.ndarray]] = []
        for k, layer in enumerate(params.layers):
            arrays.append((f"layer{k}.weights", layer.weights))
            arrays.append((f"layer{k}.bias", layer.bias))
        arrays.append(("head.weights", params.head.weights))
        arrays.append(("head.bias", params.head.bias))
        header = {
            "format_version": FORMAT_VERSION,
            "task": self.task,
            "sequence_length": self.sequence_length,
            "hidden_sizes": list(self.hidden_sizes),
            "input_features": int(params.layers[0].input_size),
            "norm_mean": [float(v) for v in self.stats_.mean],
            "norm_std": [float(v) for v in self.stats_.std],
            "arrays": [
                {"name": name, "shape": list(a.shape), "dtype": "<f8"}
                for name, a in arrays
            ],
        }
        with open(path, "wb") as fh:
            fh.write(FORMAT_MAGIC)
            fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
            for _, a in arrays:
                fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "_LstmSequenceModel":
        with open(path, "rb") as fh:
            magic = fh.read(len(FORMAT_MAGIC))
            if magic != FORMAT_MAGIC:
                raise ModelIOError(f"{path}: not a shiftscan model file")
            header = json.loads(fh.readline().decode())
            if header.get("format_version") != FORMAT_VERSION:
                raise ModelIOError(f"unsupported format version {header.get('format_version')}")
            task = header["task"]
            model_cls = {"force": ForceRegressor, "contact": ContactClassifier}[task]
            if cls is not _LstmSequenceModel and cls.task != task:
                raise ModelIOError(
                    f"{path} holds a {task!r} model, expected {cls.task!r}"
                )
            model = model_cls(
                sequence_length=header["sequence_length"],
                hidden_sizes=tuple(header["hidden_sizes"]),
            )
            raw: dict[str, np.ndarray] = {}
            for spec in header["arrays"]:
                shape = tuple(spec["shape"])
                count = int(np.prod(shape))
                data = np.frombuffer(fh.read(count * 8), dtype=spec["dtype"])
                raw[spec["name"]] = data.reshape(shape).copy()
        layers = []
        for k in range(len(header["hidden_sizes"])):
            layers.append(LstmLayerParams(raw[f"layer{k}.weights"], raw[f"layer{k}.bias"]))
        model.params_ = ModelParams(
            layers=layers, head=HeadParams(raw["head.weights"], raw["head.bias"])
        )
        model.stats_ = NormalizationStats(
            mean=np.asarray(header["norm_mean"], dtype=float),
            std=np.asarray(header["norm_std"], dtype=float),
        )
        return model

    def _kernel_args(self):
        params = self._check_fitted()
        if len(params.layers) != 2:
            raise ValueError("the streaming kernel supports exactly two LSTM layers")
        args = []
        for layer in params.layers:
            fin = layer.input_size
            args.append(np.ascontiguousarray(layer.weights[:fin], dtype=np.float32))
            args.append(np.ascontiguousarray(layer.weights[fin:], dtype=np.float32))
            args.append(np.ascontiguousarray(layer.bias, dtype=np.float32))
        args.append(np.ascontiguousarray(params.head.weights, dtype=np.float32))
        args.append(np.ascontiguousarray(params.head.bias, dtype=np.float32))
        for layer in params.layers:
            args.append(_gate_sign_vector(layer.hidden_size))
        args.append(_POW2_TABLE)
        return tuple(args)

    def forward_window_fast(self, window_f32: np.ndarray, kernel_args=None) -> np.ndarray:
        """Single-window float32 head output (pre-activation)."""
        if kernel_args is None:
            kernel_args = self._kernel_args()
        return _forward_window_f32(window_f32, *kernel_args)


class ForceRegressor(_LstmSequenceModel):
    """Contact-force estimator: rectified scalar output in newtons."""

    task = "force"
    _default_sequence_length = 20

    def predict(self, windows: np.ndarray) -> np.ndarray:
        return self._forward(windows)


class ContactClassifier(_LstmSequenceModel):
    """Five-state contact-location classifier (0 = no contact)."""

    task = "contact"
    _default_sequence_length = 80

    def predict_proba(self, windows: np.ndarray) -> np.ndarray:
        return self._forward(windows)

    def predict(self, windows: np.ndarray) -> np.ndarray:
        return np.argmax(self._forward(windows), axis=1)


def load_model(path) -> _LstmSequenceModel:
    return _LstmSequenceModel.load(path)


@dataclass
class InferenceReport:
    predictions: np.ndarray
    latencies_s: np.ndarray
    budget_s: float

    @property
    def median_latency_s(self) -> float:
        return float(np.median(self.latencies_s))

    @property
    def p99_latency_s(self) -> float:
        return float(np.percentile(self.latencies_s, 99))

    @property
    def over_budget(self) -> np.ndarray:
        return self.latencies_s > self.budget_s

    @property
    def n_over_budget(self) -> int:
        return int(np.count_nonzero(self.over_budget))

    def to_text(self) -> str:
        return (
            f"windows = {len(self.latencies_s)}\n"
            f"median_latency_ms = {self.median_latency_s * 1e3:.4f}\n"
            f"p99_latency_ms = {self.p99_latency_s * 1e3:.4f}\n"
            f"budget_ms = {self.budget_s * 1e3:.4f}\n"
            f"over_budget_windows = {self.n_over_budget}\n"
        )


def infer_stream(
    stream_volts: np.ndarray,
    model: _LstmSequenceModel,
    budget_s: float = 1e-3,
) -> InferenceReport:
    """Streaming inference: one prediction per tick once the window fills.

    Each tick's timed work is normalizing the arriving sample, forming the
    window, and running the forward pass.  Emits stream_length - window + 1
    predictions and per-window latencies.
    """
    if model.stats_ is None:
        raise NotFitted("model has no normalization statistics")
    stream = np.asarray(stream_volts, dtype=float)
    length = model.sequence_length
    if stream.ndim != 2 or stream.shape[0] < length:
        raise ValueError(f"stream must be (n >= {length}, features)")
    kernel_args = model._kernel_args()
    mean = model.stats_.mean.astype(np.float32)
    inv_std = (1.0 / model.stats_.std).astype(np.float32)
    raw = stream.astype(np.float32)
    buf = np.empty_like(raw)
    # warm-up outside the timed region (jit compilation, cache faults)
    buf[:length] = (raw[:length] - mean) * inv_std
    _forward_window_f32(buf[:length], *kernel_args)

    n = stream.shape[0]
    n_pred = n - length + 1
    latencies = np.empty(n_pred)
    outputs = np.empty((n_pred, kernel_args[7].shape[0]), dtype=np.float32)
    for i in range(length - 1, n):
        t0 = time.perf_counter()
        buf[i] = (raw[i] - mean) * inv_std
        outputs[i - length + 1] = _forward_window_f32(
            buf[i - length + 1 : i + 1], *kernel_args
        )
        latencies[i - length + 1] = time.perf_counter() - t0
    if model.task == "force":
        predictions = np.maximum(outputs[:, 0], 0.0).astype(float)
    else:
        predictions = np.argmax(outputs, axis=1).astype(np.int64)
    return InferenceReport(predictions=predictions, latencies_s=latencies, budget_s=budget_s)
