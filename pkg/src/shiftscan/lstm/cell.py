"""Two-layer LSTM forward and backward passes in plain numpy.

Gate layout in the combined weight matrices is (input, forget, candidate,
output); each layer stores one (input_size + hidden_size, 4*hidden) weight
matrix and one 4*hidden bias vector.  All training math is float64.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


class ShapeMismatch(Exception):
    pass


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


@dataclass
class LstmLayerParams:
    weights: np.ndarray  # (input_size + hidden_size, 4 * hidden_size)
    bias: np.ndarray  # (4 * hidden_size,)

    @property
    def hidden_size(self) -> int:
        return self.bias.shape[0] // 4

    @property
    def input_size(self) -> int:
        return self.weights.shape[0] - self.hidden_size


@dataclass
class HeadParams:
    weights: np.ndarray  # (hidden_size, n_out)
    bias: np.ndarray  # (n_out,)


@dataclass
class ModelParams:
    layers: list[LstmLayerParams]
    head: HeadParams

    def arrays(self) -> list[np.ndarray]:
        """Flat parameter list in a fixed order (for Adam / serialization)."""
        out = []
        for layer in self.layers:
            out.extend([layer.weights, layer.bias])
        out.extend([self.head.weights, self.head.bias])
        return out

    def copy(self) -> "ModelParams":
        return ModelParams(
            layers=[LstmLayerParams(l.weights.copy(), l.bias.copy()) for l in self.layers],
            head=HeadParams(self.head.weights.copy(), self.head.bias.copy()),
        )


def init_params(
    input_size: int,
    hidden_sizes: tuple[int, ...],
    n_out: int,
    rng: np.random.Generator,
) -> ModelParams:
    """Uniform init in +-1/sqrt(hidden), forget-gate bias set to 1."""
    layers = []
    fan_in = input_size
    for h in hidden_sizes:
        bound = 1.0 / np.sqrt(h)
        w = rng.uniform(-bound, bound, size=(fan_in + h, 4 * h))
        b = np.zeros(4 * h)
        b[h : 2 * h] = 1.0
        layers.append(LstmLayerParams(w, b))
        fan_in = h
    bound = 1.0 / np.sqrt(hidden_sizes[-1])
    head = HeadParams(
        rng.uniform(-bound, bound, size=(hidden_sizes[-1], n_out)), np.zeros(n_out)
    )
    return ModelParams(layers=layers, head=head)


def lstm_layer_forward(x_seq: np.ndarray, layer: LstmLayerParams):
    """Run one LSTM layer over (batch, time, features); returns (h_seq, cache)."""
    if x_seq.ndim != 3 or x_seq.shape[2] != layer.input_size:
        raise ShapeMismatch(
            f"expected input (..., {layer.input_size}), got {x_seq.shape}"
        )
    batch, steps, _ = x_seq.shape
    hidden = layer.hidden_size
    h = np.zeros((batch, hidden))
    c = np.zeros((batch, hidden))
    h_seq = np.zeros((batch, steps, hidden))
    cache = {
        "x_seq": x_seq,
        "h_prev": np.zeros((batch, steps, hidden)),
        "c_prev": np.zeros((batch, steps, hidden)),
        "i": np.zeros((batch, steps, hidden)),
        "f": np.zeros((batch, steps, hidden)),
        "g": np.zeros((batch, steps, hidden)),
        "o": np.zeros((batch, steps, hidden)),
        "tanh_c": np.zeros((batch, steps, hidden)),
    }
    for t in range(steps):
        cache["h_prev"][:, t] = h
        cache["c_prev"][:, t] = c
        z = np.concatenate([x_seq[:, t], h], axis=1) @ layer.weights + layer.bias
        i = sigmoid(z[:, :hidden])
        f = sigmoid(z[:, hidden : 2 * hidden])
        g = np.tanh(z[:, 2 * hidden : 3 * hidden])
        o = sigmoid(z[:, 3 * hidden :])
        c = f * c + i * g
        tanh_c = np.tanh(c)
        h = o * tanh_c
        cache["i"][:, t] = i
        cache["f"][:, t] = f
        cache["g"][:, t] = g
        cache["o"][:, t] = o
        cache["tanh_c"][:, t] = tanh_c
        h_seq[:, t] = h
    return h_seq, cache


def lstm_layer_backward(dh_seq: np.ndarray, cache: dict, layer: LstmLayerParams):
    """Backprop through time; returns (dx_seq, dW, db)."""
    x_seq = cache["x_seq"]
    batch, steps, fin = x_seq.shape
    hidden = layer.hidden_size
    dW = np.zeros_like(layer.weights)
    db = np.zeros_like(layer.bias)
    dx_seq = np.zeros_like(x_seq)
    dh_next = np.zeros((batch, hidden))
    dc_next = np.zeros((batch, hidden))
    for t in range(steps - 1, -1, -1):
        i, f, g, o = cache["i"][:, t], cache["f"][:, t], cache["g"][:, t], cache["o"][:, t]
        tanh_c = cache["tanh_c"][:, t]
        dh = dh_seq[:, t] + dh_next
        do = dh * tanh_c
        dc = dh * o * (1.0 - tanh_c**2) + dc_next
        di = dc * g
        df = dc * cache["c_prev"][:, t]
        dg = dc * i
        dz = np.concatenate(
            [di * i * (1 - i), df * f * (1 - f), dg * (1 - g**2), do * o * (1 - o)],
            axis=1,
        )
        xh = np.concatenate([x_seq[:, t], cache["h_prev"][:, t]], axis=1)
        dW += xh.T @ dz
        db += dz.sum(axis=0)
        dxh = dz @ layer.weights.T
        dx_seq[:, t] = dxh[:, :fin]
        dh_next = dxh[:, fin:]
        dc_next = dc * f
    return dx_seq, dW, db


def lstm_forward(
    x_seq: np.ndarray,
    params: ModelParams,
    dropout_masks: Optional[list[np.ndarray]] = None,
):
    """Stacked-layer forward pass; returns (final hidden of last layer, caches).

    dropout_masks, when given, holds one inverted-scaling mask per layer
    applied to that layer's output sequence (training mode).
    """
    h = x_seq
    caches = []
    for k, layer in enumerate(params.layers):
        h, cache = lstm_layer_forward(h, layer)
        if dropout_masks is not None:
            h = h * dropout_masks[k]
        caches.append(cache)
    return h[:, -1], caches


def head_forward(hidden: np.ndarray, head: HeadParams, task: str) -> np.ndarray:
    """Task head: rectified scalar force, or 5-class softmax probabilities."""
    z = hidden @ head.weights + head.bias
    if task == "force":
        return np.maximum(z[:, 0], 0.0)
    if task == "contact":
        z = z - z.max(axis=1, keepdims=True)
        ez = np.exp(z)
        return ez / ez.sum(axis=1, keepdims=True)
    raise ValueError(f"unknown task {task!r}")


def model_forward(
    x_seq: np.ndarray,
    params: ModelParams,
    task: str,
    dropout_masks: Optional[list[np.ndarray]] = None,
):
    hidden, caches = lstm_forward(x_seq, params, dropout_masks)
    return head_forward(hidden, params.head, task), hidden, caches
