"""Adam training with backpropagation through time and early stopping."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cell import (
    HeadParams,
    LstmLayerParams,
    ModelParams,
    init_params,
    lstm_layer_backward,
    lstm_layer_forward,
)
from .data import WindowDataset


class EmptyDataset(Exception):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 64
    max_epochs: int = 500
    patience: int = 20
    dropout_rate: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


class Adam:
    """Standard Adam over a flat list of parameter arrays (updated in place)."""

    def __init__(self, params: list[np.ndarray], config: TrainConfig):
        self.params = params
        self.cfg = config
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray]) -> None:
        cfg = self.cfg
        self.t += 1
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= cfg.beta1
            m += (1 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1 - cfg.beta2) * g * g
            m_hat = m / (1 - cfg.beta1**self.t)
            v_hat = v / (1 - cfg.beta2**self.t)
            p -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)


class EarlyStopper:
    """Stop when the monitored loss has not improved for `patience` epochs."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_loss = np.inf
        self.best_epoch: Optional[int] = None
        self._since_best = 0

    def update(self, epoch: int, loss: float) -> bool:
        """Record one epoch's loss; returns True when training should stop."""
        if loss < self.best_loss:
            self.best_loss = loss
            self.best_epoch = epoch
            self._since_best = 0
            return False
        self._since_best += 1
        return self._since_best >= self.patience


def _loss_and_grads(
    params: ModelParams,
    x: np.ndarray,
    y: np.ndarray,
    task: str,
    dropout_rate: float = 0.0,
    rng: Optional[np.random.Generator] = None,
):
    """Mini-batch loss, gradients (ordered like params.arrays()), predictions."""
    batch = x.shape[0]
    h = x
    caches = []
    masks = []
    for layer in params.layers:
        h_seq, cache = lstm_layer_forward(h, layer)
        mask = None
        if dropout_rate > 0.0:
            mask = (rng.random(h_seq.shape) >= dropout_rate) / (1.0 - dropout_rate)
            h_seq = h_seq * mask
        caches.append(cache)
        masks.append(mask)
        h = h_seq
    hidden = h[:, -1]
    z = hidden @ params.head.weights + params.head.bias

    if task == "force":
        pred = np.maximum(z[:, 0], 0.0)
        diff = pred - y
        loss = float(np.mean(diff * diff))
        dz = np.zeros_like(z)
        dz[:, 0] = 2.0 * diff * (z[:, 0] > 0) / batch
    elif task == "contact":
        zs = z - z.max(axis=1, keepdims=True)
        ez = np.exp(zs)
        probs = ez / ez.sum(axis=1, keepdims=True)
        labels = y.astype(int)
        loss = float(-np.mean(np.log(probs[np.arange(batch), labels] + 1e-300)))
        dz = probs.copy()
        dz[np.arange(batch), labels] -= 1.0
        dz /= batch
        pred = probs
    else:
        raise ValueError(f"unknown task {task!r}")

    d_head_w = hidden.T @ dz
    d_head_b = dz.sum(axis=0)
    d_hidden = dz @ params.head.weights.T

    top = params.layers[-1].hidden_size
    dh_seq = np.zeros((batch, x.shape[1], top))
    dh_seq[:, -1] = d_hidden
    layer_grads: list[tuple[np.ndarray, np.ndarray]] = []
    for k in range(len(params.layers) - 1, -1, -1):
        if masks[k] is not None:
            dh_seq = dh_seq * masks[k]
        dx_seq, dw, db = lstm_layer_backward(dh_seq, caches[k], params.layers[k])
        layer_grads.append((dw, db))
        dh_seq = dx_seq
    layer_grads.reverse()

    grads: list[np.ndarray] = []
    for dw, db in layer_grads:
        grads.extend([dw, db])
    grads.extend([d_head_w, d_head_b])
    return loss, grads, pred


def evaluate_loss(
    params: ModelParams, x: np.ndarray, y: np.ndarray, task: str, chunk: int = 256
) -> float:
    """Dropout-off loss over a full split, sample-weighted across chunks."""
    total = 0.0
    for start in range(0, x.shape[0], chunk):
        xb = x[start : start + chunk]
        yb = y[start : start + chunk]
        loss, _, _ = _loss_and_grads(params, xb, yb, task)
        total += loss * xb.shape[0]
    return total / x.shape[0]


def predict(params: ModelParams, x: np.ndarray, task: str, chunk: int = 256) -> np.ndarray:
    """Dropout-off predictions: forces, or class probabilities (n, 5)."""
    outs = []
    for start in range(0, x.shape[0], chunk):
        _, _, pred = _loss_and_grads(params, x[start : start + chunk],
                                     np.zeros(min(chunk, x.shape[0] - start)), task)
        outs.append(pred)
    return np.concatenate(outs, axis=0)


@dataclass
class TrainHistory:
    epochs: list[int] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: Optional[int] = None

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,val_loss"]
        for e, tr, vl in zip(self.epochs, self.train_loss, self.val_loss):
            lines.append(f"{e},{tr:.9g},{vl:.9g}")
        return "\n".join(lines) + "\n"


def train(
    train_ds: WindowDataset,
    val_ds: WindowDataset,
    task: str,
    hidden_sizes: tuple[int, ...],
    config: TrainConfig,
) -> tuple[ModelParams, TrainHistory]:
    """Mini-batch Adam with BPTT, dropout, and patience-based early stopping.

    Returns the parameters from the best validation epoch.  Deterministic
    for a fixed config seed: initialization, batch shuffling, and dropout
    masks all come from one seeded generator.
    """
    if train_ds.windows.shape[0] == 0 or val_ds.windows.shape[0] == 0:
        raise EmptyDataset("train and validation splits must be nonempty")
    n_out = 1 if task == "force" else 5
    rng = np.random.default_rng(config.seed)
    params = init_params(train_ds.windows.shape[2], hidden_sizes, n_out, rng)
    opt = Adam(params.arrays(), config)
    stopper = EarlyStopper(config.patience)
    history = TrainHistory()
    best_params = params.copy()

    x_train, y_train = train_ds.windows, train_ds.targets
    x_val, y_val = val_ds.windows, val_ds.targets
    n = x_train.shape[0]
    for epoch in range(config.max_epochs):
        order = rng.permutation(n)
        running = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            loss, grads, _ = _loss_and_grads(
                params, x_train[idx], y_train[idx], task, config.dropout_rate, rng
            )
            opt.step(grads)
            running += loss * len(idx)
        train_loss = running / n
        val_loss = evaluate_loss(params, x_val, y_val, task)
        history.epochs.append(epoch)
        history.train_loss.append(train_loss)
        history.val_loss.append(val_loss)
        improved = val_loss < stopper.best_loss
        stop = stopper.update(epoch, val_loss)
        if improved:
            best_params = params.copy()
        if stop:
            break
    history.best_epoch = stopper.best_epoch
    return best_params, history


def gradient_check(
    task: str,
    seed: int = 0,
    input_size: int = 2,
    hidden_sizes: tuple[int, ...] = (4, 3),
    steps: int = 6,
    batch: int = 3,
    h: float = 1e-5,
) -> float:
    """Max relative error of analytic vs central-finite-difference gradients.

    Uses a small double-precision network so the O(h^2) truncation error of
    the central differences stays far below the 1e-4 verification threshold.
    """
    rng = np.random.default_rng(seed)
    n_out = 1 if task == "force" else 5
    params = init_params(input_size, hidden_sizes, n_out, rng)
    x = rng.standard_normal((batch, steps, input_size))
    if task == "force":
        y = rng.uniform(0.0, 2.0, size=batch)
    else:
        y = rng.integers(0, n_out, size=batch).astype(float)

    _, grads, _ = _loss_and_grads(params, x, y, task)
    arrays = params.arrays()
    worst = 0.0
    for arr, grad in zip(arrays, grads):
        flat = arr.reshape(-1)
        gflat = grad.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            lp, _, _ = _loss_and_grads(params, x, y, task)
            flat[j] = orig - h
            lm, _, _ = _loss_and_grads(params, x, y, task)
            flat[j] = orig
            numeric = (lp - lm) / (2 * h)
            denom = max(abs(gflat[j]), abs(numeric), 1e-8)
            worst = max(worst, abs(gflat[j] - numeric) / denom)
    return worst
