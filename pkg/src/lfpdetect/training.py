"""Dataset preparation and from-scratch gradient training.

Windows are cut non-overlapping by default (stride = window length), scaled
by the recording's fixed full-scale constant, and labeled positive when at
least half their samples fall inside an annotated event. Training is plain
mini-batch gradient descent with momentum on binary cross-entropy; the model
returned is the snapshot from the epoch with the best validation loss.
"""

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .nn import (CnnModel, ConvFrontEnd, DenseLayer, MlpModel,
                 activation_grad, apply_activation, conv1d_forward, logistic)


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; carries the epoch where it happened."""

    def __init__(self, epoch, message=None):
        super().__init__(message or f"training diverged at epoch {epoch}")
        self.epoch = epoch


@dataclass
class WindowedDataset:
    """Fixed-length input windows with binary labels and provenance."""

    windows: np.ndarray        # (n, window_len) float64, scaled to [-1, 1]
    labels: np.ndarray         # (n,) int8 in {0, 1}
    source_index: np.ndarray   # (n,) window start sample in the recording

    def __post_init__(self):
        self.windows = np.asarray(self.windows, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int8)
        self.source_index = np.asarray(self.source_index, dtype=np.int64)
        if self.windows.ndim != 2:
            raise ValueError("windows must be a 2-D matrix")
        n = self.windows.shape[0]
        if self.labels.shape != (n,) or self.source_index.shape != (n,):
            raise ValueError("labels/source_index length mismatch")
        if n and not np.all((self.labels == 0) | (self.labels == 1)):
            raise ValueError("labels must be 0 or 1")

    def __len__(self):
        return self.windows.shape[0]

    @property
    def window_len(self):
        return self.windows.shape[1]

    @property
    def n_positive(self):
        return int(np.sum(self.labels == 1))

    @property
    def n_negative(self):
        return int(np.sum(self.labels == 0))

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return WindowedDataset(self.windows[indices], self.labels[indices],
                               self.source_index[indices])


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0
    neg_pos_ratio: float = 3.0
    train_fraction: float = 0.7
    momentum: float = 0.9

    def __post_init__(self):
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.neg_pos_ratio < 1.0:
            raise ValueError("neg_pos_ratio must be >= 1")
        if not (0.0 < self.train_fraction < 1.0):
            raise ValueError("train_fraction must be in (0, 1)")
        if not (0.0 <= self.momentum < 1.0):
            raise ValueError("momentum must be in [0, 1)")


@dataclass
class LossHistory:
    """Per-epoch binary cross-entropy on the train and validation sets."""

    train_bce: list = field(default_factory=list)
    val_bce: list = field(default_factory=list)
    best_epoch: int = -1

    @property
    def best_val_bce(self):
        return self.val_bce[self.best_epoch]


def window_dataset(recording, window_len, stride=None):
    """Tile a recording into labeled windows.

    A window is positive when at least half of its samples lie inside an
    annotated event (integer comparison, so the exactly-half case counts
    as positive). Samples are scaled by the recording's full_scale_uv.
    """
    if window_len < 1:
        raise ValueError("window_len must be >= 1")
    stride = window_len if stride is None else stride
    if stride < 1:
        raise ValueError("stride must be >= 1")
    x = np.asarray(recording.samples, dtype=np.float64)
    n = x.shape[0]
    if n == 0:
        raise ValueError("empty recording")
    if n < window_len:
        raise ValueError(f"recording shorter ({n}) than window ({window_len})")

    n_win = (n - window_len) // stride + 1
    starts = np.arange(n_win, dtype=np.int64) * stride
    view = np.lib.stride_tricks.sliding_window_view(x, window_len)[::stride]
    windows = np.ascontiguousarray(view[:n_win]) / recording.full_scale_uv

    in_event = np.zeros(n, dtype=np.int64)
    fs = recording.fs_hz
    for ev in recording.annotations:
        lo = int(np.ceil(ev.start_s * fs - 1e-9))
        hi = int(np.ceil(ev.end_s * fs - 1e-9))
        in_event[max(lo, 0):min(hi, n)] = 1
    csum = np.concatenate(([0], np.cumsum(in_event)))
    counts = csum[starts + window_len] - csum[starts]
    labels = (2 * counts >= window_len).astype(np.int8)
    return WindowedDataset(windows, labels, starts)


def rebalance(dataset, neg_pos_ratio, seed):
    """Keep all positives, subsample negatives without replacement down to
    neg_pos_ratio * n_positive (all of them if fewer exist). Seeded."""
    pos = np.flatnonzero(dataset.labels == 1)
    neg = np.flatnonzero(dataset.labels == 0)
    if pos.size == 0:
        raise ValueError("no positive windows; training impossible")
    if neg.size == 0:
        raise ValueError("no negative windows; nothing to rebalance against")
    n_keep = min(neg.size, int(round(neg_pos_ratio * pos.size)))
    rng = np.random.default_rng(seed)
    kept_neg = rng.choice(neg, size=n_keep, replace=False)
    keep = np.sort(np.concatenate([pos, kept_neg]))
    return dataset.subset(keep)


def split_dataset(dataset, train_fraction, seed):
    """Stratified train/validation split: per class, round(fraction * size)
    windows go to train. A class with fewer than two members goes wholly to
    train with a warning. Disjoint and exhaustive."""
    if not (0.0 < train_fraction < 1.0):
        raise ValueError("train_fraction must be in (0, 1)")
    if len(dataset) < 2:
        raise ValueError("need at least two windows to split")
    rng = np.random.default_rng(seed)
    train_idx, val_idx = [], []
    for cls in (0, 1):
        members = np.flatnonzero(dataset.labels == cls)
        if members.size == 0:
            continue
        if members.size < 2:
            warnings.warn(f"class {cls} has {members.size} window(s); "
                          f"sending it wholly to the training split")
            train_idx.append(members)
            continue
        perm = rng.permutation(members)
        n_train = int(round(train_fraction * members.size))
        n_train = min(max(n_train, 1), members.size - 1)
        train_idx.append(perm[:n_train])
        val_idx.append(perm[n_train:])
    train_idx = np.sort(np.concatenate(train_idx))
    val_idx = np.sort(np.concatenate(val_idx)) if val_idx else \
        np.empty(0, dtype=np.int64)
    return dataset.subset(train_idx), dataset.subset(val_idx)


def bce_loss(probs, labels):
    """Mean binary cross-entropy; probabilities are already strictly inside
    (0, 1) from the logistic output."""
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def glorot_uniform(rng, out_size, in_size):
    limit = np.sqrt(6.0 / (in_size + out_size))
    return rng.uniform(-limit, limit, size=(out_size, in_size))


def build_mlp(topology, seed, hidden_activation="rectifier"):
    """MlpModel from a full size chain (input, *hidden, 1) with seeded
    Glorot-uniform weights and zero biases."""
    topology = tuple(int(t) for t in topology)
    if len(topology) < 2 or topology[-1] != 1:
        raise ValueError(f"topology must end in a single output, got {topology}")
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(topology[:-1], topology[1:])):
        act = "logistic" if i == len(topology) - 2 else hidden_activation
        layers.append(DenseLayer(glorot_uniform(rng, fan_out, fan_in),
                                 np.zeros(fan_out), act))
    return MlpModel(layers, topology[0])


def build_cnn(input_len, n_kernels=4, kernel_len=8, stride=2,
              hidden=8, seed=0):
    """CnnModel: one conv bank then the usual dense head."""
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    frontend = ConvFrontEnd(glorot_uniform(rng, n_kernels, kernel_len),
                            stride, "rectifier")
    feat_len = n_kernels * frontend.output_len(input_len)
    layers = [
        DenseLayer(glorot_uniform(rng, hidden, feat_len),
                   np.zeros(hidden), "rectifier"),
        DenseLayer(glorot_uniform(rng, 1, hidden), np.zeros(1), "logistic"),
    ]
    return CnnModel(frontend, layers, input_len)


def _forward_cached(model, X):
    """Forward pass keeping pre-activations for backprop. Returns
    (probs, dense_caches, conv_cache)."""
    conv_cache = None
    if isinstance(model, CnnModel):
        fe = model.frontend
        tiles = np.lib.stride_tricks.sliding_window_view(
            X, fe.kernel_len, axis=1)[:, ::fe.stride, :]
        pre = np.einsum("kj,nij->nki", fe.kernels, tiles)
        feats = apply_activation(fe.activation, pre)
        a = feats.reshape(X.shape[0], -1)
        conv_cache = (tiles, pre)
    else:
        a = X
    caches = []
    for layer in model.layers:
        z = a @ layer.weights.T + layer.biases
        caches.append((a, z))
        a = apply_activation(layer.activation, z)
    return a[:, 0], caches, conv_cache


def backprop(model, X, y):
    """Mean-BCE loss and its gradients for a batch.

    Returns (loss, dense_grads, conv_grad): dense_grads is a list of
    (dW, db) aligned with model.layers; conv_grad is the kernel-bank
    gradient for CnnModel inputs, else None.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = X.shape[0]
    probs, caches, conv_cache = _forward_cached(model, X)
    loss = bce_loss(probs, y)

    # Logistic output + BCE collapses to dL/dz = (p - y)/n at the output.
    delta = ((probs - y) / n)[:, None]
    dense_grads = [None] * len(model.layers)
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        a_in, z = caches[i]
        if i < len(model.layers) - 1:
            delta = delta * activation_grad(layer.activation, z)
        dense_grads[i] = (delta.T @ a_in, delta.sum(axis=0))
        delta = delta @ layer.weights

    conv_grad = None
    if conv_cache is not None:
        tiles, pre = conv_cache
        d_feats = delta.reshape(pre.shape)
        d_pre = d_feats * activation_grad(model.frontend.activation, pre)
        conv_grad = np.einsum("nki,nij->kj", d_pre, tiles)
    return loss, dense_grads, conv_grad


def _snapshot(model):
    params = [(l.weights.copy(), l.biases.copy()) for l in model.layers]
    kernels = model.frontend.kernels.copy() if isinstance(model, CnnModel) \
        else None
    return params, kernels


def _restore(model, snapshot):
    params, kernels = snapshot
    for layer, (w, b) in zip(model.layers, params):
        layer.weights[...] = w
        layer.biases[...] = b
    if kernels is not None:
        model.frontend.kernels[...] = kernels


def train_model(train, validation, model, config):
    """Mini-batch gradient descent with momentum on BCE; mutates `model`
    in place and returns it restored to the best-validation epoch along
    with the full LossHistory."""
    if train.window_len != model.input_len:
        raise ValueError(f"window length {train.window_len} does not match "
                         f"model input {model.input_len}")
    rng = np.random.default_rng(np.random.SeedSequence((config.seed, 1)))
    X, y = train.windows, train.labels.astype(np.float64)
    Xv, yv = validation.windows, validation.labels.astype(np.float64)

    vel = [(np.zeros_like(l.weights), np.zeros_like(l.biases))
           for l in model.layers]
    vel_k = np.zeros_like(model.frontend.kernels) \
        if isinstance(model, CnnModel) else None

    history = LossHistory()
    best = _snapshot(model)
    best_val = np.inf
    for epoch in range(config.epochs):
        order = rng.permutation(len(X))
        for lo in range(0, len(X), config.batch_size):
            batch = order[lo:lo + config.batch_size]
            loss, grads, conv_grad = backprop(model, X[batch], y[batch])
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch)
            for (vw, vb), layer, (dw, db) in zip(vel, model.layers, grads):
                vw *= config.momentum
                vw -= config.learning_rate * dw
                vb *= config.momentum
                vb -= config.learning_rate * db
                layer.weights += vw
                layer.biases += vb
            if conv_grad is not None:
                vel_k *= config.momentum
                vel_k -= config.learning_rate * conv_grad
                model.frontend.kernels += vel_k

        train_bce = bce_loss(model.forward_batch(X), y)
        val_bce = bce_loss(model.forward_batch(Xv), yv) if len(Xv) else train_bce
        if not (np.isfinite(train_bce) and np.isfinite(val_bce)):
            raise TrainingDivergedError(epoch)
        history.train_bce.append(train_bce)
        history.val_bce.append(val_bce)
        if val_bce < best_val:
            best_val = val_bce
            history.best_epoch = epoch
            best = _snapshot(model)

    _restore(model, best)
    return model, history


def train_mlp(train, validation, topology, config):
    """Build a seeded MLP for `topology` (input, *hidden, 1) and train it."""
    if topology[0] != train.window_len:
        raise ValueError(f"topology input {topology[0]} does not match "
                         f"window length {train.window_len}")
    model = build_mlp(topology, seed=config.seed)
    return train_model(train, validation, model, config)


def cell_seed(base_seed, i, j):
    """Deterministic per-cell seed for grid search."""
    return int(np.random.SeedSequence((base_seed, i, j)).generate_state(1)[0])


@dataclass
class GridResult:
    window_lens: list
    hidden_sizes: list
    val_bce: np.ndarray          # (len(window_lens), len(hidden_sizes))
    errors: dict = field(default_factory=dict)


def grid_search(recording, window_lens, hidden_sizes, config):
    """One full windowing/rebalance/split/train pipeline per grid cell.

    The surface entry is the validation BCE of the model each cell returns
    (its best-validation epoch). Failed cells are marked NaN and recorded
    in `errors` instead of aborting the grid.
    """
    window_lens = list(window_lens)
    hidden_sizes = list(hidden_sizes)
    if not window_lens or not hidden_sizes:
        raise ValueError("grid axes must be non-empty")
    surface = np.full((len(window_lens), len(hidden_sizes)), np.nan)
    errors = {}
    for i, w in enumerate(window_lens):
        for j, h in enumerate(hidden_sizes):
            seed = cell_seed(config.seed, i, j)
            try:
                ds = window_dataset(recording, w)
                ds = rebalance(ds, config.neg_pos_ratio, seed)
                tr, va = split_dataset(ds, config.train_fraction, seed)
                cell_cfg = replace(config, seed=seed)
                _, history = train_mlp(tr, va, (w, h, 1), cell_cfg)
                surface[i, j] = history.best_val_bce
            except Exception as exc:  # mark the cell, keep sweeping
                errors[(i, j)] = f"{type(exc).__name__}: {exc}"
    return GridResult(window_lens, hidden_sizes, surface, errors)
