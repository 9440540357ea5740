"""Tiny feed-forward networks: float reference inference, 8-bit quantized
integer inference, an optional 1-D convolutional front-end, and the
consensus-of-three output smoother.

Models are immutable after construction and safe to share across threads;
ConsensusBuffer is per-stream mutable state.
"""

import json
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

ACTIVATIONS = ("rectifier", "logistic", "identity")

QUANT_LEVELS = 127  # symmetric int8 codes in [-127, 127]


class DimensionError(ValueError):
    """Shape mismatch between a model and its input."""


def apply_activation(tag, z):
    if tag == "rectifier":
        return np.maximum(z, 0.0)
    if tag == "logistic":
        return logistic(z)
    if tag == "identity":
        return z
    raise ValueError(f"unknown activation {tag!r}")


def activation_grad(tag, z):
    """Derivative of the activation w.r.t. its pre-activation input."""
    if tag == "rectifier":
        return (z > 0.0).astype(np.float64)
    if tag == "logistic":
        s = logistic(z)
        return s * (1.0 - s)
    if tag == "identity":
        return np.ones_like(z)
    raise ValueError(f"unknown activation {tag!r}")


def logistic(z):
    """Numerically stable logistic, output strictly inside (0, 1)."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return np.clip(out, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))


class DenseLayer:
    """Fully connected layer: weights (out, in), biases (out,)."""

    def __init__(self, weights, biases, activation):
        weights = np.asarray(weights, dtype=np.float64)
        biases = np.asarray(biases, dtype=np.float64)
        if weights.ndim != 2 or biases.shape != (weights.shape[0],):
            raise DimensionError(
                f"weights {weights.shape} and biases {biases.shape} disagree")
        if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(biases))):
            raise ValueError("non-finite layer parameters")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.weights = weights
        self.biases = biases
        self.activation = activation

    @property
    def out_size(self):
        return self.weights.shape[0]

    @property
    def in_size(self):
        return self.weights.shape[1]

    @property
    def n_params(self):
        return self.weights.size + self.biases.size


class ConvFrontEnd:
    """Valid-mode 1-D cross-correlation bank (no padding, no bias)."""

    def __init__(self, kernels, stride, activation):
        kernels = np.asarray(kernels, dtype=np.float64)
        if kernels.ndim != 2:
            raise DimensionError(f"kernel bank must be 2-D, got {kernels.shape}")
        if stride < 1:
            raise ValueError("stride must be >= 1")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.kernels = kernels
        self.stride = int(stride)
        self.activation = activation

    @property
    def n_kernels(self):
        return self.kernels.shape[0]

    @property
    def kernel_len(self):
        return self.kernels.shape[1]

    @property
    def n_params(self):
        return self.kernels.size

    def output_len(self, input_len):
        if self.kernel_len > input_len:
            raise DimensionError(
                f"kernel length {self.kernel_len} exceeds window {input_len}")
        return (input_len - self.kernel_len) // self.stride + 1


def conv1d_forward(frontend, window):
    """Feature matrix (n_kernels, out_len) for one window:
    output[k][i] = act(sum_j kernel[k][j] * window[i*stride + j])."""
    window = np.asarray(window, dtype=np.float64)
    out_len = frontend.output_len(window.shape[-1])
    tiles = np.lib.stride_tricks.sliding_window_view(
        window, frontend.kernel_len, axis=-1)[..., ::frontend.stride, :]
    assert tiles.shape[-2] == out_len
    feats = np.einsum("kj,...ij->...ki", frontend.kernels, tiles)
    return apply_activation(frontend.activation, feats)


class MlpModel:
    """Dense chain over a fixed-length input window; the final layer is a
    single logistic unit so the output is a probability in (0, 1)."""

    def __init__(self, layers, input_len):
        layers = list(layers)
        if not layers:
            raise DimensionError("model needs at least one layer")
        in_size = input_len
        for layer in layers:
            if layer.in_size != in_size:
                raise DimensionError(
                    f"layer expects {layer.in_size} inputs, chain provides {in_size}")
            in_size = layer.out_size
        if layers[-1].out_size != 1 or layers[-1].activation != "logistic":
            raise DimensionError("final layer must be a single logistic unit")
        self.layers = layers
        self.input_len = int(input_len)

    @property
    def n_params(self):
        return sum(layer.n_params for layer in self.layers)

    def forward_batch(self, windows):
        """Probabilities for a (n, input_len) batch."""
        a = np.asarray(windows, dtype=np.float64)
        if a.ndim != 2 or a.shape[1] != self.input_len:
            raise DimensionError(
                f"expected (n, {self.input_len}) windows, got {a.shape}")
        for layer in self.layers:
            a = apply_activation(layer.activation,
                                 a @ layer.weights.T + layer.biases)
        return a[:, 0]

    def forward(self, window):
        """Probability for a single window."""
        window = np.asarray(window, dtype=np.float64)
        if window.shape != (self.input_len,):
            raise DimensionError(
                f"expected window of length {self.input_len}, got {window.shape}")
        return float(self.forward_batch(window[None, :])[0])


class CnnModel:
    """ConvFrontEnd followed by the same dense head as MlpModel."""

    def __init__(self, frontend, layers, input_len):
        self.frontend = frontend
        self.input_len = int(input_len)
        feat_len = frontend.n_kernels * frontend.output_len(input_len)
        self._head = MlpModel(layers, feat_len)
        self.layers = self._head.layers

    @property
    def n_params(self):
        return self.frontend.n_params + self._head.n_params

    def forward_batch(self, windows):
        a = np.asarray(windows, dtype=np.float64)
        if a.ndim != 2 or a.shape[1] != self.input_len:
            raise DimensionError(
                f"expected (n, {self.input_len}) windows, got {a.shape}")
        feats = conv1d_forward(self.frontend, a)
        return self._head.forward_batch(feats.reshape(a.shape[0], -1))

    def forward(self, window):
        window = np.asarray(window, dtype=np.float64)
        if window.shape != (self.input_len,):
            raise DimensionError(
                f"expected window of length {self.input_len}, got {window.shape}")
        return float(self.forward_batch(window[None, :])[0])


def _symmetric_quantize(values):
    """Symmetric 8-bit quantization: scale = max|v|/127 (1.0 if all zero),
    codes = round(v/scale) in [-127, 127]."""
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ValueError("non-finite values cannot be quantized")
    peak = float(np.max(np.abs(values))) if values.size else 0.0
    scale = peak / QUANT_LEVELS if peak > 0.0 else 1.0
    codes = np.clip(np.rint(values / scale), -QUANT_LEVELS, QUANT_LEVELS)
    return codes.astype(np.int32), scale


class QuantDenseLayer:
    """8-bit integer mirror of a DenseLayer with per-layer scales."""

    def __init__(self, weight_codes, bias_codes, weight_scale, bias_scale,
                 activation):
        self.weight_codes = np.asarray(weight_codes, dtype=np.int32)
        self.bias_codes = np.asarray(bias_codes, dtype=np.int32)
        for codes in (self.weight_codes, self.bias_codes):
            if codes.size and np.max(np.abs(codes)) > QUANT_LEVELS:
                raise ValueError("codes outside the symmetric int8 range")
        self.weight_scale = float(weight_scale)
        self.bias_scale = float(bias_scale)
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.activation = activation

    @property
    def out_size(self):
        return self.weight_codes.shape[0]

    @property
    def in_size(self):
        return self.weight_codes.shape[1]

    @property
    def n_params(self):
        return self.weight_codes.size + self.bias_codes.size


class QuantizedMlp:
    """Integer inference path: int8 codes, 32-bit accumulators, activations
    evaluated in real arithmetic after rescaling, then requantized to int8
    for the next layer (dynamic symmetric scale per window).

    Worst case accumulator magnitude is in_size * 127 * 127, far below
    2**31 for any supported window length, so no saturation logic is
    needed here.
    """

    def __init__(self, layers, input_len):
        self.layers = list(layers)
        self.input_len = int(input_len)

    @property
    def n_params(self):
        return sum(layer.n_params for layer in self.layers)

    def forward_batch(self, windows):
        x = np.asarray(windows, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_len:
            raise DimensionError(
                f"expected (n, {self.input_len}) windows, got {x.shape}")
        # Input quantization: windows are pre-scaled to [-1, 1] full scale.
        codes = np.clip(np.rint(x * QUANT_LEVELS),
                        -QUANT_LEVELS, QUANT_LEVELS).astype(np.int64)
        scale = 1.0 / QUANT_LEVELS
        for i, layer in enumerate(self.layers):
            acc = codes @ layer.weight_codes.T.astype(np.int64)
            z = acc * (layer.weight_scale * scale) \
                + layer.bias_codes * layer.bias_scale
            a = apply_activation(layer.activation, z)
            if i == len(self.layers) - 1:
                return a[:, 0]
            peak = np.max(np.abs(a), axis=1, keepdims=True)
            peak = np.where(peak > 0.0, peak, 1.0)
            scale_vec = peak / QUANT_LEVELS
            codes = np.rint(a / scale_vec).astype(np.int64)
            scale = scale_vec
        raise AssertionError("unreachable")

    def forward(self, window):
        window = np.asarray(window, dtype=np.float64)
        if window.shape != (self.input_len,):
            raise DimensionError(
                f"expected window of length {self.input_len}, got {window.shape}")
        return float(self.forward_batch(window[None, :])[0])


def quantize_model(model):
    """Post-training 8-bit quantization of an MlpModel."""
    qlayers = []
    for layer in model.layers:
        w_codes, w_scale = _symmetric_quantize(layer.weights)
        b_codes, b_scale = _symmetric_quantize(layer.biases)
        qlayers.append(QuantDenseLayer(w_codes, b_codes, w_scale, b_scale,
                                       layer.activation))
    return QuantizedMlp(qlayers, model.input_len)


CONSENSUS_RULES = ("mean", "majority", "unanimous")


class ConsensusBuffer:
    """Combines the last three window probabilities into one final label.

    The default rule thresholds the mean of the three outputs; "majority"
    and "unanimous" vote on the individually thresholded outputs instead.
    Emits None until three outputs are buffered, then slides by one.
    """

    def __init__(self, threshold, rule="mean", depth=3):
        if not (0.0 < threshold < 1.0):
            raise ValueError("threshold must be in (0, 1)")
        if rule not in CONSENSUS_RULES:
            raise ValueError(f"unknown consensus rule {rule!r}")
        self.threshold = float(threshold)
        self.rule = rule
        self.depth = int(depth)
        self._window = deque(maxlen=self.depth)

    def reset(self):
        self._window.clear()

    def push(self, p_new):
        """Add one window probability; returns the 0/1 label once the
        buffer is full, else None."""
        self._window.append(float(p_new))
        if len(self._window) < self.depth:
            return None
        return int(self.score() > self.threshold)

    def score(self):
        """The quantity compared against the threshold under the rule.

        For "mean" this is the mean probability; for the voting rules it
        is the fraction of buffered outputs above the threshold, so the
        same `score > threshold` comparison realizes majority (> 1/2 of
        three means two or more) and unanimity (> threshold only if all
        three pass for any threshold >= 2/3; a bare vote fraction of 1.0
        is required when compared against 2/3 < t < 1)."""
        if self.rule == "mean":
            return float(np.mean(self._window))
        votes = sum(1 for p in self._window if p > self.threshold)
        if self.rule == "majority":
            return 1.0 if votes * 2 > len(self._window) else 0.0
        return 1.0 if votes == len(self._window) else 0.0


def consensus_output(buffer, p_new):
    """Functional wrapper over ConsensusBuffer.push."""
    return buffer.push(p_new)


def rolling_consensus_scores(probs, depth=3):
    """Mean of each trailing `depth` window probabilities; entries before
    the buffer fills are NaN. Used to score ROC sweeps of the adjusted
    classifier without re-streaming."""
    probs = np.asarray(probs, dtype=np.float64)
    out = np.full(probs.shape, np.nan)
    if probs.size >= depth:
        kernel = np.ones(depth) / depth
        out[depth - 1:] = np.convolve(probs, kernel, mode="valid")
    return out


def _layer_doc(layer):
    return {
        "activation": layer.activation,
        "weights": layer.weights.tolist(),
        "biases": layer.biases.tolist(),
    }


def _qlayer_doc(layer):
    return {
        "activation": layer.activation,
        "weight_codes": layer.weight_codes.tolist(),
        "bias_codes": layer.bias_codes.tolist(),
        "weight_scale": layer.weight_scale,
        "bias_scale": layer.bias_scale,
    }


def save_model(model, path):
    """Structured text model file; lossless round trip (integer codes are
    exact, float scales/weights survive via shortest-repr JSON floats)."""
    if isinstance(model, QuantizedMlp):
        doc = {"kind": "quantized_mlp", "input_len": model.input_len,
               "layers": [_qlayer_doc(l) for l in model.layers]}
    elif isinstance(model, CnnModel):
        doc = {"kind": "cnn", "input_len": model.input_len,
               "frontend": {"kernels": model.frontend.kernels.tolist(),
                            "stride": model.frontend.stride,
                            "activation": model.frontend.activation},
               "layers": [_layer_doc(l) for l in model.layers]}
    elif isinstance(model, MlpModel):
        doc = {"kind": "mlp", "input_len": model.input_len,
               "layers": [_layer_doc(l) for l in model.layers]}
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_model(path):
    doc = json.loads(Path(path).read_text())
    kind = doc.get("kind")
    input_len = int(doc["input_len"])
    if kind == "quantized_mlp":
        layers = [QuantDenseLayer(l["weight_codes"], l["bias_codes"],
                                  l["weight_scale"], l["bias_scale"],
                                  l["activation"])
                  for l in doc["layers"]]
        return QuantizedMlp(layers, input_len)
    if kind == "mlp":
        layers = [DenseLayer(l["weights"], l["biases"], l["activation"])
                  for l in doc["layers"]]
        return MlpModel(layers, input_len)
    if kind == "cnn":
        fe = doc["frontend"]
        frontend = ConvFrontEnd(fe["kernels"], fe["stride"], fe["activation"])
        layers = [DenseLayer(l["weights"], l["biases"], l["activation"])
                  for l in doc["layers"]]
        return CnnModel(frontend, layers, input_len)
    raise ValueError(f"{path}: unknown model kind {kind!r}")
