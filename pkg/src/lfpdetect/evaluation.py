"""Classifier-agnostic evaluation: ROC/AUC, per-event detection latency and
overlap, frequency-by-amplitude response maps, and structural resource
estimates.

Streaming classifiers expose `reset()` and `trial_outputs(samples)`, where
samples are pre-scaled to [-1, 1] and the returned vector holds outputs in
[0, 1] emitted during the trial (one per sample for the filter chain, one
per completed window for the networks).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .filters import (FilterChainClassifier, FilterDesign,
                      FixedFilterChainClassifier)
from .nn import CnnModel, MlpModel, QuantizedMlp, rolling_consensus_scores
from .synth import pink_background


@dataclass
class RocCurve:
    """Threshold sweep ordered so FPR and TPR are non-decreasing."""

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float


def roc_curve(scores, labels):
    """ROC over all distinct score thresholds (predict positive at
    score >= threshold); AUC by the trapezoidal rule."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be equal-length vectors")
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise ValueError("both classes must be present to sweep a ROC")

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_pos = (labels[order] == 1).astype(np.int64)
    tp = np.cumsum(sorted_pos)
    fp = np.cumsum(1 - sorted_pos)
    # Collapse ties: keep the last index of each distinct score.
    distinct = np.flatnonzero(np.diff(sorted_scores, append=-np.inf))
    tpr = np.concatenate(([0.0], tp[distinct] / n_pos))
    fpr = np.concatenate(([0.0], fp[distinct] / n_neg))
    thresholds = np.concatenate(([np.inf], sorted_scores[distinct]))
    auc = float(np.trapezoid(tpr, fpr))
    return RocCurve(fpr, tpr, thresholds, auc)


def threshold_at_tpr(roc, target_tpr):
    """Highest threshold reaching the target TPR; returns
    (threshold, fpr, tpr) at the first sweep point with tpr >= target."""
    idx = int(np.argmax(roc.tpr >= target_tpr))
    if roc.tpr[idx] < target_tpr:
        raise ValueError(f"sweep never reaches TPR {target_tpr}")
    return float(roc.thresholds[idx]), float(roc.fpr[idx]), float(roc.tpr[idx])


@dataclass
class EventMetrics:
    """Per-event latency (None marks a miss) and overlap percentages."""

    latencies_s: list = field(default_factory=list)
    overlaps_pct: list = field(default_factory=list)

    @property
    def n_detected(self):
        return sum(1 for v in self.latencies_s if v is not None)

    @property
    def n_missed(self):
        return sum(1 for v in self.latencies_s if v is None)

    @property
    def mean_latency_s(self):
        hits = [v for v in self.latencies_s if v is not None]
        return float(np.mean(hits)) if hits else None

    @property
    def mean_overlap_pct(self):
        return float(np.mean(self.overlaps_pct)) if self.overlaps_pct else None


def _event_span(event, fs_hz, n):
    lo = int(np.ceil(event.start_s * fs_hz - 1e-9))
    hi = int(np.ceil(event.end_s * fs_hz - 1e-9))
    return max(lo, 0), min(hi, n)


def detection_latency(label_stream, events, fs_hz):
    """Per-event latency: time from onset to the first positive sample at
    or after onset and before event end. Events with no positive inside
    are misses (None) and stay out of the mean."""
    labels = np.asarray(label_stream)
    metrics = EventMetrics()
    for ev in events:
        lo, hi = _event_span(ev, fs_hz, labels.size)
        inside = np.flatnonzero(labels[lo:hi] > 0)
        metrics.latencies_s.append(
            float(inside[0] / fs_hz) if inside.size else None)
    return metrics


def overlap_percent(label_stream, event, fs_hz):
    """100 * (positive samples inside the event span) / (span samples)."""
    labels = np.asarray(label_stream)
    lo, hi = _event_span(event, fs_hz, labels.size)
    if hi <= lo:
        return 0.0
    return 100.0 * float(np.sum(labels[lo:hi] > 0)) / (hi - lo)


def event_metrics(label_stream, events, fs_hz):
    """Latency and overlap for every event in one pass."""
    metrics = detection_latency(label_stream, events, fs_hz)
    metrics.overlaps_pct = [overlap_percent(label_stream, ev, fs_hz)
                            for ev in events]
    return metrics


def expand_window_labels(values, window_len, n_samples, fill=0.0):
    """Zero-order-hold a window-rate sequence up to sample rate: sample t
    carries the most recent value whose window completed at or before t,
    `fill` before the first one."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return np.full(n_samples, fill, dtype=np.float64)
    # Window k completes at sample (k+1)*window_len - 1.
    completed = (np.arange(n_samples, dtype=np.int64) + 1) // window_len
    idx = np.minimum(completed - 1, values.size - 1)
    out = np.where(idx >= 0, values[np.maximum(idx, 0)], fill)
    return out


class WindowedNetClassifier:
    """Streaming wrapper for the network models: chops normalized samples
    into non-overlapping windows, runs the forward pass once per complete
    window, and optionally smooths through the consensus buffer.

    trial_outputs() returns one score per emitted decision: the raw window
    probability when consensus is off, else the mean of the last three
    probabilities (first emitted once three windows completed).
    """

    def __init__(self, model, threshold=0.5, consensus=True):
        self.model = model
        self.threshold = float(threshold)
        self.consensus = bool(consensus)

    def reset(self):
        """Whole trials are processed per call, so there is no carried
        state; kept to satisfy the streaming-interface contract."""

    def window_probs(self, samples):
        """Raw per-window probabilities for a normalized sample vector."""
        samples = np.asarray(samples, dtype=np.float64)
        L = self.model.input_len
        n_win = samples.size // L
        if n_win == 0:
            return np.empty(0)
        windows = samples[:n_win * L].reshape(n_win, L)
        return self.model.forward_batch(windows)

    def trial_outputs(self, samples):
        probs = self.window_probs(samples)
        if not self.consensus:
            return probs
        scores = rolling_consensus_scores(probs)
        return scores[~np.isnan(scores)]

    def decision_scores(self, samples):
        """Window-rate decision scores aligned with window indices; NaN
        where no decision exists yet (consensus warm-up)."""
        probs = self.window_probs(samples)
        if not self.consensus:
            return probs
        return rolling_consensus_scores(probs)

    def stream_labels(self, samples):
        """Per-sample 0/1 labels: window decisions zero-order-held to the
        sample rate, 0 before the first decision."""
        samples = np.asarray(samples, dtype=np.float64)
        scores = self.decision_scores(samples)
        labels = np.where(np.isnan(scores), 0.0,
                          (scores > self.threshold).astype(np.float64))
        return expand_window_labels(labels, self.model.input_len,
                                    samples.size).astype(np.int8)


@dataclass
class FreqAmpMap:
    freqs_hz: np.ndarray
    amps_uv: np.ndarray
    mean_output: np.ndarray   # (len(freqs), len(amps)) in [0, 1]


def frequency_response_map(classifier, freqs_hz, amps_uv, fs_hz,
                           full_scale_uv, tone_s=1.0, repeats=10, seed=0,
                           noise_rms_uv=2.0):
    """Mean classifier output for short sinusoidal test tones.

    For each (frequency, amplitude) cell, `repeats` tones of `tone_s`
    seconds with seeded random phase are embedded in low-level 1/f
    background noise (rms configurable, zero allowed); the classifier is
    reset before every trial and the cell records the mean of all outputs
    it emitted over the tone.
    """
    freqs_hz = np.asarray(freqs_hz, dtype=np.float64)
    amps_uv = np.asarray(amps_uv, dtype=np.float64)
    if np.any(freqs_hz >= fs_hz / 2.0):
        raise ValueError("test frequency at or above Nyquist")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    rng = np.random.default_rng(seed)
    n = int(round(tone_s * fs_hz))
    t = np.arange(n) / fs_hz
    grid = np.zeros((freqs_hz.size, amps_uv.size))
    for i, f in enumerate(freqs_hz):
        for j, a in enumerate(amps_uv):
            collected = []
            for _ in range(repeats):
                phase = rng.uniform(0.0, 2.0 * np.pi)
                x = a * np.sin(2.0 * np.pi * f * t + phase)
                if noise_rms_uv > 0.0:
                    x = x + pink_background(n, rng) * noise_rms_uv
                classifier.reset()
                outs = classifier.trial_outputs(x / full_scale_uv)
                if outs.size:
                    collected.append(float(np.mean(outs)))
            grid[i, j] = float(np.mean(collected)) if collected else 0.0
    return FreqAmpMap(freqs_hz, amps_uv, grid)


@dataclass(frozen=True)
class ResourceReport:
    """Structural cost counts: no cycles, just arithmetic and bytes."""

    macs_per_sample: float
    storage_bytes: int
    state_bytes: int
    param_count: int


def resource_report(classifier):
    """Deterministic operation/storage counts by construction.

    Filter chain: 5 MACs per biquad per sample plus 1 for the envelope;
    16-bit coefficients, 32-bit state words. Networks: one MAC per weight
    per window, amortized over the window length; quantized storage is one
    byte per parameter plus two float scales per layer. An empty stage
    sequence yields the all-zero report.
    """
    if isinstance(classifier, (FilterChainClassifier,
                               FixedFilterChainClassifier, FilterDesign)):
        n_sections = len(classifier.sections)
        return ResourceReport(
            macs_per_sample=5.0 * n_sections + 1.0,
            storage_bytes=n_sections * 5 * 2,
            state_bytes=n_sections * 4 * 4 + 4,
            param_count=n_sections * 5,
        )
    if isinstance(classifier, (MlpModel, QuantizedMlp, CnnModel)):
        macs_per_window = sum(l.out_size * l.in_size for l in classifier.layers)
        params = classifier.n_params
        scale_bytes = 2 * 4 * len(classifier.layers)
        state = classifier.input_len  # int8 input window buffer
        if isinstance(classifier, CnnModel):
            fe = classifier.frontend
            macs_per_window += fe.n_kernels * fe.output_len(
                classifier.input_len) * fe.kernel_len
            scale_bytes += 2 * 4
        widths = [l.out_size for l in classifier.layers]
        state += 2 * max(widths)        # ping-pong activation buffers
        state += 3 * 4                  # consensus history, three floats
        return ResourceReport(
            macs_per_sample=macs_per_window / classifier.input_len,
            storage_bytes=params + scale_bytes,
            state_bytes=state,
            param_count=params,
        )
    try:
        empty = len(classifier) == 0
    except TypeError:
        empty = False
    if empty:
        return ResourceReport(0.0, 0, 0, 0)
    raise TypeError(f"no resource model for {type(classifier).__name__}")
