"""End-to-end experiment flows shared by the CLI and the test harness:
recording acquisition, the training pipeline, and the filter-vs-MLP
comparison run.
"""

from dataclasses import dataclass, field

import numpy as np

from .evaluation import (RocCurve, WindowedNetClassifier, event_metrics,
                         expand_window_labels, frequency_response_map,
                         resource_report, roc_curve, threshold_at_tpr)
from .filters import make_filter_design
from .nn import quantize_model, rolling_consensus_scores
from .synth import event_sample_mask, generate_recording, load_recording
from .training import rebalance, split_dataset, train_mlp, window_dataset


def acquire_recording(cfg):
    """Load the configured recording, or synthesize one from [synth]."""
    if cfg.paths["recording"]:
        return load_recording(cfg.paths["recording"])
    return generate_recording(cfg.synth)


def build_filter(cfg, threshold=0.0):
    return make_filter_design(
        cfg.filter["low_hz"], cfg.filter["high_hz"], cfg.synth.fs_hz,
        cfg.filter["order"], frac_bits=cfg.filter["frac_bits"],
        decay_samples=cfg.filter["decay_samples"], threshold=threshold)


@dataclass
class TrainResult:
    model: object
    qmodel: object
    history: object
    all_windows: object     # every window of the recording, unbalanced
    train: object
    validation: object


def train_pipeline(recording, window_len, hidden, train_config):
    """window -> rebalance -> stratified split -> momentum-GD training,
    then post-training 8-bit quantization."""
    all_windows = window_dataset(recording, window_len)
    balanced = rebalance(all_windows, train_config.neg_pos_ratio,
                         train_config.seed)
    train, validation = split_dataset(balanced, train_config.train_fraction,
                                      train_config.seed)
    topology = (window_len, *hidden, 1)
    model, history = train_mlp(train, validation, topology, train_config)
    return TrainResult(model, quantize_model(model), history, all_windows,
                       train, validation)


def _membership_mask(all_windows, subset):
    return np.isin(all_windows.source_index, subset.source_index)


def _window_sample_mask(all_windows, member_mask, n_samples):
    mask = np.zeros(n_samples, dtype=bool)
    L = all_windows.window_len
    for start in all_windows.source_index[member_mask]:
        mask[start:start + L] = True
    return mask


@dataclass
class CompareReport:
    """Everything the filter-vs-MLP comparison emits."""

    rocs: dict = field(default_factory=dict)            # name -> RocCurve
    matched_thresholds: dict = field(default_factory=dict)
    matched_points: dict = field(default_factory=dict)  # name -> (fpr, tpr)
    events: dict = field(default_factory=dict)          # name -> EventMetrics
    resources: dict = field(default_factory=dict)
    train_result: TrainResult = None
    tpr_matched: float = 0.9


def run_compare(cfg, recording):
    """Train the MLP on the recording's windowed split, then score the
    filter chain and the standalone/consensus/quantized MLP variants on the
    held-out validation windows; event latency and overlap are streamed
    over the whole recording with every classifier operated at the
    threshold that reaches the matched TPR on its validation ROC.
    """
    L = cfg.mlp["window_len"]
    tr = train_pipeline(recording, L, cfg.mlp["hidden"], cfg.training)
    all_w = tr.all_windows
    labels = all_w.labels
    val_mask = _membership_mask(all_w, tr.validation)

    probs = tr.model.forward_batch(all_w.windows)
    probs_q = tr.qmodel.forward_batch(all_w.windows)
    cons = rolling_consensus_scores(probs)
    cons_ok = ~np.isnan(cons)

    normalized = recording.normalized()
    design = build_filter(cfg)
    env = design.float_classifier().stream_envelope(normalized)
    env_fixed = design.fixed_classifier().stream_envelope(normalized)
    sample_truth = event_sample_mask(recording).astype(np.int8)
    val_samples = _window_sample_mask(all_w, val_mask, normalized.size)

    report = CompareReport(train_result=tr,
                           tpr_matched=cfg.evaluation["tpr_matched"])
    report.rocs["mlp"] = roc_curve(probs[val_mask], labels[val_mask])
    report.rocs["mlp_consensus"] = roc_curve(cons[val_mask & cons_ok],
                                             labels[val_mask & cons_ok])
    report.rocs["mlp_quantized"] = roc_curve(probs_q[val_mask],
                                             labels[val_mask])
    report.rocs["filter"] = roc_curve(env[val_samples],
                                      sample_truth[val_samples])
    report.rocs["filter_fixed"] = roc_curve(env_fixed[val_samples],
                                            sample_truth[val_samples])

    target = report.tpr_matched
    streams = {}
    for name, scores, is_window in (
            ("filter", env, False),
            ("mlp", probs, True),
            ("mlp_consensus", cons, True)):
        thr, fpr, tpr = threshold_at_tpr(report.rocs[name], target)
        report.matched_thresholds[name] = thr
        report.matched_points[name] = (fpr, tpr)
        if is_window:
            window_labels = np.where(np.isnan(scores), 0.0,
                                     (scores >= thr).astype(np.float64))
            streams[name] = expand_window_labels(window_labels, L,
                                                 normalized.size)
        else:
            streams[name] = (scores >= thr).astype(np.float64)

    for name, stream in streams.items():
        report.events[name] = event_metrics(stream, recording.annotations,
                                            recording.fs_hz)

    report.resources = {
        "filter": resource_report(design),
        "mlp_quantized": resource_report(tr.qmodel),
    }
    return report


def operating_threshold(cfg, recording, scores, truth, mask):
    """Training-data operating point: the highest threshold reaching the
    configured operating TPR on the masked score stream. Nudged one ulp
    down so the streaming comparators (strict env > threshold) admit the
    same points the >=-based ROC sweep counted."""
    roc = roc_curve(scores[mask], truth[mask])
    thr, _, _ = threshold_at_tpr(roc, cfg.evaluation["tpr_operating"])
    return float(np.nextafter(thr, -np.inf))


def filter_operating_threshold(cfg, recording, design):
    """Choose the filter comparator threshold on training windows."""
    L = cfg.mlp["window_len"]
    all_w = window_dataset(recording, L)
    balanced = rebalance(all_w, cfg.training.neg_pos_ratio, cfg.training.seed)
    train, _ = split_dataset(balanced, cfg.training.train_fraction,
                             cfg.training.seed)
    normalized = recording.normalized()
    env = design.float_classifier().stream_envelope(normalized)
    truth = event_sample_mask(recording).astype(np.int8)
    train_mask = _window_sample_mask(all_w, _membership_mask(all_w, train),
                                     normalized.size)
    return operating_threshold(cfg, recording, env, truth, train_mask)


def net_operating_threshold(cfg, recording, model, consensus):
    """Operating threshold for a network classifier on training windows."""
    L = model.input_len
    all_w = window_dataset(recording, L)
    balanced = rebalance(all_w, cfg.training.neg_pos_ratio, cfg.training.seed)
    train, _ = split_dataset(balanced, cfg.training.train_fraction,
                             cfg.training.seed)
    member = _membership_mask(all_w, train)
    probs = model.forward_batch(all_w.windows)
    scores = rolling_consensus_scores(probs) if consensus else probs
    ok = member & ~np.isnan(scores)
    roc = roc_curve(scores[ok], all_w.labels[ok])
    thr, _, _ = threshold_at_tpr(roc, cfg.evaluation["tpr_operating"])
    return float(np.nextafter(thr, -np.inf))
