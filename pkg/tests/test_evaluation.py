import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lfpdetect.evaluation import (EventMetrics, WindowedNetClassifier,
                                  detection_latency, event_metrics,
                                  expand_window_labels,
                                  frequency_response_map, overlap_percent,
                                  resource_report, roc_curve,
                                  threshold_at_tpr)
from lfpdetect.filters import make_filter_design
from lfpdetect.nn import quantize_model
from lfpdetect.synth import EventAnnotation
from lfpdetect.training import build_cnn, build_mlp

FS = 256.0


def concordance_oracle(scores, labels):
    """Brute-force all-pairs Mann-Whitney fraction (ties count half)."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                total += 1.0
            elif p == q:
                total += 0.5
    return total / (len(pos) * len(neg))


class TestRoc:
    def test_perfect_separation(self):
        scores = np.array([0.9, 0.8, 0.7, 0.2, 0.1])
        labels = np.array([1, 1, 1, 0, 0])
        assert roc_curve(scores, labels).auc == 1.0

    def test_identical_scores_give_half(self):
        scores = np.full(10, 0.5)
        labels = np.array([1, 0] * 5)
        assert roc_curve(scores, labels).auc == 0.5

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            roc_curve(np.array([0.1, 0.2]), np.array([1, 1]))

    @pytest.mark.parametrize("seed", range(10))
    def test_auc_equals_concordance(self, seed):
        rng = np.random.default_rng(seed)
        scores = np.round(rng.uniform(0, 1, 20), 2)  # force some ties
        labels = rng.integers(0, 2, 20)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        curve = roc_curve(scores, labels)
        assert abs(curve.auc - concordance_oracle(scores, labels)) <= 1e-12

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_monotone_sweep(self, seed):
        rng = np.random.default_rng(seed)
        scores = rng.uniform(0, 1, 30)
        labels = rng.integers(0, 2, 30)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        curve = roc_curve(scores, labels)
        assert np.all(np.diff(curve.fpr) >= 0)
        assert np.all(np.diff(curve.tpr) >= 0)
        assert 0.0 <= curve.auc <= 1.0
        assert curve.fpr[0] == 0.0 and curve.tpr[0] == 0.0
        assert curve.fpr[-1] == 1.0 and curve.tpr[-1] == 1.0

    def test_threshold_at_tpr(self):
        scores = np.array([0.9, 0.8, 0.7, 0.6, 0.2, 0.1])
        labels = np.array([1, 1, 0, 1, 0, 0])
        curve = roc_curve(scores, labels)
        thr, fpr, tpr = threshold_at_tpr(curve, 0.9)
        assert tpr >= 0.9
        predicted = scores >= thr
        got_tpr = predicted[labels == 1].mean()
        got_fpr = predicted[labels == 0].mean()
        assert got_tpr == pytest.approx(tpr)
        assert got_fpr == pytest.approx(fpr)


class TestEventTiming:
    def _stream(self, n, positive_spans):
        labels = np.zeros(n, dtype=np.int8)
        for lo, hi in positive_spans:
            labels[lo:hi] = 1
        return labels

    def test_detection_at_onset_is_zero(self):
        events = [EventAnnotation(1.0, 2.0)]
        labels = self._stream(1024, [(256, 300)])
        m = detection_latency(labels, events, FS)
        assert m.latencies_s == [0.0]

    def test_154_samples_late(self):
        events = [EventAnnotation(1.0, 3.0)]
        labels = self._stream(1024, [(256 + 154, 600)])
        m = detection_latency(labels, events, FS)
        assert m.latencies_s[0] == pytest.approx(154 / 256)  # 0.6016 s

    def test_miss_recorded_and_excluded_from_mean(self):
        events = [EventAnnotation(0.5, 1.0), EventAnnotation(2.0, 3.0)]
        labels = self._stream(1024, [(int(2.25 * 256), int(2.5 * 256))])
        m = detection_latency(labels, events, FS)
        assert m.latencies_s[0] is None
        assert m.n_missed == 1 and m.n_detected == 1
        assert m.mean_latency_s == pytest.approx(0.25)

    def test_positive_before_onset_does_not_count(self):
        events = [EventAnnotation(1.0, 2.0)]
        labels = self._stream(1024, [(0, 200)])  # fires only before onset
        m = detection_latency(labels, events, FS)
        assert m.latencies_s == [None]

    def test_overlap_extremes(self):
        ev = EventAnnotation(1.0, 2.0)
        full = self._stream(1024, [(256, 512)])
        none = self._stream(1024, [])
        half = self._stream(1024, [(256, 384)])
        assert overlap_percent(full, ev, FS) == 100.0
        assert overlap_percent(none, ev, FS) == 0.0
        assert overlap_percent(half, ev, FS) == 50.0

    def test_combined_metrics(self):
        events = [EventAnnotation(1.0, 2.0)]
        labels = self._stream(1024, [(300, 512)])
        m = event_metrics(labels, events, FS)
        assert m.latencies_s[0] == pytest.approx((300 - 256) / 256)
        assert m.overlaps_pct[0] == pytest.approx(100 * 212 / 256)

    @settings(max_examples=30, deadline=None)
    @given(shift_s=st.integers(1, 20))
    def test_shift_invariance(self, shift_s):
        events = [EventAnnotation(1.0, 2.5)]
        labels = self._stream(1024, [(300, 550)])
        base = event_metrics(labels, events, FS)

        pad = int(shift_s * FS)
        shifted_labels = np.concatenate([np.zeros(pad, np.int8), labels])
        shifted_events = [EventAnnotation(1.0 + shift_s, 2.5 + shift_s)]
        moved = event_metrics(shifted_labels, shifted_events, FS)
        assert moved.latencies_s == base.latencies_s
        assert moved.overlaps_pct == base.overlaps_pct


class TestExpandWindowLabels:
    def test_zero_order_hold(self):
        out = expand_window_labels([0.2, 0.8], window_len=4, n_samples=12)
        # window 0 completes at sample 3, window 1 at sample 7
        assert np.array_equal(
            out, [0, 0, 0, 0.2, 0.2, 0.2, 0.2, 0.8, 0.8, 0.8, 0.8, 0.8])

    def test_empty_values(self):
        assert np.array_equal(expand_window_labels([], 4, 3), [0, 0, 0])


@pytest.fixture(scope="module")
def filter_classifier():
    design = make_filter_design(8.0, 22.0, FS, 4, threshold=0.02)
    return design.float_classifier()


class TestFrequencyMap:
    def test_passband_tone_activates(self, filter_classifier):
        fmap = frequency_response_map(filter_classifier, [13.0], [30.0], FS,
                                      100.0, repeats=3, seed=0)
        assert fmap.mean_output[0, 0] >= 0.9

    def test_stopband_tone_stays_quiet(self, filter_classifier):
        fmap = frequency_response_map(filter_classifier, [50.0], [30.0], FS,
                                      100.0, repeats=3, seed=0)
        assert fmap.mean_output[0, 0] <= 0.1

    def test_matrix_shape_and_bounds(self, filter_classifier):
        freqs = [5.0, 13.0, 40.0]
        amps = [5.0, 30.0]
        fmap = frequency_response_map(filter_classifier, freqs, amps, FS,
                                      100.0, repeats=2, seed=1)
        assert fmap.mean_output.shape == (3, 2)
        assert np.all((fmap.mean_output >= 0.0) & (fmap.mean_output <= 1.0))

    def test_deterministic_under_seed(self, filter_classifier):
        kw = dict(freqs_hz=[10.0, 20.0], amps_uv=[10.0], fs_hz=FS,
                  full_scale_uv=100.0, repeats=3, seed=7)
        a = frequency_response_map(filter_classifier, **kw)
        b = frequency_response_map(filter_classifier, **kw)
        assert np.array_equal(a.mean_output, b.mean_output)

    def test_above_nyquist_rejected(self, filter_classifier):
        with pytest.raises(ValueError):
            frequency_response_map(filter_classifier, [130.0], [10.0], FS,
                                   100.0)

    def test_net_classifier_emits_window_outputs(self):
        model = build_mlp((20, 8, 1), seed=0)
        clf = WindowedNetClassifier(model, consensus=True)
        outs = clf.trial_outputs(np.zeros(256))
        # 12 complete windows, consensus drops the first two
        assert outs.shape == (10,)
        clf_raw = WindowedNetClassifier(model, consensus=False)
        assert clf_raw.trial_outputs(np.zeros(256)).shape == (12,)


class TestResourceReport:
    def test_mlp_golden_counts(self):
        model = build_mlp((20, 8, 1), seed=0)
        for m in (model, quantize_model(model)):
            rep = resource_report(m)
            assert rep.macs_per_sample == pytest.approx(8.4)
            assert rep.param_count == 177
        qrep = resource_report(quantize_model(model))
        assert qrep.storage_bytes == 177 + 2 * 4 * 2  # codes + 2 scales/layer

    def test_filter_chain_golden_counts(self):
        design = make_filter_design(8.0, 22.0, FS, 4)
        rep = resource_report(design)
        assert rep.macs_per_sample == 11.0       # 2 biquads * 5 + EMA
        assert rep.storage_bytes == 20           # 2 * 5 coeffs * 2 bytes
        assert rep.state_bytes == 36             # 2 * 4 words * 4 B + env
        assert rep.param_count == 10
        assert resource_report(design.float_classifier()) == rep
        assert resource_report(design.fixed_classifier()) == rep

    def test_empty_stage_sequence_is_all_zero(self):
        rep = resource_report([])
        assert rep == resource_report(())
        assert (rep.macs_per_sample, rep.storage_bytes, rep.state_bytes,
                rep.param_count) == (0.0, 0, 0, 0)

    def test_same_topology_identical_report(self):
        a = resource_report(build_mlp((20, 8, 1), seed=1))
        b = resource_report(build_mlp((20, 8, 1), seed=2))
        assert a == b

    def test_cnn_amortization(self):
        model = build_cnn(20, n_kernels=4, kernel_len=8, stride=2, hidden=8,
                          seed=0)
        rep = resource_report(model)
        # conv: 4 kernels * 7 outputs * 8 taps, dense: 28*8 + 8*1
        assert rep.macs_per_sample == pytest.approx(
            (4 * 7 * 8 + 28 * 8 + 8) / 20)

    def test_unknown_type_rejected(self):
        with pytest.raises(TypeError):
            resource_report(42)


class TestWindowedNetClassifier:
    def test_stream_labels_zero_order_hold(self):
        model = build_mlp((4, 2, 1), seed=3)
        clf = WindowedNetClassifier(model, threshold=0.0, consensus=False)
        samples = np.zeros(12)
        labels = clf.stream_labels(samples)
        # threshold 0 < probability, so every completed window fires
        assert labels[:3].tolist() == [0, 0, 0]
        assert labels[3:].tolist() == [1] * 9

    def test_consensus_delays_first_decision(self):
        model = build_mlp((4, 2, 1), seed=3)
        clf = WindowedNetClassifier(model, threshold=0.0, consensus=True)
        labels = clf.stream_labels(np.zeros(16))
        # first consensus label lands when the third window completes
        assert labels[:11].tolist() == [0] * 11
        assert labels[11:].tolist() == [1] * 5
