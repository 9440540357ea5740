import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lfpdetect.filters import (BiquadCoeffs, BiquadState, EnvelopeState,
                               FilterChainClassifier, FilterDesignError,
                               FixedBiquadCoeffs, FixedBiquadState,
                               FixedEnvelopeState, FixedFilterChainClassifier,
                               QuantizationOverflowError, biquad_step,
                               biquad_step_fixed, cascade_response,
                               design_butterworth_bandpass, envelope_step,
                               envelope_step_fixed, load_filter_design,
                               make_filter_design, quantize_coeffs,
                               save_filter_design)

from reference_butterworth import REF_FREQS_HZ, REF_MAG_DB

FS = 256.0


@pytest.fixture(scope="module")
def cascade():
    return design_butterworth_bandpass(8.0, 22.0, FS, 4)


@pytest.fixture(scope="module")
def fixed_cascade(cascade):
    return quantize_coeffs(cascade, 13)


class TestDesign:
    def test_matches_independent_reference(self, cascade):
        mag = np.abs(cascade_response(cascade, REF_FREQS_HZ, FS))
        mag_db = 20.0 * np.log10(mag)
        assert np.max(np.abs(mag_db - np.asarray(REF_MAG_DB))) < 0.1

    def test_unity_gain_at_geometric_center(self, cascade):
        fc = math.sqrt(8.0 * 22.0)
        mag = abs(cascade_response(cascade, [fc], FS)[0])
        assert abs(20.0 * math.log10(mag)) < 0.1

    def test_exact_zero_at_dc(self, cascade):
        assert abs(cascade_response(cascade, [0.0], FS)[0]) == 0.0

    def test_exact_zero_at_nyquist(self, cascade):
        assert abs(cascade_response(cascade, [FS / 2.0], FS)[0]) == 0.0

    def test_section_count_is_half_order(self, cascade):
        assert len(cascade) == 2

    @pytest.mark.parametrize("low,high,order", [
        (22.0, 8.0, 4),     # inverted edges
        (0.0, 22.0, 4),     # low edge at DC
        (8.0, 128.0, 4),    # high edge at Nyquist
        (8.0, 22.0, 3),     # odd order
        (8.0, 22.0, 0),     # zero order
    ])
    def test_invalid_parameters(self, low, high, order):
        with pytest.raises(FilterDesignError):
            design_butterworth_bandpass(low, high, FS, order)

    def test_sections_ordered_by_pole_radius(self, cascade):
        radii = [s.pole_radius() for s in cascade]
        assert radii == sorted(radii)

    @settings(max_examples=60, deadline=None)
    @given(low=st.floats(0.5, 100.0), width=st.floats(2.0, 80.0),
           order=st.sampled_from([2, 4, 6, 8]))
    def test_stability_over_valid_bands(self, low, width, order):
        high = low + width
        if high >= FS / 2.0 - 1.0:
            high = FS / 2.0 - 1.0
        if high - low < 2.0:
            return
        sections = design_butterworth_bandpass(low, high, FS, order)
        assert len(sections) == order // 2
        for s in sections:
            assert s.pole_radius() < 1.0 - 1e-9

    def test_unstable_section_rejected(self):
        with pytest.raises(FilterDesignError):
            BiquadCoeffs(1.0, 0.0, 0.0, -2.0, 1.0)  # poles on the circle


class TestQuantize:
    def test_power_of_two_is_exact(self):
        fixed = quantize_coeffs(
            [BiquadCoeffs(1.0, 0.0, 0.0, 0.0, 0.0)], frac_bits=13)
        assert fixed[0].b0 == 8192

    def test_round_ties_away(self):
        fixed = quantize_coeffs(
            [BiquadCoeffs(1.0, 0.0, 0.0, -1.9998, 0.99999)], frac_bits=13)
        assert fixed[0].a1 == -16382  # round(-1.9998 * 8192) = -16382

    def test_out_of_range_names_coefficient(self):
        sec = BiquadCoeffs(5.0, 0.0, 0.0, 0.0, 0.0)
        with pytest.raises(QuantizationOverflowError, match="b0"):
            quantize_coeffs([sec], frac_bits=13)

    def test_dequantized_within_half_lsb(self, cascade, fixed_cascade):
        lsb = 2.0 ** -13
        for sec, fix in zip(cascade, fixed_cascade):
            deq = fix.dequantized()
            for name in ("b0", "b1", "b2", "a1", "a2"):
                assert abs(getattr(deq, name) - getattr(sec, name)) <= lsb / 2

    def test_code_range_enforced(self):
        with pytest.raises(QuantizationOverflowError):
            FixedBiquadCoeffs(40000, 0, 0, 0, 0, frac_bits=13)

    def test_passband_gain_within_half_db_of_float(self, cascade,
                                                   fixed_cascade):
        freqs = np.linspace(8.0, 22.0, 57)
        h_float = np.abs(cascade_response(cascade, freqs, FS))
        deq = [f.dequantized() for f in fixed_cascade]
        h_fixed = np.abs(cascade_response(deq, freqs, FS))
        diff_db = 20.0 * np.log10(h_fixed / h_float)
        assert np.max(np.abs(diff_db)) < 0.5


class TestBiquadStep:
    def test_identity_section(self):
        coeffs = BiquadCoeffs(1.0, 0.0, 0.0, 0.0, 0.0)
        state = BiquadState()
        assert biquad_step(state, coeffs, 0.5) == 0.5

    def test_impulse_response_decays(self, cascade):
        states = [BiquadState() for _ in cascade]
        tail_max = 0.0
        for n in range(12000):
            y = 1.0 if n == 0 else 0.0
            for coeffs, state in zip(cascade, states):
                y = biquad_step(state, coeffs, y)
            if n > 10000:
                tail_max = max(tail_max, abs(y))
        assert tail_max < 1e-6

    def test_fixed_vs_float_on_seeded_noise(self, cascade, fixed_cascade):
        rng = np.random.default_rng(42)
        x = rng.uniform(-0.5, 0.5, int(FS))  # 1 s at half full scale
        states_f = [BiquadState() for _ in cascade]
        states_x = [FixedBiquadState() for _ in cascade]
        worst = 0.0
        for value in x:
            yf = value
            for coeffs, state in zip(cascade, states_f):
                yf = biquad_step(state, coeffs, yf)
            yx = int(round(value * 32768.0))
            for coeffs, state in zip(fixed_cascade, states_x):
                yx = biquad_step_fixed(state, coeffs, yx)
            worst = max(worst, abs(yf - yx / 32768.0))
        assert worst <= 2.0 ** -10
        assert sum(s.saturations for s in states_x) == 0

    def test_saturation_clamps_instead_of_wrapping(self):
        # High-Q resonator with unit feedforward: a full-scale tone at the
        # resonance drives the output far past Q1.15.
        coeffs = quantize_coeffs(
            [BiquadCoeffs(1.0, 0.0, -1.0, -1.979, 0.9801)], frac_bits=13)[0]
        state = FixedBiquadState()
        f0 = FS * math.acos(1.979 / (2 * math.sqrt(0.9801))) / (2 * math.pi)
        n = np.arange(2048)
        tone = np.sin(2 * np.pi * f0 * n / FS)
        outputs = [biquad_step_fixed(state, coeffs, int(v * 32767))
                   for v in tone]
        assert state.saturations > 0
        assert max(outputs) <= 32767 and min(outputs) >= -32768

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-1.0, 1.0), min_size=8, max_size=64))
    def test_fixed_outputs_stay_in_range(self, values):
        cascade = design_butterworth_bandpass(8.0, 22.0, FS, 4)
        fixed = quantize_coeffs(cascade)
        states = [FixedBiquadState() for _ in fixed]
        for v in values:
            code = int(round(v * 32767))
            for coeffs, state in zip(fixed, states):
                code = biquad_step_fixed(state, coeffs, code)
                assert -32768 <= code <= 32767

    def test_linearity_of_float_path(self, cascade):
        rng = np.random.default_rng(7)
        x1 = rng.standard_normal(128)
        x2 = rng.standard_normal(128)
        a, b = 1.7, -0.4

        def run(x):
            states = [BiquadState() for _ in cascade]
            out = np.empty_like(x)
            for i, v in enumerate(x):
                y = v
                for coeffs, state in zip(cascade, states):
                    y = biquad_step(state, coeffs, y)
                out[i] = y
            return out

        lhs = run(a * x1 + b * x2)
        rhs = a * run(x1) + b * run(x2)
        scale = max(1.0, float(np.max(np.abs(rhs))))
        assert np.max(np.abs(lhs - rhs)) <= 1e-9 * scale


class TestEnvelope:
    def test_constant_input_converges_monotonically(self):
        state = EnvelopeState(decay_samples=32)
        values = [envelope_step(state, 0.75) for _ in range(400)]
        diffs = np.diff(values)
        assert np.all(diffs > 0.0)
        assert values[-1] < 0.75
        assert values[-1] > 0.75 * 0.999

    def test_step_response_closed_form(self):
        state = EnvelopeState(decay_samples=32)
        for _ in range(32):
            env = envelope_step(state, 1.0)
        expected = 1.0 - (31.0 / 32.0) ** 32  # 0.63794...
        assert env == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(0.6378, abs=5e-4)

    def test_rectified_sine_steady_state_mean(self):
        state = EnvelopeState(decay_samples=32)
        t = np.arange(int(20 * FS)) / FS
        x = np.sin(2 * np.pi * 13.0 * t)
        env = np.array([envelope_step(state, v) for v in x])
        steady = env[int(10 * FS):]
        assert np.mean(steady) == pytest.approx(2.0 / np.pi, rel=0.05)

    def test_decay_must_be_positive(self):
        with pytest.raises(ValueError):
            EnvelopeState(decay_samples=0)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1,
                    max_size=200),
           st.integers(1, 100))
    def test_envelope_never_negative(self, values, decay):
        state = EnvelopeState(decay_samples=decay)
        for v in values:
            assert envelope_step(state, v) >= 0.0

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.integers(-32768, 32767), min_size=1, max_size=200),
           st.integers(1, 100))
    def test_fixed_envelope_never_negative(self, codes, decay):
        state = FixedEnvelopeState(decay_samples=decay)
        for c in codes:
            assert envelope_step_fixed(state, c) >= 0

    def test_fixed_envelope_tracks_float(self):
        sf = EnvelopeState(decay_samples=32)
        sx = FixedEnvelopeState(decay_samples=32)
        rng = np.random.default_rng(3)
        worst = 0.0
        for v in rng.uniform(-1.0, 1.0, 2000):
            ef = envelope_step(sf, v)
            ex = envelope_step_fixed(sx, int(round(v * 32767))) / 32768.0
            worst = max(worst, abs(ef - ex))
        assert worst < 1e-3


class TestFilterChainClassifier:
    def test_label_follows_threshold(self):
        chain = FilterChainClassifier(
            [BiquadCoeffs(1.0, 0.0, 0.0, 0.0, 0.0)], threshold=0.1,
            fs_hz=FS, decay_samples=1)
        env, label = chain.step(0.5)  # env = |0.5| with decay 1
        assert env == 0.5 and label == 1
        env, label = chain.step(0.05)
        assert label == 0

    def test_passband_tone_fires_after_onset(self, cascade):
        chain = FilterChainClassifier(cascade, threshold=0.05, fs_hz=FS)
        t = np.arange(int(FS)) / FS
        tone = 0.5 * np.sin(2 * np.pi * 13.0 * t)
        labels = chain.stream_labels(tone)
        first = int(np.argmax(labels))
        assert labels[first] == 1      # it does fire
        assert first > 0               # strictly after tone onset
        chain.reset()
        assert chain.envelope.env == 0.0

    def test_stopband_tone_never_fires(self, cascade):
        chain = FilterChainClassifier(cascade, threshold=0.05, fs_hz=FS)
        t = np.arange(int(FS)) / FS
        tone = 0.5 * np.sin(2 * np.pi * 50.0 * t)
        assert not np.any(chain.stream_labels(tone))

    def test_fixed_chain_matches_float_labels(self, cascade, fixed_cascade):
        t = np.arange(int(FS)) / FS
        tone = 0.5 * np.sin(2 * np.pi * 13.0 * t)
        cf = FilterChainClassifier(cascade, threshold=0.05, fs_hz=FS)
        cx = FixedFilterChainClassifier(fixed_cascade, threshold=0.05,
                                        fs_hz=FS)
        lf = cf.stream_labels(tone)
        lx = cx.stream_labels(tone)
        assert np.mean(lf != lx) < 0.02  # only edge samples may disagree


class TestDesignFile:
    def test_round_trip(self, tmp_path):
        design = make_filter_design(8.0, 22.0, FS, 4, threshold=0.031)
        path = tmp_path / "design.json"
        save_filter_design(design, path)
        loaded = load_filter_design(path)
        assert loaded.fs_hz == design.fs_hz
        assert loaded.frac_bits == design.frac_bits
        assert loaded.threshold == design.threshold
        assert loaded.decay_samples == design.decay_samples
        for a, b in zip(design.sections, loaded.sections):
            assert a == b
        for a, b in zip(design.fixed_sections, loaded.fixed_sections):
            assert a == b

    def test_rejects_other_files(self, tmp_path):
        path = tmp_path / "other.json"
        path.write_text('{"kind": "something_else"}')
        with pytest.raises(ValueError):
            load_filter_design(path)
