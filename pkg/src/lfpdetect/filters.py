"""Band-power filter chain: Butterworth band-pass design, Direct Form I
biquads in float and 16-bit fixed point, rectify + exponential-moving-average
envelope, and the thresholding classifier built from those stages.

Fixed-point conventions: coefficients are Q2.13 by default (13 fraction
bits, range just under +/-4, enough for band-pass feedback terms near +/-2),
signal samples are Q1.15 full scale, and all accumulation happens in 32 bits
with saturation instead of wrap-around.
"""

import cmath
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

COEFF_BITS = 16
ACCUM_BITS = 32
SAMPLE_FRAC_BITS = 15

_SAMPLE_MAX = (1 << SAMPLE_FRAC_BITS) - 1        # 32767
_SAMPLE_MIN = -(1 << SAMPLE_FRAC_BITS)           # -32768
_ACC_MAX = (1 << (ACCUM_BITS - 1)) - 1
_ACC_MIN = -(1 << (ACCUM_BITS - 1))

# Envelope state keeps extra fraction bits so slow decays do not dead-zone;
# it still fits the 32-bit state word.
ENV_EXTRA_BITS = 14


class FilterDesignError(ValueError):
    """Invalid band edges, order, or an unstable design request."""


class QuantizationOverflowError(ValueError):
    """A coefficient does not fit the requested fixed-point format."""


@dataclass(frozen=True)
class BiquadCoeffs:
    """One second-order section, a0 normalized to 1."""

    b0: float
    b1: float
    b2: float
    a1: float
    a2: float

    def __post_init__(self):
        r = self.pole_radius()
        if not r < 1.0 - 1e-9:
            raise FilterDesignError(f"unstable section: pole radius {r!r}")

    def pole_radius(self):
        """Largest magnitude among the roots of z^2 + a1*z + a2."""
        disc = self.a1 * self.a1 - 4.0 * self.a2
        if disc >= 0.0:
            s = math.sqrt(disc)
            return max(abs((-self.a1 + s) / 2.0), abs((-self.a1 - s) / 2.0))
        return math.sqrt(self.a2)  # conjugate pair, |p|^2 = a2


@dataclass(frozen=True)
class FixedBiquadCoeffs:
    """Second-order section with 16-bit signed coefficient codes."""

    b0: int
    b1: int
    b2: int
    a1: int
    a2: int
    frac_bits: int

    def __post_init__(self):
        lo, hi = -(1 << (COEFF_BITS - 1)), (1 << (COEFF_BITS - 1)) - 1
        for name in ("b0", "b1", "b2", "a1", "a2"):
            code = getattr(self, name)
            if not (lo <= code <= hi):
                raise QuantizationOverflowError(
                    f"coefficient {name} code {code} outside [{lo}, {hi}]")

    def dequantized(self) -> BiquadCoeffs:
        s = float(1 << self.frac_bits)
        return BiquadCoeffs(self.b0 / s, self.b1 / s, self.b2 / s,
                            self.a1 / s, self.a2 / s)


def design_butterworth_bandpass(low_hz, high_hz, fs_hz, order):
    """Design a digital Butterworth band-pass as a list of BiquadCoeffs.

    `order` is the overall filter order (even, >= 2); the analog low-pass
    prototype has order/2 poles, which the band transform doubles. The
    bilinear transform is applied with both band edges pre-warped, so the
    -3 dB points land exactly on low_hz and high_hz. Sections are ordered
    with the pole pair closest to the unit circle last, and the overall
    gain is spread evenly across sections to limit intermediate growth.
    """
    if not (0.0 < low_hz < high_hz < fs_hz / 2.0):
        raise FilterDesignError(
            f"band edges must satisfy 0 < low < high < fs/2, "
            f"got low={low_hz}, high={high_hz}, fs={fs_hz}")
    if order < 2 or order % 2 != 0:
        raise FilterDesignError(f"order must be even and >= 2, got {order}")

    n = order // 2
    # Butterworth analog low-pass prototype: n poles on the unit circle,
    # left half-plane, no zeros, unit gain.
    proto = [cmath.exp(1j * math.pi * (2.0 * k + n + 1.0) / (2.0 * n))
             for k in range(n)]

    c = 2.0 * fs_hz
    w1 = c * math.tan(math.pi * low_hz / fs_hz)
    w2 = c * math.tan(math.pi * high_hz / fs_hz)
    bw, w0 = w2 - w1, math.sqrt(w1 * w2)

    # Low-pass -> band-pass: each prototype pole spawns a pair; the n zeros
    # sit at s = 0 and the transform gain is bw**n.
    analog_poles = []
    for p in proto:
        ph = p * bw / 2.0
        d = cmath.sqrt(ph * ph - w0 * w0)
        analog_poles.extend([ph + d, ph - d])

    # Bilinear transform s -> z = (c + s)/(c - s). The n zeros at s=0 map to
    # z=+1 and the pole excess contributes n zeros at z=-1, so every section
    # gets the numerator g*(1, 0, -1). Gain carried over from the analog
    # form: k * prod(c - zeros) / prod(c - poles) with zeros all at 0.
    digital_poles = [(c + s) / (c - s) for s in analog_poles]
    den = 1.0 + 0.0j
    for s in analog_poles:
        den *= (c - s)
    k = (bw ** n) * (c ** n / den).real
    if k <= 0.0:
        raise FilterDesignError("non-positive cascade gain; degenerate band")

    pairs = _conjugate_pairs(digital_poles)
    pairs.sort(key=lambda ab: BiquadCoeffs(1.0, 0.0, 0.0, *ab).pole_radius())
    g = k ** (1.0 / len(pairs))
    return [BiquadCoeffs(g, 0.0, -g, a1, a2) for a1, a2 in pairs]


def _conjugate_pairs(poles):
    """Group a conjugate-closed pole set into (a1, a2) denominator pairs."""
    tol = 1e-9
    real = sorted(p.real for p in poles if abs(p.imag) <= tol * max(1.0, abs(p)))
    cplx = sorted((p for p in poles if p.imag > tol * max(1.0, abs(p))),
                  key=lambda p: (p.real, p.imag))
    if len(real) % 2 != 0:
        raise FilterDesignError("unpaired real pole; order must be even")
    pairs = [(-2.0 * p.real, abs(p) ** 2) for p in cplx]
    for r1, r2 in zip(real[0::2], real[1::2]):
        pairs.append((-(r1 + r2), r1 * r2))
    return pairs


def quantize_coeffs(cascade, frac_bits=13):
    """Round a float cascade to 16-bit fixed-point codes.

    Round-to-nearest with ties away from zero. Raises
    QuantizationOverflowError naming the offending coefficient when a value
    does not fit the signed 16-bit format at the requested precision.
    """
    limit = 2.0 ** (COEFF_BITS - 1 - frac_bits)
    scale = 1 << frac_bits
    fixed = []
    for i, sec in enumerate(cascade):
        codes = {}
        for name in ("b0", "b1", "b2", "a1", "a2"):
            value = getattr(sec, name)
            if not abs(value) < limit:
                raise QuantizationOverflowError(
                    f"section {i} coefficient {name}={value!r} exceeds "
                    f"+/-{limit} for frac_bits={frac_bits}")
            code = _round_half_away(value * scale)
            if not (_SAMPLE_MIN <= code <= _SAMPLE_MAX):
                raise QuantizationOverflowError(
                    f"section {i} coefficient {name}={value!r} rounds to "
                    f"code {code}, outside 16-bit range")
            codes[name] = code
        fixed.append(FixedBiquadCoeffs(frac_bits=frac_bits, **codes))
    return fixed


def _round_half_away(x):
    return int(math.floor(x + 0.5)) if x >= 0.0 else int(math.ceil(x - 0.5))


@dataclass
class BiquadState:
    """Direct Form I delay line (float path)."""

    x1: float = 0.0
    x2: float = 0.0
    y1: float = 0.0
    y2: float = 0.0

    def reset(self):
        self.x1 = self.x2 = self.y1 = self.y2 = 0.0


@dataclass
class FixedBiquadState:
    """Direct Form I delay line holding 32-bit fixed-point words, plus a
    counter of saturation events (accumulator or output clamps)."""

    x1: int = 0
    x2: int = 0
    y1: int = 0
    y2: int = 0
    saturations: int = 0

    def reset(self):
        self.x1 = self.x2 = self.y1 = self.y2 = 0
        self.saturations = 0


def biquad_step(state, coeffs, x):
    """One Direct Form I step in float arithmetic."""
    y = (coeffs.b0 * x + coeffs.b1 * state.x1 + coeffs.b2 * state.x2
         - coeffs.a1 * state.y1 - coeffs.a2 * state.y2)
    state.x2, state.x1 = state.x1, x
    state.y2, state.y1 = state.y1, y
    return y


def biquad_step_fixed(state, coeffs, x):
    """One Direct Form I step on Q1.15 sample codes with a saturating
    32-bit accumulator.

    Each coefficient*sample product is exact; partial sums clamp to the
    32-bit range (counted, never wrapped). The accumulator is renormalized
    by the coefficient fraction bits with round-half-up and the output is
    clamped back to Q1.15.
    """
    acc = 0
    for term in (coeffs.b0 * x,
                 coeffs.b1 * state.x1,
                 coeffs.b2 * state.x2,
                 -coeffs.a1 * state.y1,
                 -coeffs.a2 * state.y2):
        acc += term
        if acc > _ACC_MAX:
            acc = _ACC_MAX
            state.saturations += 1
        elif acc < _ACC_MIN:
            acc = _ACC_MIN
            state.saturations += 1
    y = (acc + (1 << (coeffs.frac_bits - 1))) >> coeffs.frac_bits
    if y > _SAMPLE_MAX:
        y = _SAMPLE_MAX
        state.saturations += 1
    elif y < _SAMPLE_MIN:
        y = _SAMPLE_MIN
        state.saturations += 1
    state.x2, state.x1 = state.x1, x
    state.y2, state.y1 = state.y1, y
    return y


@dataclass
class EnvelopeState:
    """Full-wave rectifier followed by a first-order moving average with
    update gain 1/decay_samples."""

    decay_samples: int = 32
    env: float = 0.0

    def __post_init__(self):
        if self.decay_samples < 1:
            raise ValueError("decay_samples must be >= 1")

    def reset(self):
        self.env = 0.0


def envelope_step(state, x):
    state.env += (abs(x) - state.env) / state.decay_samples
    return state.env


@dataclass
class FixedEnvelopeState:
    """Integer envelope; the running average keeps ENV_EXTRA_BITS of extra
    fraction so a decay of 32 does not stall near the target."""

    decay_samples: int = 32
    acc: int = 0  # Q1.(15+ENV_EXTRA_BITS)

    def __post_init__(self):
        if self.decay_samples < 1:
            raise ValueError("decay_samples must be >= 1")

    @property
    def env(self):
        """Current envelope as a Q1.15 code."""
        return self.acc >> ENV_EXTRA_BITS

    def reset(self):
        self.acc = 0


def envelope_step_fixed(state, x):
    """Integer envelope update on a Q1.15 sample code; returns the Q1.15
    envelope. Division by the decay rounds to nearest, ties away."""
    delta = (abs(x) << ENV_EXTRA_BITS) - state.acc
    d = state.decay_samples
    step = (delta + d // 2) // d if delta >= 0 else -((-delta + d // 2) // d)
    state.acc += step
    return state.acc >> ENV_EXTRA_BITS


def quantize_sample(x):
    """Float in [-1, 1] -> Q1.15 code, rounded, clamped at full scale."""
    code = _round_half_away(x * (1 << SAMPLE_FRAC_BITS))
    return max(_SAMPLE_MIN, min(_SAMPLE_MAX, code))


class FilterChainClassifier:
    """Float reference path: band-pass cascade -> rectify -> EMA -> compare.

    Consumes samples pre-scaled to [-1, 1] full scale; the threshold is in
    the same normalized units as the envelope. Strictly single-stream.
    """

    def __init__(self, sections, threshold, fs_hz, decay_samples=32):
        self.sections = list(sections)
        self.threshold = float(threshold)
        self.fs_hz = float(fs_hz)
        self.states = [BiquadState() for _ in self.sections]
        self.envelope = EnvelopeState(decay_samples=decay_samples)

    def reset(self):
        for s in self.states:
            s.reset()
        self.envelope.reset()

    def step(self, x):
        """Process one sample; returns (envelope, label)."""
        y = x
        for coeffs, state in zip(self.sections, self.states):
            y = biquad_step(state, coeffs, y)
        env = envelope_step(self.envelope, y)
        return env, int(env > self.threshold)

    def stream_labels(self, samples):
        """Per-sample 0/1 labels for a whole normalized sample vector."""
        return np.fromiter((self.step(x)[1] for x in samples),
                           dtype=np.int8, count=len(samples))

    def stream_envelope(self, samples):
        """Per-sample envelope values (the ROC sweep score)."""
        return np.fromiter((self.step(x)[0] for x in samples),
                           dtype=np.float64, count=len(samples))

    def trial_outputs(self, samples):
        """Streaming-interface hook: one output in [0, 1] per sample."""
        return self.stream_labels(samples).astype(np.float64)


class FixedFilterChainClassifier:
    """Device-style path: Q1.15 samples, 16-bit coefficients, 32-bit
    saturating accumulators, integer envelope. Same streaming interface as
    the float classifier; also exposes the total saturation count."""

    def __init__(self, sections, threshold, fs_hz, decay_samples=32):
        self.sections = list(sections)
        self.threshold = float(threshold)
        self.threshold_code = quantize_sample(threshold)
        self.fs_hz = float(fs_hz)
        self.states = [FixedBiquadState() for _ in self.sections]
        self.envelope = FixedEnvelopeState(decay_samples=decay_samples)

    def reset(self):
        for s in self.states:
            s.reset()
        self.envelope.reset()

    @property
    def saturations(self):
        return sum(s.saturations for s in self.states)

    def step(self, x):
        """Process one normalized float sample; returns (envelope, label)
        with the envelope rescaled back to [0, 1] units."""
        code = quantize_sample(x)
        for coeffs, state in zip(self.sections, self.states):
            code = biquad_step_fixed(state, coeffs, code)
        env_code = envelope_step_fixed(self.envelope, code)
        label = int(env_code > self.threshold_code)
        return env_code / float(1 << SAMPLE_FRAC_BITS), label

    def stream_labels(self, samples):
        return np.fromiter((self.step(x)[1] for x in samples),
                           dtype=np.int8, count=len(samples))

    def stream_envelope(self, samples):
        return np.fromiter((self.step(x)[0] for x in samples),
                           dtype=np.float64, count=len(samples))

    def trial_outputs(self, samples):
        return self.stream_labels(samples).astype(np.float64)


def cascade_response(sections, freqs_hz, fs_hz):
    """Complex frequency response H(e^{j*2*pi*f/fs}) of a float cascade."""
    f = np.asarray(freqs_hz, dtype=np.float64)
    w = 2.0 * np.pi * f / fs_hz
    zinv = np.exp(-1j * w)
    # exp() leaves residue in the imaginary part at the Nyquist point,
    # which would smear the exact z=-1 numerator zero.
    zinv = np.where(w == np.pi, -1.0 + 0.0j, zinv)
    h = np.ones_like(zinv)
    for s in sections:
        h *= ((s.b0 + s.b1 * zinv + s.b2 * zinv ** 2)
              / (1.0 + s.a1 * zinv + s.a2 * zinv ** 2))
    return h


@dataclass
class FilterDesign:
    """A designed chain plus its quantization, ready to export or run."""

    sections: list
    fixed_sections: list
    frac_bits: int
    fs_hz: float
    decay_samples: int = 32
    threshold: float = 0.0

    def float_classifier(self):
        return FilterChainClassifier(self.sections, self.threshold,
                                     self.fs_hz, self.decay_samples)

    def fixed_classifier(self):
        return FixedFilterChainClassifier(self.fixed_sections, self.threshold,
                                          self.fs_hz, self.decay_samples)


def make_filter_design(low_hz, high_hz, fs_hz, order,
                       frac_bits=13, decay_samples=32, threshold=0.0):
    sections = design_butterworth_bandpass(low_hz, high_hz, fs_hz, order)
    fixed = quantize_coeffs(sections, frac_bits)
    return FilterDesign(sections, fixed, frac_bits, fs_hz,
                        decay_samples, threshold)


def save_filter_design(design, path):
    """Structured text export: float coefficients, fixed codes, format."""
    doc = {
        "kind": "filter_chain",
        "fs_hz": design.fs_hz,
        "frac_bits": design.frac_bits,
        "decay_samples": design.decay_samples,
        "threshold": design.threshold,
        "sections": [
            {
                "float": {n: getattr(s, n) for n in ("b0", "b1", "b2", "a1", "a2")},
                "codes": {n: getattr(f, n) for n in ("b0", "b1", "b2", "a1", "a2")},
            }
            for s, f in zip(design.sections, design.fixed_sections)
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_filter_design(path):
    doc = json.loads(Path(path).read_text())
    if doc.get("kind") != "filter_chain":
        raise ValueError(f"{path}: not a filter design file")
    frac_bits = int(doc["frac_bits"])
    sections = [BiquadCoeffs(**sec["float"]) for sec in doc["sections"]]
    fixed = [FixedBiquadCoeffs(frac_bits=frac_bits,
                               **{k: int(v) for k, v in sec["codes"].items()})
             for sec in doc["sections"]]
    return FilterDesign(sections, fixed, frac_bits, float(doc["fs_hz"]),
                        int(doc["decay_samples"]), float(doc["threshold"]))
