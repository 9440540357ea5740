"""Seeded synthetic LFP recordings and their on-disk format.

The generator is a stand-in for clinical data: a 1/f-shaped background (white
noise through a first-order recursive lowpass, not claimed physiological)
plus amplitude-modulated oscillatory bursts whose instantaneous frequency
wanders inside the configured band. Everything is a pure function of
(config, seed).

File format (three files sharing a stem):
    <path>       header, text:  fs_hz=..., n_samples=..., full_scale_uv=...
    <path>.f32   samples, raw 32-bit float little-endian
    <path>.ann   annotations, one "start_s,end_s,label" row per event
"""

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class RecordingFormatError(ValueError):
    """Corrupt or inconsistent recording files."""


@dataclass(frozen=True)
class EventAnnotation:
    start_s: float
    end_s: float
    label: str = "seizure"

    def __post_init__(self):
        if not (0.0 <= self.start_s < self.end_s):
            raise ValueError(
                f"bad event bounds: start={self.start_s}, end={self.end_s}")


@dataclass
class Recording:
    """Single-channel sample vector (microvolts, float32) with annotations."""

    samples: np.ndarray
    fs_hz: float
    full_scale_uv: float
    annotations: list = field(default_factory=list)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32)
        if self.fs_hz <= 0.0:
            raise ValueError("fs_hz must be positive")
        if self.full_scale_uv <= 0.0:
            raise ValueError("full_scale_uv must be positive")
        if self.samples.size and not np.all(np.isfinite(self.samples)):
            raise ValueError("non-finite samples")
        if self.samples.size and \
                float(np.max(np.abs(self.samples))) > self.full_scale_uv:
            raise ValueError("samples exceed full_scale_uv")
        dur = self.duration_s
        last_end = -1.0
        for ev in self.annotations:
            if ev.start_s < last_end:
                raise ValueError("annotations overlap or are unsorted")
            if ev.end_s > dur + 1e-9:
                raise ValueError(f"event ends at {ev.end_s}s, past {dur}s")
            last_end = ev.end_s

    @property
    def duration_s(self):
        return self.samples.size / self.fs_hz

    def normalized(self):
        """Samples scaled to [-1, 1] by the full-scale constant."""
        return self.samples.astype(np.float64) / self.full_scale_uv


@dataclass
class SynthConfig:
    duration_s: float = 1800.0
    n_events: int = 10
    event_duration_range_s: tuple = (8.0, 20.0)
    background_rms_uv: float = 2.0
    event_band_hz: tuple = (8.0, 22.0)
    event_rms_uv: float = 10.0
    full_scale_uv: float = 100.0
    fs_hz: float = 256.0
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.event_duration_range_s
        if not (0.0 < lo <= hi):
            raise ValueError("bad event duration range")
        if self.background_rms_uv <= 0.0 or self.event_rms_uv <= 0.0:
            raise ValueError("rms values must be positive")
        b_lo, b_hi = self.event_band_hz
        if not (0.0 < b_lo < b_hi < self.fs_hz / 2.0):
            raise ValueError("event band must sit below Nyquist")
        if self.n_events < 0:
            raise ValueError("n_events must be >= 0")
        if self.duration_s <= 0.0:
            raise ValueError("duration_s must be positive")


def pink_background(n, rng, pole=0.95):
    """Unit-rms 1/f-flavored noise: white noise through y[i] = pole*y[i-1]
    + w[i]. Crude (steeper than true pink above the corner) but cheap and
    monotonically low-frequency-heavy, which is all the tests rely on."""
    w = rng.standard_normal(n)
    y = np.empty(n)
    acc = 0.0
    for i in range(n):
        acc = pole * acc + w[i]
        y[i] = acc
    rms = math.sqrt(float(np.mean(y * y)))
    return y / rms if rms > 0.0 else y


def _smooth_unit(rng, n, span):
    """Seeded smooth waveform in (-1, 1): box-smoothed white noise squashed
    through tanh. Used for frequency wander and amplitude modulation."""
    raw = rng.standard_normal(n + span)
    kernel = np.ones(span) / span
    sm = np.convolve(raw, kernel, mode="valid")[:n]
    sd = float(np.std(sm))
    return np.tanh(sm / (2.0 * sd)) if sd > 0.0 else np.zeros(n)


def _event_burst(rng, n, fs_hz, band_hz, ramp_s=0.5):
    """One unit-rms oscillatory burst: instantaneous frequency wandering
    inside the band, mild amplitude modulation, raised-cosine ramps."""
    lo, hi = band_hz
    span = max(int(fs_hz), 2)
    center, half = (lo + hi) / 2.0, (hi - lo) / 2.0
    freq = center + half * _smooth_unit(rng, n, span)
    phase = 2.0 * np.pi * np.cumsum(freq) / fs_hz + rng.uniform(0, 2 * np.pi)
    am = 1.0 + 0.4 * _smooth_unit(rng, n, span)
    burst = am * np.sin(phase)

    ramp_len = min(int(round(ramp_s * fs_hz)), n // 2)
    if ramp_len > 0:
        ramp = 0.5 * (1.0 - np.cos(np.pi * np.arange(ramp_len) / ramp_len))
        burst[:ramp_len] *= ramp
        burst[-ramp_len:] *= ramp[::-1]
    rms = math.sqrt(float(np.mean(burst * burst)))
    return burst / rms if rms > 0.0 else burst


def _place_events(rng, n_events, durations, duration_s, margin_s=1.0):
    """Non-overlapping start times with a margin around every event; raises
    when the requested events cannot fit."""
    total = float(np.sum(durations))
    free = duration_s - total - margin_s * (n_events + 1)
    if free < 0.0:
        raise ValueError(
            f"{n_events} events totalling {total:.1f}s (+margins) do not fit "
            f"in {duration_s:.1f}s")
    cuts = np.sort(rng.uniform(0.0, free, size=n_events))
    starts = []
    consumed = 0.0
    for k in range(n_events):
        start = margin_s * (k + 1) + consumed + cuts[k]
        starts.append(start)
        consumed += durations[k]
    return starts


def generate_recording(config):
    """Seeded synthetic recording plus its annotations."""
    rng = np.random.default_rng(config.seed)
    n = int(round(config.duration_s * config.fs_hz))
    samples = pink_background(n, rng) * config.background_rms_uv

    lo_d, hi_d = config.event_duration_range_s
    durations = rng.uniform(lo_d, hi_d, size=config.n_events)
    starts = _place_events(rng, config.n_events, durations, config.duration_s)

    annotations = []
    for start_s, dur_s in zip(starts, durations):
        i0 = int(round(start_s * config.fs_hz))
        length = int(round(dur_s * config.fs_hz))
        length = min(length, n - i0)
        burst = _event_burst(rng, length, config.fs_hz, config.event_band_hz)
        samples[i0:i0 + length] += burst * config.event_rms_uv
        annotations.append(EventAnnotation(i0 / config.fs_hz,
                                           (i0 + length) / config.fs_hz))

    peak = float(np.max(np.abs(samples))) if n else 0.0
    if peak > config.full_scale_uv:
        raise ValueError(
            f"generated peak {peak:.1f} uV exceeds full scale "
            f"{config.full_scale_uv} uV; lower the rms settings")
    return Recording(samples.astype(np.float32), config.fs_hz,
                     config.full_scale_uv, annotations)


def event_sample_mask(recording):
    """Boolean per-sample mask: True inside any annotated event."""
    n = recording.samples.size
    mask = np.zeros(n, dtype=bool)
    fs = recording.fs_hz
    for ev in recording.annotations:
        lo = int(np.ceil(ev.start_s * fs - 1e-9))
        hi = int(np.ceil(ev.end_s * fs - 1e-9))
        mask[max(lo, 0):min(hi, n)] = True
    return mask


def save_recording(recording, path):
    """Write header, raw float32 payload, and the annotation sidecar."""
    path = Path(path)
    header = (f"fs_hz={recording.fs_hz!r}\n"
              f"n_samples={recording.samples.size}\n"
              f"full_scale_uv={recording.full_scale_uv!r}\n")
    path.write_text(header)
    recording.samples.astype("<f4").tofile(path.with_name(path.name + ".f32"))
    rows = "".join(f"{ev.start_s!r},{ev.end_s!r},{ev.label}\n"
                   for ev in recording.annotations)
    path.with_name(path.name + ".ann").write_text(rows)


def load_recording(path):
    path = Path(path)
    fields = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if "=" not in line:
            raise RecordingFormatError(f"{path}:{lineno}: bad header line")
        key, value = line.split("=", 1)
        fields[key.strip()] = value.strip()
    try:
        fs_hz = float(fields["fs_hz"])
        n_samples = int(fields["n_samples"])
        full_scale_uv = float(fields["full_scale_uv"])
    except (KeyError, ValueError) as exc:
        raise RecordingFormatError(f"{path}: incomplete header ({exc})")

    payload = path.with_name(path.name + ".f32")
    raw = np.fromfile(payload, dtype="<f4")
    if raw.size != n_samples:
        raise RecordingFormatError(
            f"{payload}: header declares {n_samples} samples, payload holds "
            f"{raw.size}")

    annotations = []
    ann_path = path.with_name(path.name + ".ann")
    if ann_path.exists():
        for lineno, line in enumerate(ann_path.read_text().splitlines(),
                                      start=1):
            if not line.strip():
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise RecordingFormatError(
                    f"{ann_path}:{lineno}: expected start_s,end_s,label")
            try:
                start_s, end_s = float(parts[0]), float(parts[1])
            except ValueError:
                raise RecordingFormatError(
                    f"{ann_path}:{lineno}: non-numeric event bounds")
            annotations.append(EventAnnotation(start_s, end_s, parts[2]))
    return Recording(raw, fs_hz, full_scale_uv, annotations)
