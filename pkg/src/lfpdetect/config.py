"""Experiment configuration: one INI-style document drives a whole run.

Every section is validated against its module's preconditions before any
work starts, and the resolved document (defaults filled in, overrides
applied) can be re-serialized so each run directory records exactly what
produced it.
"""

import configparser
import io
from dataclasses import dataclass, field

from .synth import SynthConfig
from .training import TrainConfig


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration; the message names
    the offending section/field."""


DEFAULTS = {
    "run": {"seed": "0", "out": "runs/out"},
    "synth": {
        "duration_s": "1800", "n_events": "10",
        "event_min_s": "8", "event_max_s": "20",
        "background_rms_uv": "2.0", "event_band_low_hz": "8",
        "event_band_high_hz": "22", "event_rms_uv": "10.0",
        "full_scale_uv": "100.0", "fs_hz": "256",
    },
    "filter": {
        "low_hz": "8", "high_hz": "22", "order": "4",
        "frac_bits": "13", "decay_samples": "32",
    },
    "mlp": {"window_len": "20", "hidden": "8", "consensus": "mean"},
    "training": {
        "learning_rate": "0.01", "momentum": "0.9", "epochs": "200",
        "batch_size": "32", "neg_pos_ratio": "3.0", "train_fraction": "0.7",
    },
    "evaluation": {
        "tpr_operating": "0.95", "tpr_matched": "0.90",
        "freqs_hz": "2,4,6,8,10,13,16,19,22,26,30,40,50,64,80,100",
        "amps_uv": "2,5,10,20,30,50",
        "tone_s": "1.0", "repeats": "10", "noise_rms_uv": "2.0",
    },
    "sweep": {
        "window_lens": "5,10,20,40,80", "hidden_sizes": "2,4,8,16,32",
        "epochs": "60",
    },
    "paths": {"recording": "", "model": ""},
}


def _parse(parser, section, key, conv, what):
    raw = parser.get(section, key)
    try:
        return conv(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}={raw!r} is not a valid {what}")


def _int(parser, s, k):
    return _parse(parser, s, k, int, "integer")


def _float(parser, s, k):
    return _parse(parser, s, k, float, "number")


def _num_list(parser, s, k, conv=float):
    raw = parser.get(s, k)
    try:
        values = [conv(tok) for tok in raw.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"[{s}] {k}={raw!r} is not a comma list of numbers")
    if not values:
        raise ConfigError(f"[{s}] {k} must list at least one value")
    return values


@dataclass
class ExperimentConfig:
    seed: int
    out: str
    synth: SynthConfig
    filter: dict
    mlp: dict
    training: TrainConfig
    evaluation: dict
    sweep: dict
    paths: dict
    resolved_text: str = ""

    def meta(self, **extra):
        """Metadata embedded at the top of every artifact."""
        meta = {"seed": self.seed}
        meta.update(extra)
        return meta


def load_experiment_config(path=None, overrides=None):
    """Parse, default-fill, and validate a config document. `overrides`
    maps "section.key" to string values (CLI flags)."""
    parser = configparser.ConfigParser()
    parser.read_dict(DEFAULTS)
    if path is not None:
        read = parser.read(path)
        if not read:
            raise ConfigError(f"config file not found: {path}")
    for dotted, value in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, str(value))

    for section in parser.sections():
        if section not in DEFAULTS:
            raise ConfigError(f"unknown config section [{section}]")
        for key in parser.options(section):
            if key not in DEFAULTS[section]:
                raise ConfigError(f"unknown option {key!r} in [{section}]")

    seed = _int(parser, "run", "seed")
    try:
        synth = SynthConfig(
            duration_s=_float(parser, "synth", "duration_s"),
            n_events=_int(parser, "synth", "n_events"),
            event_duration_range_s=(_float(parser, "synth", "event_min_s"),
                                    _float(parser, "synth", "event_max_s")),
            background_rms_uv=_float(parser, "synth", "background_rms_uv"),
            event_band_hz=(_float(parser, "synth", "event_band_low_hz"),
                           _float(parser, "synth", "event_band_high_hz")),
            event_rms_uv=_float(parser, "synth", "event_rms_uv"),
            full_scale_uv=_float(parser, "synth", "full_scale_uv"),
            fs_hz=_float(parser, "synth", "fs_hz"),
            seed=seed,
        )
    except ValueError as exc:
        raise ConfigError(f"[synth] {exc}")

    fs = synth.fs_hz
    filt = {
        "low_hz": _float(parser, "filter", "low_hz"),
        "high_hz": _float(parser, "filter", "high_hz"),
        "order": _int(parser, "filter", "order"),
        "frac_bits": _int(parser, "filter", "frac_bits"),
        "decay_samples": _int(parser, "filter", "decay_samples"),
    }
    if not (0.0 < filt["low_hz"] < filt["high_hz"] < fs / 2.0):
        raise ConfigError("[filter] band edges must satisfy "
                          "0 < low_hz < high_hz < fs/2")
    if filt["order"] < 2 or filt["order"] % 2:
        raise ConfigError("[filter] order must be even and >= 2")
    if filt["decay_samples"] < 1:
        raise ConfigError("[filter] decay_samples must be >= 1")

    hidden = _num_list(parser, "mlp", "hidden", int)
    consensus = parser.get("mlp", "consensus")
    if consensus not in ("mean", "majority", "unanimous", "none"):
        raise ConfigError(f"[mlp] consensus={consensus!r} is not one of "
                          f"mean/majority/unanimous/none")
    mlp = {
        "window_len": _int(parser, "mlp", "window_len"),
        "hidden": hidden,
        "consensus": consensus,
    }
    if mlp["window_len"] < 1:
        raise ConfigError("[mlp] window_len must be >= 1")
    if any(h < 1 for h in hidden):
        raise ConfigError("[mlp] hidden sizes must be >= 1")

    try:
        training = TrainConfig(
            learning_rate=_float(parser, "training", "learning_rate"),
            epochs=_int(parser, "training", "epochs"),
            batch_size=_int(parser, "training", "batch_size"),
            seed=seed,
            neg_pos_ratio=_float(parser, "training", "neg_pos_ratio"),
            train_fraction=_float(parser, "training", "train_fraction"),
            momentum=_float(parser, "training", "momentum"),
        )
    except ValueError as exc:
        raise ConfigError(f"[training] {exc}")

    evaluation = {
        "tpr_operating": _float(parser, "evaluation", "tpr_operating"),
        "tpr_matched": _float(parser, "evaluation", "tpr_matched"),
        "freqs_hz": _num_list(parser, "evaluation", "freqs_hz"),
        "amps_uv": _num_list(parser, "evaluation", "amps_uv"),
        "tone_s": _float(parser, "evaluation", "tone_s"),
        "repeats": _int(parser, "evaluation", "repeats"),
        "noise_rms_uv": _float(parser, "evaluation", "noise_rms_uv"),
    }
    for key in ("tpr_operating", "tpr_matched"):
        if not (0.0 < evaluation[key] <= 1.0):
            raise ConfigError(f"[evaluation] {key} must be in (0, 1]")
    if any(f >= fs / 2.0 for f in evaluation["freqs_hz"]):
        raise ConfigError("[evaluation] freqs_hz must stay below Nyquist")
    if evaluation["repeats"] < 1:
        raise ConfigError("[evaluation] repeats must be >= 1")

    sweep = {
        "window_lens": _num_list(parser, "sweep", "window_lens", int),
        "hidden_sizes": _num_list(parser, "sweep", "hidden_sizes", int),
        "epochs": _int(parser, "sweep", "epochs"),
    }
    if sweep["epochs"] < 1:
        raise ConfigError("[sweep] epochs must be >= 1")

    paths = {
        "recording": parser.get("paths", "recording").strip(),
        "model": parser.get("paths", "model").strip(),
    }

    buf = io.StringIO()
    parser.write(buf)
    return ExperimentConfig(
        seed=seed, out=parser.get("run", "out"), synth=synth, filter=filt,
        mlp=mlp, training=training, evaluation=evaluation, sweep=sweep,
        paths=paths, resolved_text=buf.getvalue(),
    )
