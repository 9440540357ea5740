"""Command-line front door.

Subcommands: gen | train | eval | sweep | freqmap | resources | compare.
Each run stages its artifacts in a temporary directory and renames them
into the output directory only on success, so a failed run never leaves
partial outputs behind. Every artifact embeds the resolved config and seed.
"""

import argparse
import os
import shutil
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

from . import reporting
from .config import ConfigError, load_experiment_config
from .evaluation import (WindowedNetClassifier, frequency_response_map,
                         resource_report)
from .nn import QuantizedMlp, load_model, quantize_model, save_model
from .filters import save_filter_design
from .pipeline import (acquire_recording, build_filter,
                       filter_operating_threshold, run_compare,
                       train_pipeline)
from .synth import save_recording
from .training import build_mlp, grid_search

OUT_ENV_VAR = "LFPDETECT_OUT"


class _Staged:
    """Write-to-temp, rename-on-success output directory."""

    def __init__(self, out_dir):
        self.out = Path(out_dir)

    def __enter__(self):
        self.out.parent.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=self.out.name + ".",
                                         dir=self.out.parent))
        return self.tmp

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            shutil.rmtree(self.tmp, ignore_errors=True)
            return False
        self.out.mkdir(parents=True, exist_ok=True)
        for item in sorted(self.tmp.iterdir()):
            target = self.out / item.name
            if target.is_dir():
                shutil.rmtree(target)
            elif target.exists():
                target.unlink()
            os.replace(item, target)
        self.tmp.rmdir()
        return False


def _write_resolved(cfg, tmp):
    (tmp / "config.resolved.ini").write_text(cfg.resolved_text)


def cmd_gen(cfg):
    recording = acquire_recording(cfg)
    with _Staged(cfg.out) as tmp:
        _write_resolved(cfg, tmp)
        save_recording(recording, tmp / "recording.rec")
        reporting.write_recording_preview(tmp / "recording_preview.png",
                                          recording)
    print(f"gen: {recording.samples.size} samples, "
          f"{len(recording.annotations)} events -> {cfg.out}")
    return 0


def cmd_train(cfg):
    recording = acquire_recording(cfg)
    _check_topology(cfg)
    result = train_pipeline(recording, cfg.mlp["window_len"],
                            cfg.mlp["hidden"], cfg.training)
    with _Staged(cfg.out) as tmp:
        _write_resolved(cfg, tmp)
        save_model(result.model, tmp / "mlp_float.json")
        save_model(result.qmodel, tmp / "mlp_quantized.json")
        reporting.write_loss_report(tmp / "loss_history.csv",
                                    tmp / "loss_history.png",
                                    result.history, cfg.meta())
    print(f"train: best val BCE {result.history.best_val_bce:.4f} at epoch "
          f"{result.history.best_epoch} -> {cfg.out}")
    return 0


def _check_topology(cfg):
    # Surface window/topology mismatches before any work starts.
    if cfg.paths["model"]:
        model = load_model(cfg.paths["model"])
        if model.input_len != cfg.mlp["window_len"]:
            raise ConfigError(
                f"[mlp] window_len={cfg.mlp['window_len']} does not match "
                f"model input_len={model.input_len} from {cfg.paths['model']}")
        return model
    return None


def cmd_eval(cfg, classifier_name):
    recording = acquire_recording(cfg)
    report = run_compare(cfg, recording)
    if classifier_name not in report.rocs:
        raise ConfigError(f"unknown classifier {classifier_name!r}; pick one "
                          f"of {sorted(report.rocs)}")
    with _Staged(cfg.out) as tmp:
        _write_resolved(cfg, tmp)
        meta = cfg.meta(classifier=classifier_name)
        reporting.write_roc_report(tmp / "roc.csv", tmp / "roc.png",
                                   {classifier_name:
                                    report.rocs[classifier_name]}, meta)
        if classifier_name in report.events:
            reporting.write_event_report(
                tmp / "events.csv", tmp / "events.png",
                {classifier_name: report.events[classifier_name]}, meta)
    print(f"eval[{classifier_name}]: AUC "
          f"{report.rocs[classifier_name].auc:.4f} -> {cfg.out}")
    return 0


def cmd_sweep(cfg):
    recording = acquire_recording(cfg)
    sweep_cfg = replace(cfg.training, epochs=cfg.sweep["epochs"])
    grid = grid_search(recording, cfg.sweep["window_lens"],
                       cfg.sweep["hidden_sizes"], sweep_cfg)
    with _Staged(cfg.out) as tmp:
        _write_resolved(cfg, tmp)
        reporting.write_surface_report(tmp / "loss_surface.csv",
                                       tmp / "loss_surface.png", grid,
                                       cfg.meta(epochs=cfg.sweep["epochs"]))
    bad = f", {len(grid.errors)} failed cells" if grid.errors else ""
    print(f"sweep: {grid.val_bce.size} cells{bad} -> {cfg.out}")
    return 0


def cmd_freqmap(cfg, classifier_name):
    recording = acquire_recording(cfg)
    ev = cfg.evaluation
    if classifier_name in ("filter", "filter_fixed"):
        design = build_filter(cfg)
        design.threshold = filter_operating_threshold(cfg, recording, design)
        classifier = design.fixed_classifier() \
            if classifier_name == "filter_fixed" else design.float_classifier()
    elif classifier_name in ("mlp", "mlp_consensus"):
        model = _check_topology(cfg)
        if model is None:
            model = train_pipeline(recording, cfg.mlp["window_len"],
                                   cfg.mlp["hidden"], cfg.training).model
        classifier = WindowedNetClassifier(
            model, consensus=(classifier_name == "mlp_consensus"))
    else:
        raise ConfigError(f"unknown classifier {classifier_name!r} for "
                          f"freqmap; pick filter/filter_fixed/mlp/"
                          f"mlp_consensus")
    fmap = frequency_response_map(
        classifier, ev["freqs_hz"], ev["amps_uv"], cfg.synth.fs_hz,
        cfg.synth.full_scale_uv, tone_s=ev["tone_s"], repeats=ev["repeats"],
        seed=cfg.seed, noise_rms_uv=ev["noise_rms_uv"])
    with _Staged(cfg.out) as tmp:
        _write_resolved(cfg, tmp)
        reporting.write_freqmap_report(
            tmp / "freq_amp_map.csv", tmp / "freq_amp_map.png", fmap,
            f"mean output: {classifier_name}",
            cfg.meta(classifier=classifier_name))
    print(f"freqmap[{classifier_name}]: {fmap.mean_output.shape} cells "
          f"-> {cfg.out}")
    return 0


def cmd_resources(cfg):
    design = build_filter(cfg)
    model = _check_topology(cfg)
    if model is None:
        topology = (cfg.mlp["window_len"], *cfg.mlp["hidden"], 1)
        model = build_mlp(topology, seed=cfg.seed)
    qmodel = model if isinstance(model, QuantizedMlp) else quantize_model(model)
    reports = {
        "filter": resource_report(design),
        "mlp_quantized": resource_report(qmodel),
    }
    with _Staged(cfg.out) as tmp:
        _write_resolved(cfg, tmp)
        save_filter_design(design, tmp / "filter_design.json")
        reporting.write_resource_report(tmp / "resources.csv", reports,
                                        cfg.meta())
    for name, rep in reports.items():
        print(f"resources[{name}]: {rep.macs_per_sample:g} MACs/sample, "
              f"{rep.param_count} params, {rep.storage_bytes} storage B, "
              f"{rep.state_bytes} state B")
    return 0


def cmd_compare(cfg):
    recording = acquire_recording(cfg)
    report = run_compare(cfg, recording)
    tr = report.train_result
    with _Staged(cfg.out) as tmp:
        _write_resolved(cfg, tmp)
        meta = cfg.meta(tpr_matched=report.tpr_matched)
        save_model(tr.model, tmp / "mlp_float.json")
        save_model(tr.qmodel, tmp / "mlp_quantized.json")
        save_filter_design(build_filter(cfg), tmp / "filter_design.json")
        reporting.write_loss_report(tmp / "loss_history.csv",
                                    tmp / "loss_history.png", tr.history,
                                    meta)
        reporting.write_roc_report(tmp / "roc.csv", tmp / "roc.png",
                                   report.rocs, meta)
        reporting.write_event_report(tmp / "events.csv", tmp / "events.png",
                                     report.events, meta)
        reporting.write_resource_report(tmp / "resources.csv",
                                        report.resources, meta)
        summary = _compare_summary(report)
        (tmp / "summary.txt").write_text(summary)
    print(summary, end="")
    print(f"compare -> {cfg.out}")
    return 0


def _compare_summary(report):
    lines = ["classifier,auc,matched_fpr,mean_latency_s,mean_overlap_pct,"
             "detected,missed"]
    for name, roc in sorted(report.rocs.items()):
        point = report.matched_points.get(name)
        ev = report.events.get(name)
        lines.append(",".join([
            name,
            f"{roc.auc:.6f}",
            f"{point[0]:.6f}" if point else "",
            f"{ev.mean_latency_s:.6f}" if ev and ev.mean_latency_s is not None
            else "",
            f"{ev.mean_overlap_pct:.3f}" if ev else "",
            str(ev.n_detected) if ev else "",
            str(ev.n_missed) if ev else "",
        ]))
    return "\n".join(lines) + "\n"


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lfpdetect",
        description="Train, evaluate, and compare seizure-state classifiers "
                    "on synthetic LFP recordings.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, needs_classifier in (("gen", False), ("train", False),
                                   ("eval", True), ("sweep", False),
                                   ("freqmap", True), ("resources", False),
                                   ("compare", False)):
        p = sub.add_parser(name)
        p.add_argument("--config", help="experiment config file (INI)")
        p.add_argument("--seed", type=int, help="override [run] seed")
        p.add_argument("--out", help=f"output directory (default from "
                                     f"config or ${OUT_ENV_VAR})")
        if needs_classifier:
            p.add_argument("--classifier", default="mlp_consensus",
                           help="filter | filter_fixed | mlp | mlp_consensus")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {}
    if args.seed is not None:
        overrides["run.seed"] = args.seed
    if args.out is not None:
        overrides["run.out"] = args.out
    elif OUT_ENV_VAR in os.environ:
        overrides["run.out"] = os.environ[OUT_ENV_VAR]
    try:
        cfg = load_experiment_config(args.config, overrides)
        if args.command == "gen":
            return cmd_gen(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "eval":
            return cmd_eval(cfg, args.classifier)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        if args.command == "freqmap":
            return cmd_freqmap(cfg, args.classifier)
        if args.command == "resources":
            return cmd_resources(cfg)
        if args.command == "compare":
            return cmd_compare(cfg)
        raise AssertionError("unreachable")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
