"""Delimited-text report writers and their matplotlib renderings.

Every table starts with '# key=value' comment lines embedding the resolved
run metadata (seed included) so any artifact can be reproduced from its own
header. Figures are rendered to PNG next to each table.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_PNG_METADATA = {"Software": "lfpdetect"}


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_table(path, columns, rows, meta=None):
    """CSV with embedded metadata comments; floats use shortest repr so
    reruns are byte-identical."""
    lines = [f"# {k}={_fmt(v)}" for k, v in (meta or {}).items()]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_table(path):
    """Inverse of write_table: (meta, columns, rows-as-strings)."""
    meta, columns, rows = {}, None, []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("# "):
                key, _, value = line[2:].partition("=")
                meta[key] = value
            elif columns is None:
                columns = line.split(",")
            else:
                rows.append(line.split(","))
    return meta, columns, rows


def _save(fig, path):
    fig.savefig(path, dpi=120, metadata=_PNG_METADATA)
    plt.close(fig)


def write_roc_report(path_csv, path_png, curves, meta=None):
    """`curves` maps a display name to a RocCurve; one CSV holds them all."""
    rows = []
    for name, curve in curves.items():
        for f, t, thr in zip(curve.fpr, curve.tpr, curve.thresholds):
            rows.append((name, f, t, thr))
    write_table(path_csv, ("classifier", "fpr", "tpr", "threshold"), rows,
                meta)

    fig, ax = plt.subplots(figsize=(5.0, 4.4))
    for name, curve in curves.items():
        ax.plot(curve.fpr, curve.tpr, label=f"{name} (AUC={curve.auc:.3f})")
    ax.plot([0, 1], [0, 1], ls=":", c="gray", lw=0.8)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_title("ROC")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    _save(fig, path_png)


def write_event_report(path_csv, path_png, metrics_by_name, meta=None):
    """Per-event latency/overlap table plus paired histograms."""
    rows = []
    for name, metrics in metrics_by_name.items():
        for k, (lat, ovl) in enumerate(zip(metrics.latencies_s,
                                           metrics.overlaps_pct)):
            rows.append((name, k, "" if lat is None else lat, ovl))
    write_table(path_csv, ("classifier", "event", "latency_s", "overlap_pct"),
                rows, meta)

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.6, 3.6))
    for name, metrics in metrics_by_name.items():
        hits = [v for v in metrics.latencies_s if v is not None]
        if hits:
            ax1.hist(hits, bins=10, alpha=0.55, label=name)
        ax2.hist(metrics.overlaps_pct, bins=10, range=(0, 100), alpha=0.55,
                 label=name)
    ax1.set_xlabel("detection latency (s)")
    ax1.set_ylabel("events")
    ax2.set_xlabel("overlap with event (%)")
    for ax in (ax1, ax2):
        ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path_png)


def write_surface_report(path_csv, path_png, grid, meta=None):
    """Grid-search loss surface as a long table and a heat map."""
    rows = []
    for i, w in enumerate(grid.window_lens):
        for j, h in enumerate(grid.hidden_sizes):
            err = grid.errors.get((i, j), "")
            rows.append((w, h, grid.val_bce[i, j], err))
    write_table(path_csv, ("window_len", "hidden_size", "val_bce", "error"),
                rows, meta)

    fig, ax = plt.subplots(figsize=(5.4, 4.4))
    im = ax.imshow(grid.val_bce, origin="lower", aspect="auto",
                   cmap="viridis")
    ax.set_xticks(range(len(grid.hidden_sizes)),
                  [str(h) for h in grid.hidden_sizes])
    ax.set_yticks(range(len(grid.window_lens)),
                  [str(w) for w in grid.window_lens])
    ax.set_xlabel("hidden units")
    ax.set_ylabel("input window (samples)")
    ax.set_title("validation BCE")
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    _save(fig, path_png)


def write_freqmap_report(path_csv, path_png, fmap, title, meta=None):
    rows = []
    for i, f in enumerate(fmap.freqs_hz):
        for j, a in enumerate(fmap.amps_uv):
            rows.append((f, a, fmap.mean_output[i, j]))
    write_table(path_csv, ("freq_hz", "amp_uv", "mean_output"), rows, meta)

    fig, ax = plt.subplots(figsize=(5.4, 4.4))
    im = ax.imshow(fmap.mean_output.T, origin="lower", aspect="auto",
                   cmap="magma", vmin=0.0, vmax=1.0)
    ax.set_xticks(range(len(fmap.freqs_hz)),
                  [f"{f:g}" for f in fmap.freqs_hz], rotation=90, fontsize=7)
    ax.set_yticks(range(len(fmap.amps_uv)),
                  [f"{a:g}" for a in fmap.amps_uv], fontsize=7)
    ax.set_xlabel("tone frequency (Hz)")
    ax.set_ylabel("tone amplitude (uV)")
    ax.set_title(title)
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    _save(fig, path_png)


def write_loss_report(path_csv, path_png, history, meta=None):
    rows = [(e, tr, va) for e, (tr, va) in
            enumerate(zip(history.train_bce, history.val_bce))]
    write_table(path_csv, ("epoch", "train_bce", "val_bce"), rows, meta)

    fig, ax = plt.subplots(figsize=(5.4, 3.8))
    ax.plot(history.train_bce, label="train")
    ax.plot(history.val_bce, label="validation")
    ax.axvline(history.best_epoch, ls=":", c="gray", lw=0.8)
    ax.set_xlabel("epoch")
    ax.set_ylabel("binary cross-entropy")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path_png)


def write_resource_report(path_csv, reports_by_name, meta=None):
    rows = [(name, r.macs_per_sample, r.storage_bytes, r.state_bytes,
             r.param_count)
            for name, r in reports_by_name.items()]
    write_table(path_csv, ("classifier", "macs_per_sample", "storage_bytes",
                           "state_bytes", "param_count"), rows, meta)


def write_recording_preview(path_png, recording, seconds=10.0, meta=None):
    n = min(int(seconds * recording.fs_hz), recording.samples.size)
    t = np.arange(n) / recording.fs_hz
    fig, ax = plt.subplots(figsize=(8.0, 3.0))
    ax.plot(t, recording.samples[:n], lw=0.5)
    for ev in recording.annotations:
        if ev.start_s < seconds:
            ax.axvspan(ev.start_s, min(ev.end_s, seconds), color="tab:red",
                       alpha=0.15)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("amplitude (uV)")
    fig.tight_layout()
    _save(fig, path_png)
