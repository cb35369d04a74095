"""Report rendering: image grids, loss curves and metric figures.

Every report path writes a matplotlib figure next to the delimited (CSV)
output so runs can be eyeballed without extra tooling.
"""

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from PIL import Image

from .data import denormalize


def save_png(tensor, path):
    """Write a single (1, C, H, W) tensor in [-1, 1] as a PNG file."""
    arr = denormalize(tensor)[0]
    if arr.shape[-1] == 1:
        arr = arr[..., 0]
    Image.fromarray(arr).save(path)


def save_grid(rows, col_titles, path, title=None):
    """Render a grid figure: one row per input, one column per variant.

    ``rows`` is a list of lists of (1, C, H, W) tensors in [-1, 1].
    """
    n_rows, n_cols = len(rows), len(rows[0])
    fig, axes = plt.subplots(
        n_rows, n_cols, figsize=(1.6 * n_cols, 1.6 * n_rows), squeeze=False
    )
    for r, row in enumerate(rows):
        for c, img in enumerate(row):
            ax = axes[r][c]
            ax.imshow(denormalize(img)[0])
            ax.set_xticks([])
            ax.set_yticks([])
            if r == 0:
                ax.set_title(col_titles[c], fontsize=8)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_loss_curves(log_path, out_path, keys=None):
    """Plot per-step loss components from a JSONL training log."""
    records = [json.loads(line) for line in Path(log_path).read_text().splitlines() if line]
    if not records:
        return
    skip = {"step", "epoch", "wall_time"}
    keys = keys or [k for k in records[0] if k not in skip]
    steps = [r["step"] for r in records]
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for key in keys:
        ax.plot(steps, [r.get(key, np.nan) for r in records], label=key, linewidth=1)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("symlog", linthresh=1e-3)
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def write_metrics(report, out_dir, stem="report"):
    """Write a metrics dict as JSON + CSV and render a bar figure."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / f"{stem}.json"
    json_path.write_text(json.dumps(report, indent=2))

    flat = {k: v for k, v in report.items() if isinstance(v, (int, float))}
    csv_path = out_dir / f"{stem}.csv"
    with open(csv_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["metric", "value"])
        for k, v in flat.items():
            writer.writerow([k, v])

    if flat:
        fig, ax = plt.subplots(figsize=(6, 3.5))
        names = list(flat)
        ax.bar(range(len(names)), [flat[n] for n in names], color="steelblue")
        ax.set_xticks(range(len(names)))
        ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
        ax.set_ylabel("value")
        fig.tight_layout()
        fig.savefig(out_dir / f"{stem}.png", dpi=120)
        plt.close(fig)
    return json_path
