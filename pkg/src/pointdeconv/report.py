"""Metric report serialization and figure rendering."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import MetricReport  # noqa: E402


def write_report(path, report: MetricReport):
    """Flat key = value document; keys match the MetricReport fields."""
    with open(path, "w") as fh:
        for key, value in report.display().items():
            fh.write(f"{key} = {float(value)!r}\n")


def read_report(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition("=")
        out[key.strip()] = float(value)
    return out


def render_metric_figure(fig_path, report: MetricReport):
    values = report.display()
    keys = [k for k in ("jsd", "mmd_cd", "mmd_emd", "cov_cd", "cov_emd",
                        "nna_cd", "nna_emd") if np.isfinite(values[k])]
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.bar(range(len(keys)), [values[k] for k in keys], color="#4878b0")
    ax.set_xticks(range(len(keys)))
    ax.set_xticklabels(keys, rotation=30, ha="right")
    ax.set_ylabel("raw value")
    ax.set_title("generative metrics")
    fig.tight_layout()
    fig.savefig(fig_path, dpi=120)
    plt.close(fig)


def render_cloud_preview(fig_path, gen_clouds, ref_clouds, max_clouds=3):
    """Side-by-side 2-D projections of a few generated vs reference clouds."""
    n = min(max_clouds, len(gen_clouds), len(ref_clouds))
    fig, axes = plt.subplots(2, n, figsize=(3 * n, 6), squeeze=False)
    for j in range(n):
        for row, (cloud, tag) in enumerate(((gen_clouds[j], "generated"),
                                            (ref_clouds[j], "reference"))):
            ax = axes[row][j]
            cloud = np.asarray(cloud)
            ax.scatter(cloud[:, 0], cloud[:, 1], s=3, alpha=0.6)
            ax.set_xlim(-1.1, 1.1)
            ax.set_ylim(-1.1, 1.1)
            ax.set_aspect("equal")
            ax.set_title(f"{tag} {j}", fontsize=9)
    fig.tight_layout()
    fig.savefig(fig_path, dpi=120)
    plt.close(fig)


def parse_loss_log(log_path):
    """Rows of (iter, stage, loss_d, loss_g, spl) from the append-only log."""
    rows = []
    for line in Path(log_path).read_text().splitlines():
        if not line.strip():
            continue
        it, stage, ld, lg, sp = (t.strip() for t in line.split(","))
        rows.append((int(it), int(stage), float(ld), float(lg), float(sp)))
    return rows


def render_loss_curves(fig_path, log_path):
    rows = parse_loss_log(log_path)
    if not rows:
        return
    stages = sorted({r[1] for r in rows})
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.5))
    for stage in stages:
        sub = [r for r in rows if r[1] == stage]
        its = [r[0] for r in sub]
        axes[0].plot(its, [r[2] for r in sub], label=f"stage {stage}")
        axes[1].plot(its, [r[3] for r in sub], label=f"stage {stage}")
        axes[2].plot(its, [r[4] for r in sub], label=f"stage {stage}")
    for ax, title in zip(axes, ("discriminator loss", "generator loss",
                                "shape regularizer")):
        ax.set_title(title)
        ax.set_xlabel("iteration")
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(fig_path, dpi=120)
    plt.close(fig)
