"""Figure rendering for the report paths (Agg backend, files only)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def ablation_figure(rows: list[dict], path) -> None:
    names = [r["model"] for r in rows]
    f1 = [r["f1_mean"] for r in rows]
    oov = [r["oov_recall_mean"] for r in rows]
    x = np.arange(len(names))
    width = 0.38
    fig, ax = plt.subplots(figsize=(max(4.0, 1.6 * len(names)), 3.2))
    ax.bar(x - width / 2, f1, width, label="F1")
    ax.bar(x + width / 2, oov, width, label="OOV recall")
    ax.set_xticks(x)
    ax.set_xticklabels(names, rotation=20, ha="right")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("score")
    ax.legend(frameon=False)
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def sweep_figure(rows: list[dict], path) -> None:
    fractions = [r["fraction"] for r in rows]
    oov = [r["oov_recall_mean"] for r in rows]
    f1 = [r["f1_mean"] for r in rows]
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    ax.plot(fractions, oov, "o-", label="OOV recall")
    ax.plot(fractions, f1, "s--", label="F1")
    ax.set_xlabel("n-gram vocabulary fraction")
    ax.set_ylabel("score")
    ax.set_ylim(0, 1.05)
    ax.legend(frameon=False)
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def training_curves(records: list[dict], path) -> None:
    epochs = [r["epoch"] for r in records]
    loss = [r["train_loss"] for r in records]
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    ax.plot(epochs, loss, "-", color="tab:red", label="train loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean NLL")
    if any("dev_f1" in r for r in records):
        ax2 = ax.twinx()
        ax2.plot(epochs, [r.get("dev_f1") for r in records], "-", color="tab:blue",
                 label="dev F1")
        ax2.set_ylabel("dev F1")
        ax2.set_ylim(0, 1.05)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
