"""Figure rendering for report outputs."""

from __future__ import annotations

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import numpy as np

from . import chords


def plot_hazard_trace(trace, flags, path, frame_rate: float = 10.0) -> None:
    """Change-probability trace with true chord changes as dashed lines."""
    fig, ax = plt.subplots(figsize=(10, 3))
    t = np.arange(len(trace)) / frame_rate
    for i, f in enumerate(flags):
        if f:
            ax.axvline(i / frame_rate, color='gray', linestyle='--', linewidth=0.7)
    ax.plot(t, trace, color='C0')
    ax.set_xlabel('time (s)')
    ax.set_ylabel('P(change)')
    ax.set_ylim(-0.02, 1.02)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_embedding(coords, path) -> None:
    """2-D chord embedding scatter: major orange upper-case, minor blue
    lower-case, no-chord gray."""
    fig, ax = plt.subplots(figsize=(5, 5))
    for cls in range(chords.N_CLASSES):
        x, y = coords[cls]
        if cls == chords.NO_CHORD:
            color, text = 'gray', 'N'
        elif cls < 12:
            color, text = 'tab:orange', chords.PITCH_NAMES[cls]
        else:
            color, text = 'tab:blue', chords.PITCH_NAMES[cls - 12].lower()
        ax.scatter([x], [y], color=color, s=10)
        ax.annotate(text, (x, y), fontsize=8, color=color)
    ax.set_xlabel('PC 1')
    ax.set_ylabel('PC 2')
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_score_report(report, path) -> None:
    """Per-song score bars with pooled corpus scores in the title."""
    songs = [row['song'] for row in report.per_song]
    fig, ax = plt.subplots(figsize=(max(6, 0.5 * len(songs)), 3.5))
    x = np.arange(len(songs))
    width = 0.27
    for off, key in zip((-width, 0, width), ('root', 'majmin', 'segmentation')):
        ax.bar(x + off, [row[key] for row in report.per_song], width, label=key)
    ax.set_xticks(x)
    ax.set_xticklabels(songs, rotation=90, fontsize=7)
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=8)
    ax.set_title(f"root {report.root:.4f} / majmin {report.majmin:.4f} "
                 f"/ seg {report.segmentation:.4f}", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_loss_curve(curve, path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.plot(curve)
    ax.set_xlabel('epoch')
    ax.set_ylabel('loss')
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
