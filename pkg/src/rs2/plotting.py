"""Static SVG figures for sweep reports."""

from __future__ import annotations

import math
from dataclasses import replace

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from rs2.optim import LrSchedule, lr_at  # noqa: E402

# fixed hash salt keeps the SVG ids stable between runs
plt.rcParams.update({"svg.hashsalt": "rs2", "svg.fonttype": "none", "figure.figsize": (6.0, 3.8)})


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def accuracy_vs_time(records: dict, path) -> None:
    fig, ax = plt.subplots()
    for name, rec in sorted(records.items()):
        xs = [e.cum_time_ms / 1e3 for e in rec.entries]
        ys = [100 * e.test_acc for e in rec.entries]
        ax.plot(xs, ys, marker=".", lw=1, label=name)
    ax.set_xlabel("selection + training time (s)")
    ax.set_ylabel("test accuracy (%)")
    if len(records) <= 12:
        ax.legend(fontsize=7)
    _save(fig, path)


def lr_schedules(cfg, path, n_train: int) -> None:
    """Full-data cosine vs the r-scaled and naively truncated variants."""
    per_round = math.ceil(n_train / cfg.batch_size)
    full_steps = per_round * cfg.rounds
    base = LrSchedule("cosine_full", cfg.lr, full_steps, 1.0, cfg.lr_min)
    r = cfg.r
    cut = max(1, int(math.floor(r * full_steps + 1e-9)))
    scaled = replace(base, kind="cosine_r_scaled", r=r, scaled_steps=cut)
    fig, ax = plt.subplots()
    steps = range(1, full_steps + 1)
    ax.plot(list(steps), [lr_at(base, s) for s in steps], label="full data")
    ax.plot(list(range(1, cut + 1)), [lr_at(scaled, s) for s in range(1, cut + 1)], label=f"r-scaled (r={r:g})")
    ax.axvline(cut, color="grey", ls="--", lw=1, label="naive early stop")
    ax.set_xlabel("step")
    ax.set_ylabel("learning rate")
    ax.legend(fontsize=8)
    _save(fig, path)
