"""Render training curves and episode traces from the emitted CSVs.

Plotting is a separate pass over files on disk so every numeric
artifact exists and is testable without any rendering capability.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluate import read_trace_csv


def read_csv_columns(path) -> dict:
    """All columns of a numeric CSV as float arrays (nan for blanks)."""
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise ValueError(f"{path} has no header row")
        columns = {name: [] for name in reader.fieldnames}
        for row in reader:
            for name in reader.fieldnames:
                value = row[name]
                try:
                    columns[name].append(float(value))
                except (TypeError, ValueError):
                    columns[name].append(np.nan)
    return {name: np.array(vals) for name, vals in columns.items()}


def plot_training_log(csv_path, out_path=None) -> Path:
    """Reward-per-step curves per scheduler setup plus loss traces."""
    csv_path = Path(csv_path)
    out_path = Path(out_path) if out_path else csv_path.with_suffix(".png")
    cols = read_csv_columns(csv_path)
    if "step" not in cols:
        raise ValueError(f"{csv_path} is not a training log (no 'step' column)")
    steps = cols["step"]

    fig, (ax_rew, ax_loss) = plt.subplots(2, 1, figsize=(8, 7), sharex=True)
    for name in sorted(c for c in cols if c.startswith("ep_rew_")):
        mask = np.isfinite(cols[name])
        ax_rew.plot(steps[mask], cols[name][mask], label=name[len("ep_rew_"):])
    ax_rew.set_ylabel("episode reward / step")
    ax_rew.legend(loc="best", fontsize=8)
    ax_rew.grid(alpha=0.3)

    for name in ("critic_1_loss", "critic_2_loss", "actor_loss"):
        if name in cols:
            mask = np.isfinite(cols[name])
            ax_loss.plot(steps[mask], cols[name][mask], label=name)
    ax_loss.set_xlabel("environment steps")
    ax_loss.set_ylabel("loss")
    ax_loss.legend(loc="best", fontsize=8)
    ax_loss.grid(alpha=0.3)

    fig.suptitle(csv_path.stem)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def plot_trace(csv_path, out_path=None, x_ideal: float = 1.5) -> Path:
    """Concentration, doses and reward over one evaluated trajectory."""
    csv_path = Path(csv_path)
    out_path = Path(out_path) if out_path else csv_path.with_suffix(".png")
    rows = read_trace_csv(csv_path)
    if not rows:
        raise ValueError(f"{csv_path} contains no trace rows")
    t = np.arange(len(rows))
    c_p = np.array([r["c_p"] for r in rows])
    q_jsf = np.array([r["q_jsf"] for r in rows])
    q_pax = np.array([r["q_pax"] for r in rows])
    reward = np.array([r["reward"] for r in rows])

    fig, (ax_c, ax_q, ax_r) = plt.subplots(3, 1, figsize=(9, 8), sharex=True)
    ax_c.plot(t, c_p, color="tab:blue", lw=0.9)
    ax_c.axhline(x_ideal, color="tab:red", ls="--", lw=1.0, label="limit")
    ax_c.set_ylabel("effluent P (mg/L)")
    ax_c.legend(loc="best", fontsize=8)
    ax_c.grid(alpha=0.3)

    ax_q.plot(t, q_jsf, label="q_jsf", lw=0.9)
    ax_q.plot(t, q_pax, label="q_pax", lw=0.9)
    ax_q.set_ylabel("dose flow (L/h)")
    ax_q.legend(loc="best", fontsize=8)
    ax_q.grid(alpha=0.3)

    ax_r.plot(t, np.cumsum(reward), color="tab:green", lw=0.9)
    ax_r.set_xlabel("step")
    ax_r.set_ylabel("cumulative reward")
    ax_r.grid(alpha=0.3)

    fig.suptitle(csv_path.stem)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
