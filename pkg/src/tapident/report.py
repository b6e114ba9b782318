"""Figure rendering for the tap-experiment report path.

Charts are written next to the delimited output so a report can cite
them directly; everything renders headless (Agg).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402 - backend must be set first

from .tapmodel import (ALLOWED_INSERTION_LOSS_DB, BudgetResult, CableCategory,
                       LossBudget, budget_check)

MEASURED_TAP_LOSS_DB = 1.46  # oscilloscope figure for the attached probe


@dataclass(frozen=True)
class ExperimentReport:
    sent: int
    received: tuple[int, ...]
    loss_probability: float
    base_seed: int

    @property
    def mean_received(self) -> float:
        return sum(self.received) / len(self.received) if self.received else 0.0


def render_trials_figure(report: ExperimentReport, out_path: Path) -> Path:
    trials = range(1, len(report.received) + 1)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(trials, report.received, "o-", color="#2a6f97", label="replies received")
    ax.axhline(report.sent, color="#444444", linewidth=0.8, linestyle="--",
               label=f"sent ({report.sent})")
    if report.received:
        ax.axhline(report.mean_received, color="#c44536", linewidth=0.8,
                   label=f"mean ({report.mean_received:.1f})")
    ax.set_xlabel("trial")
    ax.set_ylabel("echo replies received")
    ax.set_title(f"Tapped-link echo trials (loss {report.loss_probability:g}/packet, "
                 f"seed {report.base_seed})")
    ax.legend(loc="lower right", fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def render_budget_figure(out_path: Path, tap_loss_db: float = MEASURED_TAP_LOSS_DB,
                         max_length_m: float = 150.0) -> Path:
    lengths = [max_length_m * i / 200 for i in range(1, 201)]
    fig, ax = plt.subplots(figsize=(7, 4))
    for category, color in ((CableCategory.CAT5E, "#2a6f97"), (CableCategory.CAT3, "#c44536")):
        margins = [
            budget_check(LossBudget(category, length, tap_loss_db)).margin_db
            for length in lengths
        ]
        ax.plot(lengths, margins, color=color,
                label=f"{category.value} ({category.loss_db_per_100m} dB/100m)")
    ax.axhline(0.0, color="#444444", linewidth=0.8)
    ax.set_xlabel("cable length (m)")
    ax.set_ylabel("remaining insertion-loss margin (dB)")
    ax.set_title(f"Budget {ALLOWED_INSERTION_LOSS_DB} dB with tap loss {tap_loss_db} dB")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def render_experiment_figures(report: ExperimentReport, out_dir: Path,
                              tap_loss_db: float = MEASURED_TAP_LOSS_DB) -> list[Path]:
    """Render the experiment charts into ``out_dir``; returns written paths."""
    out_dir.mkdir(parents=True, exist_ok=True)
    return [
        render_trials_figure(report, out_dir / "tap_experiment_trials.png"),
        render_budget_figure(out_dir / "insertion_loss_budget.png", tap_loss_db=tap_loss_db),
    ]
