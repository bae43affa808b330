"""Diagnostic figures rendered to files by the reporting subcommands.

Stdout stays machine-parseable; anything visual lands next to it as a
PNG. Uses the Agg backend so rendering works headless.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .gspo_kernel import GspoResult  # noqa: E402
from .traj_slicer import Slice, TokenCounter  # noqa: E402

_GRID_STYLE = {"alpha": 0.35, "linewidth": 0.6}


def save_gradient_sweep_figure(
    sweeps: dict[str, list[tuple[float, float]]], path: Path | str
) -> Path:
    """Log-log finite-difference error vs perturbation size, one line
    per group, with the ideal second-order slope for reference."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    reference_drawn = False
    for label, sweep in sweeps.items():
        deltas = [d for d, _ in sweep]
        errors = [max(e, 1e-18) for _, e in sweep]
        ax.loglog(deltas, errors, marker="o", label=label)
        if not reference_drawn and errors[0] > 0:
            anchor_d, anchor_e = deltas[0], errors[0]
            ref = [anchor_e * (d / anchor_d) ** 2 for d in deltas]
            ax.loglog(deltas, ref, linestyle="--", color="gray", label="O(delta^2)")
            reference_drawn = True
    ax.set_xlabel("perturbation delta")
    ax.set_ylabel("max relative gradient error")
    ax.set_title("Finite-difference convergence")
    ax.grid(True, which="both", **_GRID_STYLE)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_group_diagnostics_figure(
    results: list[GspoResult], clip: float, path: Path | str
) -> Path:
    """Importance ratio vs advantage scatter with the clip band marked."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for kind, marker, color in (("clipped", "x", "tab:red"), ("active", "o", "tab:blue")):
        xs, ys = [], []
        for result in results:
            for diag in result.per_rollout:
                if (kind == "clipped") == diag.clipped:
                    xs.append(diag.ratio)
                    ys.append(diag.advantage)
        if xs:
            ax.scatter(xs, ys, marker=marker, color=color, s=28, label=kind, alpha=0.8)
    for bound in (1.0 - clip, 1.0 + clip):
        ax.axvline(bound, color="gray", linestyle="--", linewidth=0.8)
    ax.axhline(0.0, color="black", linewidth=0.6)
    ax.set_xlabel("sequence importance ratio")
    ax.set_ylabel("group advantage")
    ax.set_title("Clipped-surrogate diagnostics")
    ax.grid(True, **_GRID_STYLE)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_slice_budget_figure(
    slices: list[Slice], counter: TokenCounter, budget: int, path: Path | str
) -> Path:
    """Token occupancy per slice against the context budget."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    positions = list(range(len(slices)))
    tokens = [sum(counter(m.turn) for m in s.messages) for s in slices]
    colors = ["tab:red" if s.is_dummy else "tab:green" for s in slices]
    ax.bar(positions, tokens, color=colors)
    ax.axhline(budget, color="black", linestyle="--", linewidth=0.9, label="budget")
    ax.set_xticks(positions)
    ax.set_xticklabels([str(s.collapsed_length) for s in slices], fontsize=8)
    ax.set_xlabel("collapsed length (turn-pairs)")
    ax.set_ylabel("counted tokens")
    ax.set_title("Slice context occupancy")
    ax.grid(True, axis="y", **_GRID_STYLE)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
