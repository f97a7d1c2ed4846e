"""Optional figure rendering for the report paths.

Every renderer takes already-computed results and writes one PNG next to the
delimited output; nothing here feeds back into any computation.  Rendering
is opt-in from the CLI (--plots).
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "render_classification",
    "render_solution",
    "render_survival",
    "render_rungs",
]


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def render_classification(classification, path) -> str:
    """Margin bars per condition, grouped by criterion."""
    names, margins, colors = [], [], []
    for cname in sorted(classification.reports):
        rep = classification.reports[cname]
        for cond in rep.conditions:
            names.append(f"{cname}\n{cond.name}")
            m = cond.margin
            margins.append(0.0 if not np.isfinite(m) else m)
            colors.append("tab:green" if cond.holds else "tab:red")
    fig, ax = plt.subplots(figsize=(max(6, 0.8 * len(names)), 4.5))
    ax.bar(range(len(names)), margins, color=colors)
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=60, ha="right", fontsize=7)
    ax.axhline(0.0, color="k", lw=0.8)
    ax.set_ylabel("worst margin")
    ax.set_yscale("symlog", linthresh=1e-6)
    ax.set_title(f"certificate margins: {classification.model}")
    return _save(fig, path)


def render_solution(states, columns, path, title="hitting-time functionals") -> str:
    """Curves of the solved functionals over the grid."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for label, vals in columns.items():
        vals = np.asarray(vals, dtype=float)
        finite = np.isfinite(vals)
        ax.plot(np.asarray(states)[finite], vals[finite], label=label, lw=1.2)
    ax.set_xlabel("state")
    ax.set_ylabel("value")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    ax.set_title(title)
    return _save(fig, path)


def render_survival(stats, path) -> str:
    """Log-log survival of the return time with the fitted tail slope."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    steps = np.asarray(stats.survival_steps, dtype=float)
    surv = np.asarray(stats.survival, dtype=float)
    pos = surv > 0
    ax.loglog(steps[pos], surv[pos], "o-", ms=3, lw=1)
    if stats.tail_exponent is not None:
        anchor = np.argmax(pos[::-1])
        xs = steps[pos][-4:]
        ref = surv[pos][-1] * (xs / xs[-1]) ** stats.tail_exponent
        ax.loglog(xs, ref, "--", lw=1,
                  label=f"tail slope {stats.tail_exponent:.2f}")
        ax.legend(fontsize=8)
    ax.set_xlabel("steps n")
    ax.set_ylabel("P(return time > n)")
    ax.set_title(f"return-time survival (paths={stats.n_paths})")
    return _save(fig, path)


def render_rungs(cutoffs, sups, path) -> str:
    """Per-window sup of the expected return time along the ladder."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.loglog(cutoffs, sups, "o-", ms=4, lw=1.2)
    ax.set_xlabel("window cutoff")
    ax.set_ylabel("sup of E[return] off target")
    ax.set_title("augmented-window ladder")
    return _save(fig, path)
