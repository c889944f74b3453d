"""SVG figures and a markdown table from an analysis directory.

One figure per task, one panel per channel laid out like the headband
(frontal row on top, temporal rows below). Each panel shows the group mean of
both conditions with a +/-1 SD band across subjects; a black horizontal bar
(SVG group id ``sigbar``) marks the extent of every significant cluster on
that channel.
"""
from __future__ import annotations

import io as _io
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .core import EEGKitError  # noqa: E402
from .io import atomic_write_bytes, atomic_write_text  # noqa: E402
from .study import GroupData  # noqa: E402

__all__ = ["plot_group", "render_svg", "cmd_report", "markdown_table", "PANEL_LAYOUT"]

PANEL_LAYOUT = (("FP1", "FP2"), ("T7", "T8"), ("TP7", "TP8"))

_STYLE = {
    "svg.hashsalt": "eegkit",
    "svg.fonttype": "none",
    "font.size": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.linewidth": 0.6,
    "lines.linewidth": 1.2,
    "legend.frameon": False,
}

_LABELS = {
    "eyes": ("Eyes closed", "Eyes open", "Frequency (Hz)", "PSD (uV$^2$/Hz)"),
    "auditory": ("Deviant (900 Hz)", "Standard (600 Hz)", "Time (ms)", "Amplitude (uV)"),
    "visual": ("Deviant (face)", "Standard (object)", "Time (ms)", "Amplitude (uV)"),
}
_COLORS = ("#c0392b", "#2c3e50")


def _layout(channels):
    rows = [[c for c in row if c in channels] for row in PANEL_LAYOUT]
    rows = [r for r in rows if r]
    placed = {c for r in rows for c in r}
    rest = [c for c in channels if c not in placed]
    rows += [rest[i:i + 2] for i in range(0, len(rest), 2)]
    return rows


def plot_group(group: GroupData, task_summary: dict = None):
    """Figure with one panel per channel; returns the matplotlib Figure."""
    a_lab, b_lab, xlab, ylab = _LABELS[group.task]
    rows = _layout(group.channels)
    sig = [c for c in (task_summary or {}).get("clusters", []) if c["significant"]]
    with plt.rc_context(_STYLE):
        fig, axes = plt.subplots(len(rows), 2, figsize=(7.0, 2.0 * len(rows)), sharex=True,
                                 squeeze=False)
        x = group.points
        for r, row in enumerate(rows):
            for col in range(2):
                ax = axes[r][col]
                if col >= len(row):
                    ax.set_visible(False)
                    continue
                ch = row[col]
                ci = group.channels.index(ch)
                for data, lab, color in ((group.cond_a, a_lab, _COLORS[0]),
                                         (group.cond_b, b_lab, _COLORS[1])):
                    m = data[:, ci].mean(axis=0)
                    sd = data[:, ci].std(axis=0, ddof=1) if len(data) > 1 else np.zeros_like(m)
                    ax.fill_between(x, m - sd, m + sd, color=color, alpha=0.2, linewidth=0)
                    ax.plot(x, m, color=color, lw=1.6, label=lab)
                ax.set_title(ch, loc="left", fontweight="bold")
                ax.set_xlim(x[0], x[-1])
                if group.task != "eyes":
                    ax.axvline(0, color="0.6", lw=0.6, ls="--")
                    ax.axhline(0, color="0.6", lw=0.6)
                lo, hi = ax.get_ylim()
                ybar = lo + 0.04 * (hi - lo)
                for c in sig:
                    ext = c.get("channel_extent", {}).get(ch)
                    if ext:
                        bar, = ax.plot(ext, [ybar, ybar], color="black", lw=4, solid_capstyle="butt")
                        bar.set_gid(f"sigbar_{ch}_{c['id']}")
                if r == len(rows) - 1:
                    ax.set_xlabel(xlab)
                if col == 0:
                    ax.set_ylabel(ylab)
        handles, labels = axes[0][0].get_legend_handles_labels()
        fig.legend(handles, labels, loc="upper right", ncol=2)
        title = {"eyes": "Eyes closed vs open", "auditory": "Auditory oddball",
                 "visual": "Visual oddball"}[group.task]
        fig.suptitle(title, x=0.02, ha="left", fontweight="bold")
        fig.tight_layout(rect=(0, 0, 1, 0.95))
    return fig


def render_svg(fig) -> bytes:
    buf = _io.BytesIO()
    with plt.rc_context(_STYLE):
        fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()


def markdown_table(summary: dict) -> str:
    lines = ["# Study report", "",
             "| task | effect | planted | detected | sign | mass | p | extent | channels |",
             "|---|---|---|---|---|---|---|---|---|"]
    notes = []
    for task, t in summary["tasks"].items():
        head = f"| {task} | {t['effect']} | {t['planted']} | {t['detected']} "
        sig = [c for c in t["clusters"] if c["significant"]]
        for c in sig:
            lines.append(head + f"| {'+' if c['sign'] > 0 else '-'} | {c['mass']:.2f} "
                         f"| {c['p_value']:.4f} | {c['extent'][0]:g} to {c['extent'][1]:g} "
                         f"| {' '.join(c['channels'])} |")
        if not sig:
            best = f"{t['min_p']:.4f}" if t["clusters"] else "n/a"
            lines.append(head + f"| | | {best} | no significant cluster | |")
        notes.append(f"- {task}: {len(t['clusters']) - len(sig)} non-significant clusters not listed")
    lines += ["", *notes, ""]
    for task in summary["tasks"]:
        lines.append(f"![{task}]({task}.svg)")
    return "\n".join(lines) + "\n"


def cmd_report(analysis_dir, out):
    """Write <task>.svg for every task in summary.json plus report.md."""
    analysis_dir, out = Path(analysis_dir), Path(out)
    path = analysis_dir / "summary.json"
    if not path.exists():
        raise EEGKitError(f"missing analysis summary: {path}")
    summary = json.loads(path.read_text(encoding="utf-8"))
    written = []
    for task, t in summary["tasks"].items():
        gpath = analysis_dir / t["group_file"]
        if not gpath.exists():
            raise EEGKitError(f"missing group data for {task}: {gpath}")
        svg = render_svg(plot_group(GroupData.load(gpath), t))
        atomic_write_bytes(out / f"{task}.svg", svg)
        written.append(out / f"{task}.svg")
    atomic_write_text(out / "report.md", markdown_table(summary))
    written.append(out / "report.md")
    return written
