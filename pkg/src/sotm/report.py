"""Metric-curve figure rendered next to the metrics CSV.

Uses a figure object directly (no pyplot, no global backend state) and pins
the SVG hash salt with no date metadata, so repeated runs produce identical
bytes.
"""

from __future__ import annotations

import io

import matplotlib
from matplotlib.figure import Figure

from .quality import QualityReport

_HASHSALT = "sotm"

# Series colors: cyan/magenta/green for the per-slice errors, black for
# structural change.
_SERIES = (
    ("qe", "#00a2c7", lambda row: row.qe),
    ("te", "#c717a8", lambda row: row.te),
    ("kl", "#2e9e46", lambda row: row.kl),
)


def quality_curves_svg(report: QualityReport) -> bytes:
    """Line chart of qe, te, kl per slice plus sc from the second slice on."""
    rows = report.per_slice
    x = list(range(len(rows)))
    with matplotlib.rc_context({"svg.hashsalt": _HASHSALT}):
        fig = Figure(figsize=(8.0, 3.6), dpi=100)
        ax = fig.subplots()
        for label, color, pick in _SERIES:
            ax.plot(x, [pick(r) for r in rows], color=color, linewidth=1.4, label=label)
        sc_x = [t for t, r in enumerate(rows) if r.sc is not None]
        if sc_x:
            ax.plot(
                sc_x,
                [rows[t].sc for t in sc_x],
                color="#000000",
                linewidth=2.0,
                label="sc",
            )
        step = max(1, (len(rows) + 11) // 12)
        ticks = x[::step]
        ax.set_xticks(ticks)
        ax.set_xticklabels([str(rows[t].time_key) for t in ticks], rotation=50, fontsize=8)
        ax.set_ylabel("value")
        ax.legend(loc="upper left", fontsize=8, ncol=4, frameon=False)
        ax.margins(x=0.01)
        fig.tight_layout()
        buf = io.BytesIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
    return buf.getvalue()
