"""Figure rendering for the command-line reports.

All charts are written as SVG through matplotlib's object-oriented API (no
pyplot, no global figure state).  Output bytes are deterministic: the SVG
id-hash salt is pinned and no creation date is embedded, so re-running a
command with the same inputs reproduces the files exactly.
"""
from __future__ import annotations

import matplotlib
from matplotlib.figure import Figure
import numpy as np

_RC = {
    "svg.hashsalt": "fregmice",
    "figure.dpi": 100,
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.grid": True,
    "grid.alpha": 0.25,
    "legend.framealpha": 0.9,
}

# one colour per label, assigned in first-seen order
_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd",
            "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


def _save(fig: Figure, path) -> None:
    fig.savefig(str(path), format="svg", metadata={"Date": None})


def band_chart(path, term: str, t, estimate, lo, hi) -> None:
    """One coefficient function with its pointwise confidence band."""
    t = np.asarray(t, dtype=float)
    with matplotlib.rc_context(_RC):
        fig = Figure(figsize=(5.0, 3.2))
        ax = fig.subplots()
        ax.fill_between(t, np.asarray(lo, float), np.asarray(hi, float),
                        color=_PALETTE[0], alpha=0.25, linewidth=0)
        ax.plot(t, np.asarray(estimate, float), color=_PALETTE[0], lw=1.6)
        ax.axhline(0.0, color="black", lw=0.6, alpha=0.5)
        ax.set_xlabel("t")
        ax.set_ylabel("coefficient")
        ax.set_title(term)
        fig.tight_layout()
        _save(fig, path)


def series_chart(path, title: str, x, series: dict[str, np.ndarray],
                 xlabel: str = "t", ylabel: str = "value") -> None:
    """Plain multi-line chart: one labelled line per entry of `series`."""
    x = np.asarray(x, dtype=float)
    with matplotlib.rc_context(_RC):
        fig = Figure(figsize=(5.0, 3.2))
        ax = fig.subplots()
        for i, (label, y) in enumerate(series.items()):
            ax.plot(x, np.asarray(y, float), lw=1.3,
                    color=_PALETTE[i % len(_PALETTE)], label=label)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        if series:
            ax.legend(loc="best", fontsize=8)
        fig.tight_layout()
        _save(fig, path)


def panel_chart(path, suptitle: str, x,
                panels: list[tuple[str, dict[str, np.ndarray]]],
                xlabel: str = "t", ylabel: str = "value",
                hline: float | None = None) -> None:
    """Row of subplots sharing the x axis, one line per label inside each.

    Used for the simulation metrics: a panel per coefficient function and a
    line per method.  Labels are coloured consistently across panels.
    """
    x = np.asarray(x, dtype=float)
    labels: list[str] = []
    for _, series in panels:
        for label in series:
            if label not in labels:
                labels.append(label)
    colors = {lb: _PALETTE[i % len(_PALETTE)] for i, lb in enumerate(labels)}
    n = max(len(panels), 1)
    with matplotlib.rc_context(_RC):
        fig = Figure(figsize=(3.1 * n, 3.0))
        axes = fig.subplots(1, n, squeeze=False, sharey=True)[0]
        for ax, (title, series) in zip(axes, panels):
            if hline is not None:
                ax.axhline(hline, color="black", lw=0.6, alpha=0.5)
            for label, y in series.items():
                ax.plot(x, np.asarray(y, float), lw=1.2,
                        color=colors[label], label=label)
            ax.set_title(title)
            ax.set_xlabel(xlabel)
        axes[0].set_ylabel(ylabel)
        if labels:
            axes[-1].legend(loc="best", fontsize=7)
        fig.suptitle(suptitle)
        fig.tight_layout()
        _save(fig, path)


def trace_chart(path, variable: str, iterations,
                mean_by_stream: dict[int, np.ndarray],
                sd_by_stream: dict[int, np.ndarray]) -> None:
    """Convergence traces: imputed-cell mean and sd per stream over sweeps."""
    it = np.asarray(iterations, dtype=float)
    with matplotlib.rc_context(_RC):
        fig = Figure(figsize=(6.4, 3.0))
        ax_mean, ax_sd = fig.subplots(1, 2, sharex=True)
        for panel, data, name in ((ax_mean, mean_by_stream, "mean"),
                                  (ax_sd, sd_by_stream, "sd")):
            for i, stream in enumerate(sorted(data)):
                panel.plot(it, np.asarray(data[stream], float), lw=1.1,
                           color=_PALETTE[i % len(_PALETTE)],
                           label=f"m={stream + 1}")
            panel.set_xlabel("sweep")
            panel.set_title(name)
        ax_mean.set_ylabel(variable)
        ax_sd.legend(loc="best", fontsize=7)
        fig.tight_layout()
        _save(fig, path)


def strip_chart(path, variable: str,
                groups: list[tuple[str, np.ndarray]]) -> None:
    """Strip plot of observed values next to each dataset's imputed values.

    The first group is drawn in a distinct colour (it is the observed data).
    Horizontal jitter comes from a fixed-seed generator so the bytes of the
    figure do not change between runs.
    """
    jitter_rng = np.random.default_rng(0)
    with matplotlib.rc_context(_RC):
        fig = Figure(figsize=(max(3.2, 0.8 * len(groups) + 1.2), 3.2))
        ax = fig.subplots()
        for pos, (label, values) in enumerate(groups):
            vals = np.asarray(values, dtype=float)
            x = pos + jitter_rng.uniform(-0.18, 0.18, size=vals.size)
            color = _PALETTE[1] if pos == 0 else _PALETTE[0]
            ax.plot(x, vals, linestyle="none", marker="o", markersize=2.4,
                    alpha=0.55, color=color)
        ax.set_xticks(range(len(groups)))
        ax.set_xticklabels([g[0] for g in groups], fontsize=8)
        ax.set_ylabel(variable)
        ax.set_title(f"observed vs imputed: {variable}")
        fig.tight_layout()
        _save(fig, path)
