"""Figure rendering for the CLI report paths.

Figures are written next to the delimited outputs. Rendering is fully
deterministic (fixed size/dpi, no software/date metadata in the PNG), so
figures participate in the byte-identical rerun guarantee.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_SAVE_KWARGS = {"metadata": {"Software": None}, "bbox_inches": "tight"}
_DPI = 120


def _new_axes(width: float = 7.0, height: float = 4.2):
    fig, ax = plt.subplots(figsize=(width, height), dpi=_DPI)
    ax.grid(True, alpha=0.3)
    return fig, ax


def _finish(fig, path) -> None:
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def bar_chart(path, labels, values, ylabel: str, title: str, ylim=None) -> None:
    fig, ax = _new_axes(width=max(6.0, 0.8 * len(labels) + 2))
    ax.bar(range(len(labels)), values, color="#4878a8")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    if ylim is not None:
        ax.set_ylim(*ylim)
    _finish(fig, path)


def grouped_bar_chart(path, group_labels, series: dict[str, list[float]],
                      ylabel: str, title: str) -> None:
    fig, ax = _new_axes(width=max(6.0, 0.9 * len(group_labels) + 2))
    n_series = len(series)
    width = 0.8 / max(n_series, 1)
    for k, (name, values) in enumerate(series.items()):
        offsets = [i + (k - (n_series - 1) / 2) * width for i in range(len(group_labels))]
        ax.bar(offsets, values, width=width, label=name)
    ax.set_xticks(range(len(group_labels)))
    ax.set_xticklabels(group_labels, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend(fontsize=8)
    _finish(fig, path)


def rejection_curve_plot(path, curves: dict[str, tuple], title: str) -> None:
    """curves maps a label to (rhos, quality values)."""
    fig, ax = _new_axes()
    for label, (rhos, values) in sorted(curves.items()):
        ax.plot(rhos, values, label=label, linewidth=1.4)
    ax.set_xlabel("rejected fraction")
    ax.set_ylabel("retained mean quality")
    ax.set_title(title)
    ax.set_xlim(0, 1)
    ax.legend(fontsize=7)
    _finish(fig, path)


def correlation_plot(path, labels, r_values, p_values, title: str) -> None:
    fig, ax = _new_axes(width=max(6.0, 0.8 * len(labels) + 2))
    colors = ["#4878a8" if r >= 0 else "#a85048" for r in r_values]
    ax.bar(range(len(labels)), r_values, color=colors)
    for i, (r, p) in enumerate(zip(r_values, p_values)):
        ax.annotate(
            f"p={p:.2g}",
            (i, r),
            textcoords="offset points",
            xytext=(0, 4 if r >= 0 else -12),
            ha="center",
            fontsize=7,
        )
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("point-biserial r")
    ax.set_title(title)
    _finish(fig, path)
