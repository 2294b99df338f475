"""The three figure families rendered from sweep summaries.

tradeoff            validity vs normalized efficiency scatter, log-log
convergence         coverage gap vs size, error bars of 1.96 x SE
efficiency-vs-size  mean interval width vs size

Rendering is read-only and deterministic: the same CSV and spec always
produce the same plotted coordinates, which render() also returns so
callers (and tests) can inspect them without parsing the image.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .summary import apply_filters, read_summary

FAMILIES = ("tradeoff", "convergence", "efficiency-vs-size")

# marker shape encodes the coverage level
SHAPE_FOR_COVERAGE = {0.2: "^", 0.1: "s", 0.05: "D", 0.01: "o"}
_FALLBACK_SHAPES = ("v", "P", "X", "*", "<", ">")

_MIN_MARKER_AREA = 30.0
_MAX_MARKER_AREA = 150.0


class RenderError(Exception):
    """Unknown family or a selection the family cannot draw."""


@dataclass(frozen=True)
class FigureSpec:
    """What to draw: a family plus column=value row filters."""

    family: str
    filters: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise RenderError(
                f"unknown figure family {self.family!r}; choose from {FAMILIES}"
            )


@dataclass(frozen=True)
class RenderResult:
    """Plotted coordinates plus bookkeeping, for inspection and tests."""

    out_path: str
    points: tuple
    excluded: int
    caption: str


def _plottable(row: dict, family: str) -> bool:
    """Infeasible cells and rows a log axis cannot place are excluded."""
    if row.get("n_infeasible", 0) or not math.isfinite(row["mean_efficiency"]):
        return False
    if family == "tradeoff":
        return row["mean_validity"] > 0 and row["mean_efficiency"] > 0
    if family == "efficiency-vs-size":
        return row["mean_efficiency"] > 0
    return True


def _marker_for(eps: float, all_eps: list) -> str:
    if eps in SHAPE_FOR_COVERAGE:
        return SHAPE_FOR_COVERAGE[eps]
    extras = sorted(e for e in all_eps if e not in SHAPE_FOR_COVERAGE)
    return _FALLBACK_SHAPES[extras.index(eps) % len(_FALLBACK_SHAPES)]


def _area_for(n: int, all_n: list) -> float:
    ordered = sorted(set(all_n))
    if len(ordered) == 1:
        return (_MIN_MARKER_AREA + _MAX_MARKER_AREA) / 2
    rank = ordered.index(n) / (len(ordered) - 1)
    return _MIN_MARKER_AREA + rank * (_MAX_MARKER_AREA - _MIN_MARKER_AREA)


def _sort_key(row: dict) -> tuple:
    return (row["dataset"], row["noise"], row["d"], row["n"],
            row["epsilon"], row["ncm"], row["model"])


def _coverage_label(eps: float) -> str:
    return f"{100 * (1 - eps):g}%"


def _render_tradeoff(rows, ax):
    all_eps = sorted({r["epsilon"] for r in rows})
    all_n = [r["n"] for r in rows]
    pair_names = sorted({f"{r['ncm']}/{r['model']}" for r in rows})
    colors = plt.cm.tab10.colors
    points = []
    seen_labels = set()
    for row in rows:
        pair = f"{row['ncm']}/{row['model']}"
        x = row["mean_validity"]
        y = row["mean_efficiency"] / (1.0 - row["epsilon"])
        marker = _marker_for(row["epsilon"], all_eps)
        area = _area_for(row["n"], all_n)
        color = colors[pair_names.index(pair) % len(colors)]
        label = pair if pair not in seen_labels else None
        seen_labels.add(pair)
        ax.scatter([x], [y], marker=marker, s=area, color=color,
                   edgecolors="black", linewidths=0.4, label=label, zorder=3)
        points.append({
            "series": pair, "epsilon": row["epsilon"], "n": row["n"],
            "x": x, "y": y, "marker": marker, "area": area,
        })
    # one legend entry per coverage, carrying only its marker shape
    for eps in all_eps:
        ax.scatter([], [], marker=_marker_for(eps, all_eps), s=60,
                   color="0.5", label=_coverage_label(eps))
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("empirical coverage")
    ax.set_ylabel("efficiency / target coverage")
    ax.legend(fontsize=7)
    return points


def _line_series(rows):
    groups: dict = {}
    for row in rows:
        key = (row["ncm"], row["model"], row["dataset"], row["noise"],
               row["d"], row["epsilon"])
        groups.setdefault(key, []).append(row)
    return dict(sorted(groups.items()))


def _series_label(key, multi_eps: bool) -> str:
    ncm, model, _, _, _, eps = key
    label = f"{ncm}/{model}"
    if multi_eps:
        label += f" @ {_coverage_label(eps)}"
    return label


def _render_lines(rows, ax, y_col, err_col=None):
    groups = _line_series(rows)
    multi_eps = len({k[5] for k in groups}) > 1
    points = []
    for key, members in groups.items():
        members = sorted(members, key=lambda r: r["n"])
        xs = [r["n"] for r in members]
        ys = [r[y_col] for r in members]
        label = _series_label(key, multi_eps)
        if err_col is not None:
            errs = [1.96 * r[err_col] for r in members]
            ax.errorbar(xs, ys, yerr=errs, marker="o", capsize=3, label=label)
            points.append({"series": label, "x": xs, "y": ys, "err": errs})
        else:
            ax.plot(xs, ys, marker="o", label=label)
            points.append({"series": label, "x": xs, "y": ys})
    ax.set_xlabel("training pool size")
    ax.legend(fontsize=7)
    return points


def _caption(dropped: int) -> str:
    if not dropped:
        return ""
    plural = "s" if dropped != 1 else ""
    return f"{dropped} infeasible/infinite row{plural} excluded"


def render(summary_csv: str | Path, spec: FigureSpec, out_path: str | Path,
           png: bool = False) -> RenderResult:
    """Draw one figure family from a summary CSV and write it out."""
    selected = apply_filters(read_summary(summary_csv), spec.filters)
    rows = sorted(
        (r for r in selected if _plottable(r, spec.family)), key=_sort_key
    )
    dropped = len(selected) - len(rows)
    if not rows:
        raise RenderError(
            "every selected row is infeasible or infinite; nothing to draw"
        )

    fig, ax = plt.subplots(figsize=(6.4, 4.8), dpi=120)
    try:
        if spec.family == "tradeoff":
            points = _render_tradeoff(rows, ax)
        elif spec.family == "convergence":
            points = _render_lines(
                rows, ax, "mean_abs_coverage_gap", err_col="se_abs_coverage_gap"
            )
            ax.set_ylabel("mean |coverage - target|")
        else:
            points = _render_lines(rows, ax, "mean_efficiency")
            ax.set_yscale("log")
            ax.set_ylabel("mean interval width")
        caption = _caption(dropped)
        if caption:
            fig.text(0.01, 0.005, caption, fontsize=7, color="0.35")
        fig.tight_layout()
        fig.savefig(out_path, format="png" if png else "svg")
    finally:
        plt.close(fig)
    return RenderResult(
        out_path=str(out_path), points=tuple(points),
        excluded=dropped, caption=caption,
    )
