"""Render an effects report into per-attribute figure panels.

Input is the published report format only (``report.json`` as written by
``mixedlfm explore``): patterns with usage counts, per-(pattern, attribute)
distribution tables, and per-attribute empirical baselines.  Discrete
attributes become grouped bar charts (one bar group per category, one series
per selected pattern, the baseline last and visually distinct); continuous
attributes become density line overlays.  Output is deterministic given the
same report and selection.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

BASELINE_TAG = "baseline"

#: fixed series colors; the baseline is drawn last in gray with hatching
_COLORS = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2")
_BASELINE_COLOR = "#7f7f7f"


@dataclass(frozen=True)
class FigureSpec:
    """What to render: which report, which attributes/patterns, where to."""

    report_path: Path
    out_path: Path
    attributes: Optional[tuple[str, ...]] = None
    patterns: Optional[tuple[str, ...]] = None
    max_columns: int = 3
    panel_size: tuple[float, float] = (4.2, 3.2)
    dpi: int = 120


def load_report(path: Path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    for key in ("patterns", "tables", "baselines"):
        if key not in doc:
            raise ValueError(f"{path}: not an effects report (missing {key!r})")
    return doc


def _attribute_order(doc: dict) -> list[str]:
    return [t["name"] for t in doc["baselines"]]


def _pattern_order(doc: dict) -> list[str]:
    return [p["display"] for p in doc["patterns"]]


def _table(doc: dict, tag: str, name: str) -> dict:
    for t in doc["tables"]:
        if t["tag"] == tag and t["name"] == name:
            return t
    raise KeyError(f"report has no table for pattern {tag} and attribute {name!r}")


def _baseline(doc: dict, name: str) -> dict:
    for t in doc["baselines"]:
        if t["name"] == name:
            return t
    raise KeyError(f"report has no baseline for attribute {name!r}")


def _resolve_selection(doc: dict, spec: FigureSpec) -> tuple[list[str], list[str]]:
    names = _attribute_order(doc)
    if spec.attributes is not None:
        missing = [a for a in spec.attributes if a not in names]
        if missing:
            raise KeyError(f"attribute {missing[0]!r} not present in the report")
        names = list(spec.attributes)
    pats = _pattern_order(doc)
    if spec.patterns is not None:
        missing = [p for p in spec.patterns if p not in pats]
        if missing:
            raise KeyError(f"pattern {missing[0]!r} not present in the report")
        pats = list(spec.patterns)
    return names, pats


def _draw_discrete(ax, tables: list[tuple[str, dict]], baseline: dict):
    labels = baseline["labels"]
    x = np.arange(len(labels))
    n_series = len(tables) + 1
    width = 0.8 / n_series
    for i, (tag, table) in enumerate(tables):
        ax.bar(
            x + (i - (n_series - 1) / 2) * width,
            table["probabilities"],
            width,
            label=tag,
            color=_COLORS[i % len(_COLORS)],
        )
    ax.bar(
        x + (len(tables) - (n_series - 1) / 2) * width,
        baseline["probabilities"],
        width,
        label=BASELINE_TAG,
        color=_BASELINE_COLOR,
        hatch="//",
        edgecolor="white",
    )
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax.set_ylim(0.0, 1.0)
    ax.set_ylabel("probability")


def _draw_continuous(ax, tables: list[tuple[str, dict]], baseline: dict):
    for i, (tag, table) in enumerate(tables):
        ax.plot(table["grid"], table["density"], label=tag, color=_COLORS[i % len(_COLORS)])
    ax.plot(
        baseline["grid"],
        baseline["density"],
        label=BASELINE_TAG,
        color=_BASELINE_COLOR,
        linestyle="--",
        linewidth=2,
    )
    ax.set_ylabel("density")


def build_figure(spec: FigureSpec):
    """Assemble the matplotlib figure: one panel per selected attribute."""
    doc = load_report(spec.report_path)
    names, pats = _resolve_selection(doc, spec)
    n = len(names)
    ncols = min(spec.max_columns, n)
    nrows = (n + ncols - 1) // ncols
    fig, axes = plt.subplots(
        nrows,
        ncols,
        figsize=(spec.panel_size[0] * ncols, spec.panel_size[1] * nrows),
        squeeze=False,
    )
    for idx, name in enumerate(names):
        ax = axes[idx // ncols][idx % ncols]
        baseline = _baseline(doc, name)
        tables = [(tag, _table(doc, tag, name)) for tag in pats]
        if "probabilities" in baseline:
            _draw_discrete(ax, tables, baseline)
        else:
            _draw_continuous(ax, tables, baseline)
        ax.set_title(name, fontsize=10)
        ax.legend(fontsize=7)
    for idx in range(n, nrows * ncols):
        axes[idx // ncols][idx % ncols].axis("off")
    fig.tight_layout()
    return fig


def render(spec: FigureSpec) -> Path:
    """Render the figure to ``spec.out_path`` (PNG); returns the path."""
    fig = build_figure(spec)
    spec.out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(spec.out_path, dpi=spec.dpi, metadata={"Software": None})
    plt.close(fig)
    return spec.out_path


def _split_arg(value: Optional[str]) -> Optional[tuple[str, ...]]:
    if value is None:
        return None
    return tuple(s.strip() for s in value.split(",") if s.strip())


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = argparse.ArgumentParser(
        prog="mixedlfm-figures",
        description="Render an effects report into per-attribute panels",
    )
    ap.add_argument("--report", required=True, help="report.json written by the explore command")
    ap.add_argument("--out", help="output image path (default: figures.png next to the report)")
    ap.add_argument("--attributes", help="comma-separated attribute names (default: all)")
    ap.add_argument("--patterns", help="comma-separated pattern strings like '(010)' (default: all)")
    args = ap.parse_args(argv)
    report = Path(args.report)
    out = Path(args.out) if args.out else report.parent / "figures.png"
    spec = FigureSpec(
        report_path=report,
        out_path=out,
        attributes=_split_arg(args.attributes),
        patterns=_split_arg(args.patterns),
    )
    try:
        path = render(spec)
    except (KeyError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
