"""Rendering of harness CSVs into figures and formatted tables.

Inputs are read-only; rendering the same spec twice produces identical
output bytes.  Image formats follow the output suffix (.png or .svg);
the alpha-table kind writes a markdown table instead of an image.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
import pandas as pd

matplotlib.use("Agg")
# fixed hash salt keeps SVG element ids, and therefore output bytes, stable
matplotlib.rcParams["svg.hashsalt"] = "lrrt-figures"

import matplotlib.pyplot as plt  # noqa: E402 - backend must be pinned first

from .specs import FigureSpec

__all__ = [
    "EmptyDataError",
    "MissingColumnError",
    "RenderError",
    "render_figure",
    "render_figures",
]


class RenderError(Exception):
    """Base class for rendering failures."""


class MissingColumnError(RenderError):
    def __init__(self, column: str, path: Path):
        super().__init__(f"column {column!r} is missing from {path}")
        self.column = column


class EmptyDataError(RenderError):
    pass


def _load_table(path: Path, required: tuple[str, ...]) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path)
    except FileNotFoundError:
        raise RenderError(f"input CSV not found: {path}") from None
    except pd.errors.EmptyDataError:
        raise EmptyDataError(f"{path} is empty") from None
    for column in required:
        if column not in frame.columns:
            raise MissingColumnError(column, path)
    if len(frame) == 0:
        raise EmptyDataError(f"{path} has a header but no data rows")
    return frame


def _drop_blank(frame: pd.DataFrame, column: str, path: Path) -> pd.DataFrame:
    kept = frame.dropna(subset=[column])
    if len(kept) == 0:
        raise EmptyDataError(f"{path} has no rows with a {column!r} value")
    return kept


def _check_log_axes(spec: FigureSpec, xs, ys) -> None:
    if spec.logx and min(xs) <= 0:
        raise RenderError(
            f"log x-axis requires positive values, found min {min(xs)!r}"
        )
    if spec.logy and min(ys) <= 0:
        raise RenderError(
            f"log y-axis requires positive values, found min {min(ys)!r}"
        )


def _new_axes(spec: FigureSpec):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    if spec.title:
        ax.set_title(spec.title)
    return fig, ax


def _finish(fig, ax, spec: FigureSpec) -> Path:
    if spec.logx:
        ax.set_xscale("log")
    if spec.logy:
        ax.set_yscale("log")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    spec.output.parent.mkdir(parents=True, exist_ok=True)
    if spec.output.suffix == ".svg":
        # strip the creation date so repeated renders are byte-identical
        fig.savefig(spec.output, metadata={"Date": None})
    else:
        fig.savefig(spec.output, dpi=150)
    plt.close(fig)
    return spec.output


def _render_flux_overlay(spec: FigureSpec) -> Path:
    fig, ax = _new_axes(spec)
    xs_all, ys_all = [], []
    for path in spec.inputs:
        frame = _load_table(path, ("x",))
        series = [c for c in frame.columns if c != "x"]
        if not series:
            raise MissingColumnError("<any series besides x>", path)
        for name in series:
            part = frame.dropna(subset=[name])
            if len(part) == 0:
                continue
            ax.plot(part["x"], part[name], label=name, linewidth=1.2)
            xs_all.extend(part["x"])
            ys_all.extend(part[name])
    if not ys_all:
        raise EmptyDataError(f"no plottable series in {', '.join(map(str, spec.inputs))}")
    _check_log_axes(spec, xs_all, ys_all)
    ax.set_xlabel("x")
    ax.set_ylabel("scalar flux")
    return _finish(fig, ax, spec)


def _render_rows(
    spec: FigureSpec,
    x_col: str,
    y_col: str,
    group_cols: tuple[str, ...],
    xlabel: str,
    ylabel: str,
) -> Path:
    fig, ax = _new_axes(spec)
    xs_all, ys_all = [], []
    for path in spec.inputs:
        frame = _load_table(path, (x_col, y_col) + group_cols)
        frame = _drop_blank(frame, y_col, path)
        for key, part in frame.groupby(list(group_cols), dropna=False):
            if not isinstance(key, tuple):
                key = (key,)
            label = ", ".join(
                f"{col}={_fmt_group(val)}" for col, val in zip(group_cols, key)
            )
            part = part.sort_values(x_col)
            ax.plot(part[x_col], part[y_col], marker="o", linewidth=1.0, label=label)
            xs_all.extend(part[x_col])
            ys_all.extend(part[y_col])
    _check_log_axes(spec, xs_all, ys_all)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    return _finish(fig, ax, spec)


def _fmt_group(val) -> str:
    if pd.isna(val):
        return "-"
    if isinstance(val, float) and val.is_integer():
        return str(int(val))
    return str(val)


def _render_alpha_table(spec: FigureSpec) -> Path:
    frames = [
        _drop_blank(_load_table(path, ("r", "s", "alpha")), "alpha", path)
        for path in spec.inputs
    ]
    frame = pd.concat(frames, ignore_index=True)
    pivot = frame.pivot_table(index="s", columns="r", values="alpha", aggfunc="mean")
    pivot = pivot.sort_index().sort_index(axis=1)

    cols = [int(c) for c in pivot.columns]
    header = ["s \\ r"] + [str(c) for c in cols]
    lines = [
        "| " + " | ".join(header) + " |",
        "|" + "|".join(" --- " for _ in header) + "|",
    ]
    for s, row in pivot.iterrows():
        cells = [str(int(s))]
        for c in pivot.columns:
            val = row[c]
            cells.append("-" if pd.isna(val) else f"{val:.{spec.digits}f}")
        lines.append("| " + " | ".join(cells) + " |")
    text = "\n".join(lines) + "\n"
    if spec.title:
        text = f"### {spec.title}\n\n" + text
    spec.output.parent.mkdir(parents=True, exist_ok=True)
    spec.output.write_text(text, encoding="utf-8")
    return spec.output


def render_figure(spec: FigureSpec) -> Path:
    """Render one figure; returns the output path."""
    if spec.kind == "flux-overlay":
        return _render_flux_overlay(spec)
    if spec.kind == "bias":
        return _render_rows(spec, "r", "bias", ("m", "N"), "rank r", "bias")
    if spec.kind == "mc-error":
        return _render_rows(spec, "N", "mc_error", ("m", "r"), "samples N", "MC error")
    if spec.kind == "timing":
        return _render_rows(
            spec, "N", "wall_time_s", ("study", "m", "r"), "samples N", "wall time [s]"
        )
    return _render_alpha_table(spec)


def render_figures(specs: list[FigureSpec]) -> list[Path]:
    """Render every spec in order; fails on the first error."""
    return [render_figure(spec) for spec in specs]
