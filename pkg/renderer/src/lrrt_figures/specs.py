"""Figure specifications and their YAML loader.

A spec file lists figures to render from harness CSVs:

    figures:
      - kind: mc-error
        input: results/mc_error.csv
        output: figures/mc_error.png
      - kind: alpha-table
        input: results/alpha_table.csv
        output: figures/alpha_table.md
        digits: 4

Relative input/output paths resolve against the spec file's directory.
Axis scales default per kind (mc-error is log-y, timing is log-log) and
can be overridden with explicit ``logx`` / ``logy`` keys.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

__all__ = ["KINDS", "FigureSpec", "load_specs"]

KINDS = ("flux-overlay", "bias", "mc-error", "timing", "alpha-table")

# kind -> (logx, logy) defaults
_DEFAULT_SCALES = {
    "flux-overlay": (False, False),
    "bias": (False, True),
    "mc-error": (False, True),
    "timing": (True, True),
    "alpha-table": (False, False),
}

_ALLOWED_KEYS = {"kind", "input", "inputs", "output", "logx", "logy", "title", "digits"}


@dataclass(frozen=True)
class FigureSpec:
    """One figure: a kind, input CSVs, an output path, and axis scales."""

    kind: str
    inputs: tuple[Path, ...]
    output: Path
    logx: bool = False
    logy: bool = False
    title: str = ""
    digits: int = 4

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; expected one of {KINDS}")
        if not self.inputs:
            raise ValueError("at least one input CSV is required")
        if self.digits < 1:
            raise ValueError(f"digits must be positive, got {self.digits}")


def _one_spec(entry: dict, base: Path, index: int) -> FigureSpec:
    if not isinstance(entry, dict):
        raise ValueError(f"figure #{index} must be a mapping, got {type(entry).__name__}")
    unknown = sorted(set(entry) - _ALLOWED_KEYS)
    if unknown:
        raise ValueError(f"figure #{index} has unknown keys: {', '.join(unknown)}")
    for key in ("kind", "output"):
        if key not in entry:
            raise ValueError(f"figure #{index} is missing the {key!r} key")
    raw_inputs = entry.get("inputs", entry.get("input"))
    if raw_inputs is None:
        raise ValueError(f"figure #{index} is missing an 'input' or 'inputs' key")
    if isinstance(raw_inputs, (str, Path)):
        raw_inputs = [raw_inputs]

    kind = str(entry["kind"])
    if kind not in KINDS:
        raise ValueError(f"figure #{index}: unknown kind {kind!r}; expected one of {KINDS}")
    logx_default, logy_default = _DEFAULT_SCALES[kind]
    return FigureSpec(
        kind=kind,
        inputs=tuple((base / p).resolve() for p in map(Path, raw_inputs)),
        output=(base / Path(entry["output"])).resolve(),
        logx=bool(entry.get("logx", logx_default)),
        logy=bool(entry.get("logy", logy_default)),
        title=str(entry.get("title", "")),
        digits=int(entry.get("digits", 4)),
    )


def load_specs(path: str | Path) -> list[FigureSpec]:
    """Parse a YAML spec file into a list of FigureSpec."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict) or "figures" not in raw:
        raise ValueError(f"{path} must be a mapping with a 'figures' list")
    unknown = sorted(set(raw) - {"figures"})
    if unknown:
        raise ValueError(f"{path} has unknown top-level keys: {', '.join(unknown)}")
    entries = raw["figures"]
    if not isinstance(entries, list) or not entries:
        raise ValueError(f"{path}: 'figures' must be a non-empty list")
    base = path.resolve().parent
    return [_one_spec(entry, base, i) for i, entry in enumerate(entries)]
