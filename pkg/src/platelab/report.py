"""Deterministic CSV reports with '#'-prefixed metadata."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import mpmath
import numpy as np
import scipy

from . import __version__


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.17g}"
    return str(value)


def metadata(config_sha256: str, experiment: str, seed: int) -> list[str]:
    """Header lines: everything a replay needs to be compared byte for byte."""
    return [
        f"platelab {__version__}",
        f"experiment {experiment}",
        f"config_sha256 {config_sha256}",
        f"seed {seed}",
        f"numpy {np.__version__} scipy {scipy.__version__} mpmath {mpmath.__version__}",
    ]


@dataclass
class Report:
    columns: list[str]
    rows: list[list] = field(default_factory=list)
    header: list[str] = field(default_factory=list)
    footer: list[str] = field(default_factory=list)
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def text(self) -> str:
        lines = [f"# {h}" for h in self.header]
        lines.append(",".join(self.columns))
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValueError(f"row has {len(row)} fields, expected {len(self.columns)}")
            lines.append(",".join(fmt(v) for v in row))
        lines += [f"# {f}" for f in self.footer]
        lines += [f"# VIOLATION {v}" for v in self.violations]
        return "\n".join(lines) + "\n"

    def write(self, path: str | Path) -> Path:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        with open(p, "w", newline="\n") as fh:
            fh.write(self.text())
        return p
