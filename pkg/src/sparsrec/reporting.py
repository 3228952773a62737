"""CSV tables and heatmap images for experiment runs.

CSV files are the source of truth: floats are written with repr so they
round-trip exactly and runs are byte-for-byte reproducible.  Every PNG is
rendered from the same array that its paired CSV stores.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

_CMAP = "viridis"


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path, header, rows) -> None:
    with open(path, "w") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")


def coefficient_table(values: np.ndarray, cells_per_side: int, dim: int):
    """Rows (index, cell_x, cell_y, value) for a coefficient vector."""
    rows = []
    H = 1.0 / cells_per_side
    for i, v in enumerate(values):
        if dim == 2:
            cy, cx = divmod(i, cells_per_side)
        else:
            cx, cy = i, 0
        rows.append((i, (cx + 0.5) * H, (cy + 0.5) * H if dim == 2 else 0.0, float(v)))
    return rows


def write_coefficient_heatmap(base_path, values: np.ndarray, cells_per_side: int,
                              dim: int, title: str = "") -> List[str]:
    """Write <base>.csv and <base>.png for one coefficient vector."""
    values = np.asarray(values, dtype=float)
    csv_path = base_path + ".csv"
    png_path = base_path + ".png"
    write_csv(csv_path, ("index", "cell_x", "cell_y", "value"),
              coefficient_table(values, cells_per_side, dim))

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4.2, 3.6))
    if dim == 2:
        grid = values.reshape(cells_per_side, cells_per_side)
        im = ax.imshow(grid, origin="lower", extent=(0, 1, 0, 1), cmap=_CMAP)
        fig.colorbar(im, ax=ax)
    else:
        centers = (np.arange(values.size) + 0.5) / cells_per_side
        ax.bar(centers, values, width=0.9 / cells_per_side)
        ax.set_xlim(0, 1)
    if title:
        ax.set_title(title, fontsize=9)
    fig.tight_layout()
    fig.savefig(png_path, dpi=110)
    plt.close(fig)
    return [csv_path, png_path]


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class RunReport:
    """Outcome of one experiment run: artifacts, checks and scalar values."""

    name: str
    seed: Optional[int] = None
    converged: bool = True
    artifacts: List[str] = field(default_factory=list)
    checks: List[Check] = field(default_factory=list)
    values: dict = field(default_factory=dict)

    def check(self, name: str, passed: bool, detail: str = "") -> bool:
        self.checks.append(Check(name, bool(passed), detail))
        return bool(passed)

    @property
    def all_passed(self) -> bool:
        return self.converged and all(c.passed for c in self.checks)

    def summary_lines(self):
        lines = ["run %s: %s" % (self.name, "ok" if self.all_passed else "FAILED")]
        for c in self.checks:
            lines.append("  [%s] %s%s" % ("pass" if c.passed else "FAIL", c.name,
                                          " (%s)" % c.detail if c.detail else ""))
        return lines


def ensure_dir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return path
