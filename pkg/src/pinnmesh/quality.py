"""Mesh quality: per-cell included angles, fold detection, reports.

The headline metric is the maximum included angle of each quad cell.
Angles are measured at each vertex with a signed cross product, so a
reflex corner of a folded cell reports as more than 180 degrees instead of
aliasing back into (0, 180].  Cells with non-positive signed area count as
inverted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCell
from .mesh import StructuredMesh

__all__ = [
    "cell_angles",
    "signed_area",
    "QualityReport",
    "evaluate_mesh",
    "ComparisonSummary",
    "compare_reports",
]

_EDGE_TOL = 1e-14
BIN_WIDTH = 5.0
N_BINS = 72   # five-degree bins covering (0, 360]


def signed_area(quad) -> float:
    """Shoelace area of a quad given counter-clockwise vertex order."""
    q = np.asarray(quad, dtype=float).reshape(4, 2)
    s = 0.0
    for k in range(4):
        x0, y0 = q[k]
        x1, y1 = q[(k + 1) % 4]
        s += x0 * y1 - x1 * y0
    return 0.5 * s


def cell_angles(quad) -> np.ndarray:
    """Interior angles in degrees at the four vertices of a ccw quad.

    Reflex corners come out in (180, 360).  Raises DegenerateCell when two
    consecutive vertices coincide (edge shorter than 1e-14).
    """
    q = np.asarray(quad, dtype=float).reshape(4, 2)
    angles = np.empty(4)
    for k in range(4):
        v = q[k]
        a = q[(k + 1) % 4] - v
        b = q[(k - 1) % 4] - v
        if np.hypot(*a) < _EDGE_TOL or np.hypot(*b) < _EDGE_TOL:
            raise DegenerateCell(f"vanishing edge at vertex {k}")
        ang = np.degrees(np.arctan2(a[0] * b[1] - a[1] * b[0], a @ b))
        if ang <= 0.0:
            ang += 360.0
        angles[k] = ang
    return angles


@dataclass
class QualityReport:
    """Angle statistics for one mesh."""

    n_cells: int
    max_angle: float
    mean_max_angle: float
    histogram: np.ndarray          # per-cell max angles in 5 degree bins
    inverted_cells: int            # signed area <= 0
    nonconvex_cells: int           # any corner angle > 180
    degenerate_cells: int
    orientation: int               # +1 ccw mesh, -1 globally reversed input
    per_cell_max: np.ndarray       # (ni-1, nj-1)

    def to_dict(self) -> dict:
        def num(v):
            v = float(v)
            return v if np.isfinite(v) else None
        return {
            "n_cells": self.n_cells,
            "max_angle_deg": num(self.max_angle),
            "mean_max_angle_deg": num(self.mean_max_angle),
            "histogram_bin_deg": BIN_WIDTH,
            "histogram": [int(c) for c in self.histogram],
            "inverted_cells": self.inverted_cells,
            "nonconvex_cells": self.nonconvex_cells,
            "degenerate_cells": self.degenerate_cells,
            "orientation": self.orientation,
            "per_cell_max_deg": [[num(v) for v in row]
                                 for row in self.per_cell_max],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_table(self) -> str:
        rows = [
            ("cells", str(self.n_cells)),
            ("max included angle", f"{self.max_angle:.3f} deg"),
            ("mean of per-cell max", f"{self.mean_max_angle:.3f} deg"),
            ("inverted cells", str(self.inverted_cells)),
            ("non-convex cells", str(self.nonconvex_cells)),
            ("degenerate cells", str(self.degenerate_cells)),
        ]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)

    def histogram_rows(self) -> list:
        """(bin_start_deg, bin_end_deg, count) rows for CSV export."""
        return [(i * BIN_WIDTH, (i + 1) * BIN_WIDTH, int(c))
                for i, c in enumerate(self.histogram)]


def evaluate_mesh(mesh: StructuredMesh) -> QualityReport:
    """Vectorized quality evaluation over all cells.

    Degenerate cells (a vanishing edge) are counted and excluded from the
    angle statistics rather than raised.  A globally reversed mesh is
    normalized first, so the statistics are mirror invariant and the
    orientation flag records the flip.
    """
    pts = mesh.points
    p00 = pts[:-1, :-1]
    p10 = pts[1:, :-1]
    p11 = pts[1:, 1:]
    p01 = pts[:-1, 1:]
    corners = np.stack([p00, p10, p11, p01], axis=2)  # (ci, cj, 4, 2)

    area2 = np.zeros(corners.shape[:2])
    for k in range(4):
        x0 = corners[:, :, k, 0]
        y0 = corners[:, :, k, 1]
        x1 = corners[:, :, (k + 1) % 4, 0]
        y1 = corners[:, :, (k + 1) % 4, 1]
        area2 += x0 * y1 - x1 * y0

    orientation = 1
    if area2.sum() < 0.0:
        orientation = -1
        corners = corners[:, :, ::-1, :]
        # Reversing the vertex cycle flips every signed area.
        area2 = -area2

    edges = np.roll(corners, -1, axis=2) - corners
    lengths = np.hypot(edges[..., 0], edges[..., 1])
    degenerate = (lengths < _EDGE_TOL).any(axis=2)

    angles = np.empty(corners.shape[:3])
    for k in range(4):
        v = corners[:, :, k]
        a = corners[:, :, (k + 1) % 4] - v
        b = corners[:, :, (k - 1) % 4] - v
        cross = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
        dot = a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1]
        ang = np.degrees(np.arctan2(cross, dot))
        angles[:, :, k] = np.where(ang <= 0.0, ang + 360.0, ang)

    ok = ~degenerate
    per_cell_max = np.where(ok, angles.max(axis=2), np.nan)
    valid_max = per_cell_max[ok]
    n_cells = int(degenerate.size)
    n_degen = int(degenerate.sum())

    if valid_max.size:
        max_angle = float(valid_max.max())
        mean_max = float(valid_max.mean())
        bins = np.minimum((valid_max // BIN_WIDTH).astype(int), N_BINS - 1)
        histogram = np.bincount(bins, minlength=N_BINS)
    else:
        max_angle = float("nan")
        mean_max = float("nan")
        histogram = np.zeros(N_BINS, dtype=int)

    inverted = int(((area2 <= 0.0) & ok).sum())
    nonconvex = int(((angles > 180.0).any(axis=2) & ok).sum())
    return QualityReport(n_cells, max_angle, mean_max, histogram, inverted,
                         nonconvex, n_degen, orientation, per_cell_max)


@dataclass
class ComparisonSummary:
    """Signed metric deltas between two reports (first minus second)."""

    delta_max_angle: float
    delta_mean_max_angle: float
    delta_inverted: int
    delta_nonconvex: int

    def to_table(self, name_a: str = "a", name_b: str = "b") -> str:
        rows = [
            ("max included angle", f"{self.delta_max_angle:+.3f} deg"),
            ("mean of per-cell max", f"{self.delta_mean_max_angle:+.3f} deg"),
            ("inverted cells", f"{self.delta_inverted:+d}"),
            ("non-convex cells", f"{self.delta_nonconvex:+d}"),
        ]
        width = max(len(k) for k, _ in rows)
        head = f"delta = {name_a} - {name_b}"
        return "\n".join([head] + [f"{k.ljust(width)}  {v}" for k, v in rows])


def compare_reports(a: QualityReport, b: QualityReport) -> ComparisonSummary:
    return ComparisonSummary(
        a.max_angle - b.max_angle,
        a.mean_max_angle - b.mean_max_angle,
        a.inverted_cells - b.inverted_cells,
        a.nonconvex_cells - b.nonconvex_cells,
    )
