"""The structured mesh container shared by the generators and evaluators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["StructuredMesh"]


@dataclass
class StructuredMesh:
    """Node coordinates on an ni-by-nj logical grid.

    points[i, j] is the physical (x, y) of computational node
    (xi_i, eta_j) with i along xi and j along eta.
    """

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 3 or pts.shape[2] != 2:
            raise ValueError("points must have shape (ni, nj, 2)")
        if pts.shape[0] < 2 or pts.shape[1] < 2:
            raise ValueError("mesh needs at least 2 nodes per direction")
        self.points = pts

    @property
    def ni(self) -> int:
        return self.points.shape[0]

    @property
    def nj(self) -> int:
        return self.points.shape[1]

    @property
    def x(self) -> np.ndarray:
        return self.points[:, :, 0]

    @property
    def y(self) -> np.ndarray:
        return self.points[:, :, 1]
