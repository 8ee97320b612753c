"""Classical mesh generators: transfinite interpolation and elliptic smoothing.

Both operate on a BoundaryDiscretization, a set of boundary node arrays on
the four sides.  Discretizations can be built from a boundary fit or
constructed directly from analytic curves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergedIteration, InvalidGeometry
from .geometry import BoundaryFit
from .mesh import StructuredMesh

__all__ = [
    "BoundaryDiscretization",
    "discretize_boundary",
    "tfi",
    "elliptic_smooth",
]

_CORNER_TOL = 1e-9


@dataclass
class BoundaryDiscretization:
    """Boundary nodes: bottom/top of length ni, left/right of length nj.

    bottom[i] pairs with xi_i = i / (ni - 1); left[j] with eta_j.  All four
    arrays are (n, 2) physical points.
    """

    bottom: np.ndarray
    top: np.ndarray
    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        for name in ("bottom", "top", "left", "right"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 2:
                raise InvalidGeometry(f"{name} must be an (n>=2, 2) array")
            setattr(self, name, arr)
        if self.bottom.shape[0] != self.top.shape[0]:
            raise InvalidGeometry("bottom and top must have equal length")
        if self.left.shape[0] != self.right.shape[0]:
            raise InvalidGeometry("left and right must have equal length")

    @property
    def ni(self) -> int:
        return self.bottom.shape[0]

    @property
    def nj(self) -> int:
        return self.left.shape[0]

    def corner_gap(self) -> float:
        pairs = [
            (self.bottom[0], self.left[0]),
            (self.bottom[-1], self.right[0]),
            (self.top[0], self.left[-1]),
            (self.top[-1], self.right[-1]),
        ]
        return max(float(np.max(np.abs(p - q))) for p, q in pairs)


def discretize_boundary(fit: BoundaryFit, ni: int, nj: int) -> BoundaryDiscretization:
    """Evaluate the fitted boundary at uniform parameters."""
    if ni < 2 or nj < 2:
        raise InvalidGeometry("ni and nj must be at least 2")
    ti = np.linspace(0.0, 1.0, ni)
    tj = np.linspace(0.0, 1.0, nj)
    sides = {}
    for name, t in (("bottom", ti), ("top", ti), ("left", tj), ("right", tj)):
        xs, ys = fit.predict(name, t)
        sides[name] = np.column_stack([xs, ys])
    return BoundaryDiscretization(**sides)


def tfi(bd: BoundaryDiscretization, formula: str = "standard") -> StructuredMesh:
    """Transfinite interpolation of the boundary.

    The standard formula blends the four sides and subtracts the doubly
    counted corners:

        r = (1-xi) r_l(eta) + xi r_r(eta) + (1-eta) r_b(xi) + eta r_t(xi)
            - (1-xi)(1-eta) r_b(0) - (1-xi) eta r_t(0)
            - xi (1-eta) r_b(1) - xi eta r_t(1)

    ``formula="uncorrected"`` drops the eta factors on the r_t(xi) and
    (1-xi) r_t(0) terms; it does not reproduce the boundary and exists only
    for side-by-side comparisons.
    """
    if formula not in ("standard", "uncorrected"):
        raise ValueError("formula must be 'standard' or 'uncorrected'")
    gap = bd.corner_gap()
    if gap > _CORNER_TOL:
        raise InvalidGeometry(f"boundary corners disagree by {gap:.3e}")

    ni, nj = bd.ni, bd.nj
    xi = np.linspace(0.0, 1.0, ni)[:, None, None]
    eta = np.linspace(0.0, 1.0, nj)[None, :, None]
    rb = bd.bottom[:, None, :]
    rt = bd.top[:, None, :]
    rl = bd.left[None, :, :]
    rr = bd.right[None, :, :]
    b0, b1 = bd.bottom[0], bd.bottom[-1]
    t0, t1 = bd.top[0], bd.top[-1]

    if formula == "standard":
        pts = ((1.0 - xi) * rl + xi * rr + (1.0 - eta) * rb + eta * rt
               - (1.0 - xi) * (1.0 - eta) * b0 - (1.0 - xi) * eta * t0
               - xi * (1.0 - eta) * b1 - xi * eta * t1)
    else:
        pts = ((1.0 - xi) * rl + xi * rr + (1.0 - eta) * rb + rt
               - (1.0 - xi) * (1.0 - eta) * b0 - (1.0 - xi) * t0
               - xi * (1.0 - eta) * b1 - xi * eta * t1)

    # Border rows are taken verbatim so boundary reproduction is exact even
    # when the corners only agree to tolerance.
    pts[:, 0, :] = bd.bottom
    pts[:, -1, :] = bd.top
    pts[0, :, :] = bd.left
    pts[-1, :, :] = bd.right
    return StructuredMesh(pts)


def elliptic_smooth(bd: BoundaryDiscretization, iterations: int = 1000,
                    init: str = "zero", omega: float = 1.5) -> tuple:
    """Relax the interior with SOR sweeps of the inverted smoothing system.

    Central differences on the logical grid; the coefficients alpha, beta,
    gamma are frozen at the start of each sweep and the sweep itself is an
    in-place lexicographic Gauss-Seidel pass with relaxation factor omega.
    Boundary nodes are held bit-exact.  Returns (mesh, residual_history)
    where the history records the maximum update magnitude per sweep.

    init="zero" starts all interior nodes at the origin; init="tfi" starts
    from the transfinite mesh.
    """
    if init not in ("zero", "tfi"):
        raise ValueError("init must be 'zero' or 'tfi'")
    if not (0.0 < omega < 2.0):
        raise ValueError("omega must lie in (0, 2)")
    if iterations < 0:
        raise ValueError("iterations must be non-negative")

    if init == "tfi":
        pts = tfi(bd).points.copy()
    else:
        gap = bd.corner_gap()
        if gap > _CORNER_TOL:
            raise InvalidGeometry(f"boundary corners disagree by {gap:.3e}")
        pts = np.zeros((bd.ni, bd.nj, 2))
        pts[:, 0, :] = bd.bottom
        pts[:, -1, :] = bd.top
        pts[0, :, :] = bd.left
        pts[-1, :, :] = bd.right

    ni, nj = bd.ni, bd.nj
    x = pts[:, :, 0]
    y = pts[:, :, 1]
    history = []

    for sweep in range(iterations):
        # Coefficients frozen from the state at the start of the sweep.
        x_xi = 0.5 * (x[2:, 1:-1] - x[:-2, 1:-1])
        x_eta = 0.5 * (x[1:-1, 2:] - x[1:-1, :-2])
        y_xi = 0.5 * (y[2:, 1:-1] - y[:-2, 1:-1])
        y_eta = 0.5 * (y[1:-1, 2:] - y[1:-1, :-2])
        alpha = x_eta * x_eta + y_eta * y_eta
        beta = x_xi * x_eta + y_xi * y_eta
        gamma = x_xi * x_xi + y_xi * y_xi

        max_delta = 0.0
        for i in range(1, ni - 1):
            ai = alpha[i - 1]
            bi = beta[i - 1]
            gi = gamma[i - 1]
            for j in range(1, nj - 1):
                a = ai[j - 1]
                b = bi[j - 1]
                c = gi[j - 1]
                den = 2.0 * (a + c)
                if den < 1e-14:
                    # Zero-initialized far-field nodes have no signal yet;
                    # fall back to a Laplace average to seed them.
                    a = c = 0.5
                    b = 0.0
                    den = 2.0
                cross_x = (x[i + 1, j + 1] - x[i + 1, j - 1]
                           - x[i - 1, j + 1] + x[i - 1, j - 1])
                cross_y = (y[i + 1, j + 1] - y[i + 1, j - 1]
                           - y[i - 1, j + 1] + y[i - 1, j - 1])
                xn = (a * (x[i + 1, j] + x[i - 1, j])
                      + c * (x[i, j + 1] + x[i, j - 1])
                      - 0.5 * b * cross_x) / den
                yn = (a * (y[i + 1, j] + y[i - 1, j])
                      + c * (y[i, j + 1] + y[i, j - 1])
                      - 0.5 * b * cross_y) / den
                dx = omega * (xn - x[i, j])
                dy = omega * (yn - y[i, j])
                x[i, j] += dx
                y[i, j] += dy
                ad = abs(dx)
                if ad > max_delta:
                    max_delta = ad
                ad = abs(dy)
                if ad > max_delta:
                    max_delta = ad
        if not np.isfinite(max_delta) or not np.isfinite(x).all():
            raise DivergedIteration(sweep)
        history.append(max_delta)

    return StructuredMesh(pts), history
