"""Domain geometry: boundary polylines, regression-tree boundary fits, samplers.

A domain is described by four control polylines (bottom, top, left, right)
in a consistent orientation: bottom and top run left to right, left and
right run bottom to top.  Each side is parameterized uniformly by control
point index, t_k = k / (n - 1), and fitted per coordinate with a small
regression tree, which gives a cheap, deterministic lookup for boundary
targets at arbitrary parameter values.

Auxiliary lines are optional interior polylines pinned to a fixed
computational coordinate; they supply extra supervision for the trainer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyTrainingSet, InvalidGeometry

__all__ = [
    "SIDES",
    "ControlPolyline",
    "AuxiliaryLine",
    "GeometrySpec",
    "RegressionTree",
    "BoundaryFit",
    "parameterize_boundary",
    "fit_regression_tree",
    "build_boundary_fit",
    "sample_boundary",
    "sample_auxiliary",
    "validate_geometry",
    "geometry_from_dict",
    "load_geometry",
]

SIDES = ("bottom", "top", "left", "right")

_CORNER_TOL = 1e-9


def _as_points(points) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InvalidGeometry("points must be an (n, 2) array of x, y pairs")
    return arr


@dataclass
class ControlPolyline:
    """An ordered run of control points along one side of the domain."""

    side: str
    points: np.ndarray

    def __post_init__(self):
        if self.side not in SIDES:
            raise InvalidGeometry(f"unknown side {self.side!r}")
        self.points = _as_points(self.points)

    @property
    def n(self) -> int:
        return self.points.shape[0]


@dataclass
class AuxiliaryLine:
    """An interior polyline pinned to a fixed computational coordinate.

    fixed_axis is "xi" or "eta"; fixed_value is the pinned coordinate in
    (0, 1).  The free computational coordinate of a sample equals its
    normalized arc length along the polyline.
    """

    points: np.ndarray
    fixed_axis: str
    fixed_value: float

    def __post_init__(self):
        self.points = _as_points(self.points)
        if self.fixed_axis not in ("xi", "eta"):
            raise InvalidGeometry(
                f"auxiliary line fixed_axis must be 'xi' or 'eta', got {self.fixed_axis!r}")
        self.fixed_value = float(self.fixed_value)


@dataclass
class GeometrySpec:
    """Four boundary polylines plus optional auxiliary lines."""

    boundaries: dict
    aux_lines: list = field(default_factory=list)

    def side(self, name: str) -> ControlPolyline:
        return self.boundaries[name]


def parameterize_boundary(polyline: ControlPolyline) -> np.ndarray:
    """Uniform-by-index parameter values t_k = k / (n - 1) for each control point."""
    n = polyline.n
    if n < 2:
        raise InvalidGeometry(f"side {polyline.side!r} needs at least 2 points")
    return np.arange(n, dtype=float) / (n - 1)


# ---------------------------------------------------------------------------
# Regression trees


@dataclass
class _Leaf:
    value: float
    count: int


@dataclass
class _Split:
    threshold: float
    left: object
    right: object


@dataclass
class RegressionTree:
    """A 1-D piecewise-constant regressor fitted by greedy SSE splitting."""

    root: object
    max_depth: int
    min_leaf: int

    def predict(self, t: float) -> float:
        node = self.root
        while isinstance(node, _Split):
            node = node.left if t < node.threshold else node.right
        return node.value

    def predict_many(self, ts) -> np.ndarray:
        return np.array([self.predict(float(t)) for t in np.asarray(ts).ravel()])

    def depth(self) -> int:
        def rec(node):
            if isinstance(node, _Leaf):
                return 0
            return 1 + max(rec(node.left), rec(node.right))
        return rec(self.root)

    def leaf_counts(self) -> list:
        out = []

        def rec(node):
            if isinstance(node, _Leaf):
                out.append(node.count)
            else:
                rec(node.left)
                rec(node.right)
        rec(self.root)
        return out


def fit_regression_tree(samples, max_depth: int = 12, min_leaf: int = 1) -> RegressionTree:
    """Fit a piecewise-constant tree to (t, target) samples.

    Split candidates are midpoints between consecutive distinct sorted t
    values; the best split minimizes the summed SSE of the two children,
    ties broken toward the smaller threshold.  Recursion stops at
    max_depth, when a child would fall below min_leaf samples, or when no
    split reduces the SSE.
    """
    arr = np.asarray(list(samples), dtype=float)
    if arr.size == 0:
        raise EmptyTrainingSet("no samples to fit")
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("samples must be (t, target) pairs")
    if max_depth < 0 or min_leaf < 1:
        raise ValueError("max_depth must be >= 0 and min_leaf >= 1")

    order = np.argsort(arr[:, 0], kind="stable")
    ts = arr[order, 0]
    ys = arr[order, 1]

    def build(lo: int, hi: int, depth: int):
        n = hi - lo
        seg = ys[lo:hi]
        mean = float(seg.mean())
        if depth >= max_depth or n < 2 * min_leaf or seg.min() == seg.max():
            return _Leaf(mean, n)

        # Prefix sums give O(1) SSE for every candidate split.
        c1 = np.cumsum(seg)
        c2 = np.cumsum(seg * seg)
        total1 = c1[-1]
        total2 = c2[-1]
        parent_sse = total2 - total1 * total1 / n

        best_sse = None
        best_k = None
        for k in range(min_leaf, n - min_leaf + 1):
            if ts[lo + k] == ts[lo + k - 1]:
                continue
            left1, left2 = c1[k - 1], c2[k - 1]
            sse_left = left2 - left1 * left1 / k
            right1 = total1 - left1
            right2 = total2 - left2
            sse_right = right2 - right1 * right1 / (n - k)
            sse = sse_left + sse_right
            if best_sse is None or sse < best_sse:
                best_sse = sse
                best_k = k

        # Stop on zero SSE reduction (guarding float noise near zero).
        if best_k is None or best_sse >= parent_sse - 1e-12 * abs(parent_sse) - 1e-300:
            return _Leaf(mean, n)
        thr = 0.5 * (ts[lo + best_k - 1] + ts[lo + best_k])
        return _Split(thr,
                      build(lo, lo + best_k, depth + 1),
                      build(lo + best_k, hi, depth + 1))

    return RegressionTree(build(0, len(ts), 0), max_depth, min_leaf)


@dataclass
class BoundaryFit:
    """Per-side regression trees for x(t) and y(t), eight trees total."""

    trees: dict
    max_depth: int
    min_leaf: int

    def predict(self, side: str, ts) -> tuple:
        tx, ty = self.trees[side]
        return tx.predict_many(ts), ty.predict_many(ts)

    def predict_point(self, side: str, t: float) -> tuple:
        tx, ty = self.trees[side]
        return tx.predict(t), ty.predict(t)


def build_boundary_fit(spec: GeometrySpec, max_depth: int = 12, min_leaf: int = 1) -> BoundaryFit:
    """Fit the eight boundary trees for a validated geometry."""
    violations = validate_geometry(spec)
    if violations:
        raise InvalidGeometry(violations)
    trees = {}
    for side in SIDES:
        poly = spec.side(side)
        t = parameterize_boundary(poly)
        tree_x = fit_regression_tree(np.column_stack([t, poly.points[:, 0]]),
                                     max_depth, min_leaf)
        tree_y = fit_regression_tree(np.column_stack([t, poly.points[:, 1]]),
                                     max_depth, min_leaf)
        trees[side] = (tree_x, tree_y)
    return BoundaryFit(trees, max_depth, min_leaf)


# ---------------------------------------------------------------------------
# Samplers

def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_boundary(fit: BoundaryFit, side: str, n: int, rng) -> np.ndarray:
    """Draw n boundary supervision rows (xi, eta, x_true, y_true) for one side.

    The free computational coordinate is uniform on [0, 1); the fixed one
    is 0 or 1 as dictated by the side.  Targets come from the side's trees.
    """
    if side not in SIDES:
        raise InvalidGeometry(f"unknown side {side!r}")
    gen = _rng(rng)
    t = gen.random(n)
    xs, ys = fit.predict(side, t)
    out = np.empty((n, 4))
    if side == "bottom":
        out[:, 0], out[:, 1] = t, 0.0
    elif side == "top":
        out[:, 0], out[:, 1] = t, 1.0
    elif side == "left":
        out[:, 0], out[:, 1] = 0.0, t
    else:
        out[:, 0], out[:, 1] = 1.0, t
    out[:, 2] = xs
    out[:, 3] = ys
    return out


def sample_auxiliary(line: AuxiliaryLine, n: int, rng) -> np.ndarray:
    """Draw n auxiliary rows (xi, eta, x_true, y_true) along an interior line.

    The free computational coordinate equals the draw s in [0, 1); the
    physical point sits at normalized arc length s along the polyline.
    """
    pts = line.points
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    total = float(seg.sum())
    if total <= 0.0:
        raise InvalidGeometry("auxiliary line has zero length")
    cum = np.concatenate([[0.0], np.cumsum(seg)]) / total
    gen = _rng(rng)
    s = gen.random(n)
    xs = np.interp(s, cum, pts[:, 0])
    ys = np.interp(s, cum, pts[:, 1])
    out = np.empty((n, 4))
    if line.fixed_axis == "xi":
        out[:, 0], out[:, 1] = line.fixed_value, s
    else:
        out[:, 0], out[:, 1] = s, line.fixed_value
    out[:, 2] = xs
    out[:, 3] = ys
    return out


# ---------------------------------------------------------------------------
# Validation and parsing

def validate_geometry(spec: GeometrySpec) -> list:
    """Return a list of violation strings; empty means the geometry is usable.

    Checks: all four sides present with >= 2 points each, finite
    coordinates, no repeated consecutive control points, the four corners
    close up within 1e-9 under the expected orientation, and auxiliary
    lines are well formed with fixed_value strictly inside (0, 1).
    """
    out = []
    for side in SIDES:
        if side not in spec.boundaries:
            out.append(f"missing side {side!r}")
    if out:
        return out

    for side in SIDES:
        poly = spec.side(side)
        pts = poly.points
        if pts.shape[0] < 2:
            out.append(f"side {side!r} has fewer than 2 control points")
            continue
        if not np.isfinite(pts).all():
            out.append(f"side {side!r} contains non-finite coordinates")
            continue
        dup = np.all(np.diff(pts, axis=0) == 0.0, axis=1)
        if dup.any():
            out.append(f"side {side!r} repeats consecutive control points")

    if out:
        return out

    b = spec.side("bottom").points
    t = spec.side("top").points
    l = spec.side("left").points
    r = spec.side("right").points
    corners = [
        ("bottom start vs left start", b[0], l[0]),
        ("bottom end vs right start", b[-1], r[0]),
        ("top start vs left end", t[0], l[-1]),
        ("top end vs right end", t[-1], r[-1]),
    ]
    for name, p, q in corners:
        gap = float(np.max(np.abs(p - q)))
        if gap > _CORNER_TOL:
            out.append(f"corner mismatch ({name}): gap {gap:.3e} exceeds {_CORNER_TOL:.0e}")

    for i, line in enumerate(spec.aux_lines):
        if line.points.shape[0] < 2:
            out.append(f"auxiliary line {i} has fewer than 2 points")
        elif not np.isfinite(line.points).all():
            out.append(f"auxiliary line {i} contains non-finite coordinates")
        if not (0.0 < line.fixed_value < 1.0):
            out.append(f"auxiliary line {i} fixed_value {line.fixed_value} "
                       "must lie strictly inside (0, 1)")
    return out


_TOP_KEYS = {"bottom", "top", "left", "right", "aux_lines"}
_AUX_KEYS = {"points", "fixed_axis", "fixed_value"}


def geometry_from_dict(doc: dict) -> GeometrySpec:
    """Parse the strict geometry document. Unknown keys are rejected."""
    if not isinstance(doc, dict):
        raise InvalidGeometry("geometry document must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise InvalidGeometry(f"unknown geometry keys: {sorted(unknown)}")
    missing = [s for s in SIDES if s not in doc]
    if missing:
        raise InvalidGeometry(f"missing sides: {missing}")

    boundaries = {side: ControlPolyline(side, doc[side]) for side in SIDES}
    aux = []
    for i, entry in enumerate(doc.get("aux_lines", [])):
        if not isinstance(entry, dict):
            raise InvalidGeometry(f"aux_lines[{i}] must be an object")
        unknown = set(entry) - _AUX_KEYS
        if unknown:
            raise InvalidGeometry(f"aux_lines[{i}] unknown keys: {sorted(unknown)}")
        missing = _AUX_KEYS - set(entry)
        if missing:
            raise InvalidGeometry(f"aux_lines[{i}] missing keys: {sorted(missing)}")
        aux.append(AuxiliaryLine(entry["points"], entry["fixed_axis"], entry["fixed_value"]))
    return GeometrySpec(boundaries, aux)


def load_geometry(path) -> GeometrySpec:
    """Read and parse a geometry JSON file."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InvalidGeometry(f"geometry file is not valid JSON: {exc}") from exc
    return geometry_from_dict(doc)
