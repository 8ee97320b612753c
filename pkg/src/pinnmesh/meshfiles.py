"""Mesh serialization: legacy VTK, 2-D Plot3D, and SVG line renders.

All writers are byte-deterministic: coordinates are printed with %.17g
(lossless for doubles) and node traversal is j-major (j outer, i inner).
The readers parse exactly what the writers emit, for round trips and for
the evaluate command.
"""

from __future__ import annotations

import numpy as np

from .errors import MeshFileError
from .mesh import StructuredMesh

__all__ = [
    "write_vtk",
    "read_vtk",
    "write_p3d",
    "read_p3d",
    "render_svg",
    "write_svg",
    "write_mesh",
    "read_mesh",
    "format_suffix",
]

_FMT = "%.17g"


def _g(v: float) -> str:
    return _FMT % v


def write_vtk(mesh: StructuredMesh, path) -> None:
    """Legacy ASCII structured grid with z = 0."""
    ni, nj = mesh.ni, mesh.nj
    lines = [
        "# vtk DataFile Version 3.0",
        "pinnmesh structured grid",
        "ASCII",
        "DATASET STRUCTURED_GRID",
        f"DIMENSIONS {ni} {nj} 1",
        f"POINTS {ni * nj} double",
    ]
    pts = mesh.points
    for j in range(nj):
        for i in range(ni):
            lines.append(f"{_g(pts[i, j, 0])} {_g(pts[i, j, 1])} 0")
    data = "\n".join(lines) + "\n"
    with open(path, "w", newline="\n") as fh:
        fh.write(data)


def read_vtk(path) -> StructuredMesh:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    try:
        if not lines[0].startswith("# vtk DataFile"):
            raise MeshFileError("missing vtk header")
        if lines[2] != "ASCII" or lines[3] != "DATASET STRUCTURED_GRID":
            raise MeshFileError("not an ASCII structured grid")
        dims = lines[4].split()
        if dims[0] != "DIMENSIONS":
            raise MeshFileError("missing DIMENSIONS")
        ni, nj, nk = int(dims[1]), int(dims[2]), int(dims[3])
        if nk != 1:
            raise MeshFileError("only single-plane grids are supported")
        count = int(lines[5].split()[1])
        if count != ni * nj:
            raise MeshFileError("POINTS count disagrees with DIMENSIONS")
        vals = [ln.split() for ln in lines[6:6 + count]]
        if len(vals) != count:
            raise MeshFileError("truncated point list")
        pts = np.empty((ni, nj, 2))
        k = 0
        for j in range(nj):
            for i in range(ni):
                pts[i, j, 0] = float(vals[k][0])
                pts[i, j, 1] = float(vals[k][1])
                k += 1
    except (IndexError, ValueError) as exc:
        raise MeshFileError(f"malformed vtk file: {exc}") from exc
    return StructuredMesh(pts)


def write_p3d(mesh: StructuredMesh, path) -> None:
    """2-D single-block ASCII Plot3D: header, then all x, then all y."""
    ni, nj = mesh.ni, mesh.nj
    lines = [f"{ni} {nj}"]
    pts = mesh.points
    for c in range(2):
        for j in range(nj):
            for i in range(ni):
                lines.append(_g(pts[i, j, c]))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_p3d(path) -> StructuredMesh:
    with open(path) as fh:
        tokens = fh.read().split()
    try:
        ni, nj = int(tokens[0]), int(tokens[1])
        vals = np.array([float(t) for t in tokens[2:]])
        if vals.size != 2 * ni * nj:
            raise MeshFileError(
                f"expected {2 * ni * nj} coordinates, found {vals.size}")
        pts = np.empty((ni, nj, 2))
        for c in range(2):
            block = vals[c * ni * nj:(c + 1) * ni * nj].reshape(nj, ni)
            pts[:, :, c] = block.T
    except (IndexError, ValueError) as exc:
        raise MeshFileError(f"malformed plot3d file: {exc}") from exc
    return StructuredMesh(pts)


def render_svg(mesh: StructuredMesh, width_px: int = 800,
               stroke: str = "black") -> str:
    """Both grid line families as polylines, y axis flipped for display.

    The viewBox is the mesh bounding box padded by 2 percent per side.
    An ni-by-nj mesh renders exactly ni + nj polylines.
    """
    pts = mesh.points
    xmin, ymin = pts.reshape(-1, 2).min(axis=0)
    xmax, ymax = pts.reshape(-1, 2).max(axis=0)
    w = xmax - xmin
    h = ymax - ymin
    mx = 0.02 * (w if w > 0 else 1.0)
    my = 0.02 * (h if h > 0 else 1.0)
    vb_w = w + 2 * mx
    vb_h = h + 2 * my
    height_px = max(1, round(width_px * vb_h / vb_w))
    stroke_width = 0.002 * max(vb_w, vb_h)

    def poly(run):
        coords = " ".join(f"{_g(p[0])},{_g(p[1])}" for p in run)
        return f'<polyline fill="none" points="{coords}"/>'

    body = []
    for j in range(mesh.nj):
        body.append(poly(pts[:, j]))
    for i in range(mesh.ni):
        body.append(poly(pts[i, :]))

    view = f"{_g(xmin - mx)} {_g(-(ymax + my))} {_g(vb_w)} {_g(vb_h)}"
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width_px}" '
            f'height="{height_px}" viewBox="{view}">\n'
            f'<g transform="scale(1,-1)" stroke="{stroke}" '
            f'stroke-width="{_g(stroke_width)}" stroke-linejoin="round">\n')
    return head + "\n".join(body) + "\n</g>\n</svg>\n"


def write_svg(mesh: StructuredMesh, path, width_px: int = 800,
              stroke: str = "black") -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(render_svg(mesh, width_px, stroke))


_WRITERS = {"vtk": write_vtk, "p3d": write_p3d, "svg": write_svg}
_READERS = {"vtk": read_vtk, "p3d": read_p3d}
_SUFFIXES = {"vtk": ".vtk", "p3d": ".p3d", "svg": ".svg"}


def _infer_format(path) -> str | None:
    name = str(path).lower()
    for key, suf in _SUFFIXES.items():
        if name.endswith(suf):
            return key
    return None


def write_mesh(mesh: StructuredMesh, path, fmt: str | None = None) -> None:
    """Write a mesh, inferring the format from the suffix when not given."""
    if fmt is None:
        fmt = _infer_format(path)
    if fmt not in _WRITERS:
        raise MeshFileError(f"cannot write mesh format {fmt!r}")
    _WRITERS[fmt](mesh, path)


def read_mesh(path, fmt: str | None = None) -> StructuredMesh:
    """Read a mesh, inferring the format from the suffix when not given."""
    if fmt is None:
        fmt = _infer_format(path)
    if fmt not in _READERS:
        raise MeshFileError(f"cannot read mesh format {fmt!r}")
    return _READERS[fmt](path)


def format_suffix(fmt: str) -> str:
    if fmt not in _SUFFIXES:
        raise MeshFileError(f"unknown mesh format {fmt!r}")
    return _SUFFIXES[fmt]
