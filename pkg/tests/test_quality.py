import json
import math

import numpy as np
import pytest

from pinnmesh.errors import DegenerateCell
from pinnmesh.mesh import StructuredMesh
from pinnmesh.quality import (cell_angles, compare_reports, evaluate_mesh,
                              signed_area)

from conftest import uniform_mesh_points


def reference_angles(quad):
    """Independent interior-angle computation via the law of cosines,
    promoting the angle to its reflex complement when the corner bulges
    inward (negative cross product for a counterclockwise quad)."""
    out = []
    for k in range(4):
        p = np.asarray(quad[k], dtype=float)
        a = np.asarray(quad[(k - 1) % 4], dtype=float) - p
        b = np.asarray(quad[(k + 1) % 4], dtype=float) - p
        cosv = np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b))
        ang = math.degrees(math.acos(np.clip(cosv, -1.0, 1.0)))
        if a[0] * b[1] - a[1] * b[0] > 0:
            ang = 360.0 - ang
        out.append(ang)
    return np.array(out)


def test_signed_area():
    unit = [(0, 0), (1, 0), (1, 1), (0, 1)]
    assert signed_area(unit) == pytest.approx(1.0)
    assert signed_area(unit[::-1]) == pytest.approx(-1.0)


def test_square_cell_angles():
    quad = [(0, 0), (1, 0), (1, 1), (0, 1)]
    assert np.allclose(cell_angles(quad), 90.0)


def test_trapezoid_cell_angles():
    quad = [(0, 0), (2, 0), (1, 1), (0, 1)]
    assert np.allclose(np.sort(cell_angles(quad)),
                       np.sort(reference_angles(quad)), atol=1e-12)
    assert cell_angles(quad).sum() == pytest.approx(360.0)


def test_dart_reflex_angle():
    quad = [(0, 0), (2, 1), (4, 0), (2, 2)]
    angles = cell_angles(quad)
    assert np.allclose(np.sort(angles), np.sort(reference_angles(quad)),
                       atol=1e-10)
    assert angles.max() == pytest.approx(360.0 - math.degrees(
        math.acos(-3.0 / 5.0)), abs=1e-9)
    assert angles.sum() == pytest.approx(360.0)


def test_degenerate_edge_raises():
    with pytest.raises(DegenerateCell):
        cell_angles([(0, 0), (0, 0), (1, 1), (0, 1)])


def test_random_cells_match_reference():
    rng = np.random.default_rng(0)
    checked = 0
    while checked < 200:
        quad = rng.random((4, 2)) * 2.0
        if signed_area(quad) <= 0.05:
            continue  # keep counterclockwise, non-needle quads
        got = cell_angles(quad)
        ref = reference_angles(quad)
        assert np.allclose(got, ref, atol=1e-9)
        checked += 1


def test_uniform_mesh_report():
    mesh = StructuredMesh(uniform_mesh_points(5, 4))
    rep = evaluate_mesh(mesh)
    assert rep.n_cells == 12
    assert rep.max_angle == pytest.approx(90.0)
    assert rep.mean_max_angle == pytest.approx(90.0)
    assert rep.inverted_cells == 0
    assert rep.nonconvex_cells == 0
    assert rep.degenerate_cells == 0
    assert rep.orientation == 1
    assert rep.histogram.sum() == 12
    assert rep.histogram[18] == 12  # the 90-95 degree bin


def test_report_mirror_invariance():
    rng = np.random.default_rng(1)
    pts = uniform_mesh_points(7, 6)
    pts[1:-1, 1:-1] += rng.normal(scale=0.03, size=pts[1:-1, 1:-1].shape)
    rep = evaluate_mesh(StructuredMesh(pts))
    flipped = pts.copy()
    flipped[:, :, 0] *= -1.0
    rep_f = evaluate_mesh(StructuredMesh(flipped))
    assert rep_f.orientation == -rep.orientation
    assert rep_f.max_angle == pytest.approx(rep.max_angle, abs=1e-9)
    assert rep_f.mean_max_angle == pytest.approx(rep.mean_max_angle,
                                                 abs=1e-9)
    assert rep_f.inverted_cells == rep.inverted_cells
    assert np.array_equal(rep_f.histogram, rep.histogram)


def test_folded_mesh_counts_inverted():
    pts = uniform_mesh_points(4, 4)
    pts[1, 1] = (2.0, 2.0)  # drag one interior node far outside
    rep = evaluate_mesh(StructuredMesh(pts))
    # Independent count: shoelace sign per cell.
    inv = 0
    for i in range(3):
        for j in range(3):
            quad = [pts[i, j], pts[i + 1, j], pts[i + 1, j + 1],
                    pts[i, j + 1]]
            if signed_area(quad) <= 0:
                inv += 1
    assert inv > 0
    assert rep.inverted_cells == inv


def test_degenerate_cells_reported_not_raised():
    pts = uniform_mesh_points(3, 3).astype(float)
    pts[1, 0] = pts[0, 0]  # collapse one edge
    rep = evaluate_mesh(StructuredMesh(pts))
    assert rep.degenerate_cells == 1
    assert rep.n_cells == 4
    assert math.isnan(rep.per_cell_max[0, 0])
    assert rep.histogram.sum() == 3


def test_report_json_and_table():
    mesh = StructuredMesh(uniform_mesh_points(4, 4))
    rep = evaluate_mesh(mesh)
    doc = json.loads(rep.to_json())
    assert doc["n_cells"] == 9
    assert doc["max_angle_deg"] == pytest.approx(90.0)
    text = rep.to_table()
    assert "max included angle" in text
    assert "inverted" in text
    rows = rep.histogram_rows()
    assert len(rows) == 72
    assert rows[18] == (90.0, 95.0, 9)


def test_report_json_handles_all_degenerate():
    pts = np.zeros((2, 2, 2))
    rep = evaluate_mesh(StructuredMesh(pts))
    doc = json.loads(rep.to_json())
    assert rep.degenerate_cells == 1
    assert doc["max_angle_deg"] is None


def test_compare_reports():
    a = evaluate_mesh(StructuredMesh(uniform_mesh_points(4, 4)))
    pts = uniform_mesh_points(4, 4)
    pts[1, 1] += 0.2
    b = evaluate_mesh(StructuredMesh(pts))
    delta = compare_reports(b, a)
    assert delta.delta_max_angle == pytest.approx(b.max_angle - 90.0)
    assert delta.delta_inverted == 0
    assert "max included angle" in delta.to_table("b", "a")
