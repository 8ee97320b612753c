import numpy as np
import pytest

from pinnmesh.geometry import geometry_from_dict


def polyline(xs, ys):
    return [[float(a), float(b)] for a, b in zip(xs, ys)]


def square_dict(n=33):
    t = np.arange(n) / (n - 1)
    return {
        "bottom": polyline(t, 0 * t),
        "top": polyline(t, 0 * t + 1.0),
        "left": polyline(0 * t, t),
        "right": polyline(0 * t + 1.0, t),
        "aux_lines": [],
    }


def sine_bottom_dict(n=33, amplitude=0.2, aux=True):
    """Channel with a sinusoidal lower wall and one optional guide line."""
    t = np.arange(n) / (n - 1)
    doc = {
        "bottom": polyline(t, amplitude * np.sin(np.pi * t)),
        "top": polyline(t, 0 * t + 1.0),
        "left": polyline(0 * t, t),
        "right": polyline(0 * t + 1.0, t),
        "aux_lines": [],
    }
    if aux:
        m = 2 * n - 1
        s = np.arange(m) / (m - 1)
        doc["aux_lines"].append({
            "points": polyline(s, 0.5 + 0.5 * amplitude * np.sin(np.pi * s)),
            "fixed_axis": "eta",
            "fixed_value": 0.5,
        })
    return doc


@pytest.fixture
def square_geom():
    return geometry_from_dict(square_dict())


@pytest.fixture
def channel_geom():
    return geometry_from_dict(sine_bottom_dict())


def uniform_mesh_points(ni, nj):
    xi = np.linspace(0.0, 1.0, ni)
    eta = np.linspace(0.0, 1.0, nj)
    gx, gy = np.meshgrid(xi, eta, indexing="ij")
    return np.stack([gx, gy], axis=-1)
