"""The coordinate-mapping network and its exact differentiation engine.

Two independent sub-networks map the computational point (xi, eta) to the
physical coordinates x and y.  Each sub-network is a gated shortcut
architecture: two branch layers u and w are blended through per-stage
gates,

    u = tanh(W_b1 in + b_b1)
    w = tanh(W_b2 in + b_b2)
    h_1 = tanh(W_1 in + b_1)
    z_k = tanh(W'_k h_k + b'_k)          k = 1 .. L-1
    h_{k+1} = u + z_k * (w - u)
    out = W_out h_L + b_out

A plain multilayer variant (no branches, no gates) reuses the same
parameter container for ablation runs.

Everything here is evaluated in batched second-order jet arithmetic:
activations are arrays of shape (N, 6, width) whose middle axis holds
(value, d_xi, d_eta, d_xixi, d_xieta, d_etaeta).  Linear layers act
field-wise, tanh and the gate product follow the second-order chain and
product rules.  The backward pass is the exact adjoint of that forward
computation, derived layer by layer, so parameter gradients of any
functional of the output jets are exact up to round-off (no finite
differences anywhere in the training path).
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .errors import MeshFileError
from .jets import Jet2
from .mesh import StructuredMesh

__all__ = [
    "SubNetParams",
    "MeshNetParams",
    "subnet_param_count",
    "param_count",
    "init_params",
    "forward_jet_batch",
    "backward_params",
    "forward_batch",
    "forward",
    "forward_jet",
    "generate_mesh",
    "save_checkpoint",
    "load_checkpoint",
]

# Field order along axis 1 of every jet array.
_V, _XI, _ETA, _XIXI, _XIETA, _ETAETA = range(6)
_ARCHS = ("gated", "plain")


# ---------------------------------------------------------------------------
# Parameters

@dataclass
class SubNetParams:
    """Weights of one coordinate sub-network (see module docstring)."""

    w_b1: np.ndarray
    b_b1: np.ndarray
    w_b2: np.ndarray
    b_b2: np.ndarray
    w_h: np.ndarray
    b_h: np.ndarray
    gate_w: list
    gate_b: list
    w_out: np.ndarray
    b_out: np.ndarray

    def _parts(self) -> list:
        parts = [self.w_b1, self.b_b1, self.w_b2, self.b_b2, self.w_h, self.b_h]
        for wg, bg in zip(self.gate_w, self.gate_b):
            parts.extend([wg, bg])
        parts.extend([self.w_out, self.b_out])
        return parts

    def flatten(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self._parts()])


def subnet_param_count(layers: int, neurons: int) -> int:
    return 3 * (2 * neurons + neurons) + (layers - 1) * (neurons * neurons + neurons) \
        + neurons + 1


def param_count(layers: int, neurons: int) -> int:
    """Total parameter count over both coordinate sub-networks."""
    return 2 * subnet_param_count(layers, neurons)


def _subnet_from_flat(vec: np.ndarray, layers: int, neurons: int) -> SubNetParams:
    h = neurons
    pos = 0

    def take(shape):
        nonlocal pos
        size = int(np.prod(shape))
        out = vec[pos:pos + size].reshape(shape)
        pos += size
        return out

    w_b1, b_b1 = take((h, 2)), take((h,))
    w_b2, b_b2 = take((h, 2)), take((h,))
    w_h, b_h = take((h, 2)), take((h,))
    gate_w, gate_b = [], []
    for _ in range(layers - 1):
        gate_w.append(take((h, h)))
        gate_b.append(take((h,)))
    w_out, b_out = take((1, h)), take((1,))
    if pos != vec.size:
        raise ValueError(f"flat vector has {vec.size} entries, expected {pos}")
    return SubNetParams(w_b1, b_b1, w_b2, b_b2, w_h, b_h, gate_w, gate_b, w_out, b_out)


@dataclass
class MeshNetParams:
    """Parameters of both sub-networks plus the architecture description."""

    x_net: SubNetParams
    y_net: SubNetParams
    layers: int
    neurons: int
    arch: str = "gated"

    def __post_init__(self):
        if self.arch not in _ARCHS:
            raise ValueError(f"unknown arch {self.arch!r}")
        if self.layers < 1 or self.neurons < 1:
            raise ValueError("layers and neurons must be positive")

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.x_net.flatten(), self.y_net.flatten()])

    @staticmethod
    def from_flat(vec: np.ndarray, layers: int, neurons: int,
                  arch: str = "gated") -> "MeshNetParams":
        vec = np.asarray(vec, dtype=float)
        half = subnet_param_count(layers, neurons)
        if vec.size != 2 * half:
            raise ValueError(f"flat vector has {vec.size} entries, "
                             f"expected {2 * half}")
        return MeshNetParams(_subnet_from_flat(vec[:half], layers, neurons),
                             _subnet_from_flat(vec[half:], layers, neurons),
                             layers, neurons, arch)

    @property
    def n_params(self) -> int:
        return param_count(self.layers, self.neurons)


def init_params(layers: int = 4, neurons: int = 30, seed: int = 0,
                arch: str = "gated") -> MeshNetParams:
    """Glorot-uniform weights, zero biases, drawn in flattening order."""
    rng = np.random.default_rng(seed)
    h = neurons

    def glorot(fan_in, fan_out, shape):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, shape)

    def subnet():
        w_b1 = glorot(2, h, (h, 2))
        w_b2 = glorot(2, h, (h, 2))
        w_h = glorot(2, h, (h, 2))
        gate_w = [glorot(h, h, (h, h)) for _ in range(layers - 1)]
        w_out = glorot(h, 1, (1, h))
        return SubNetParams(w_b1, np.zeros(h), w_b2, np.zeros(h),
                            w_h, np.zeros(h), gate_w,
                            [np.zeros(h) for _ in range(layers - 1)],
                            w_out, np.zeros(1))

    return MeshNetParams(subnet(), subnet(), layers, neurons, arch)


# ---------------------------------------------------------------------------
# Batched jet primitives

def _input_jets(pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    n = pts.shape[0]
    x0 = np.zeros((n, 6, 2))
    x0[:, _V, :] = pts
    x0[:, _XI, 0] = 1.0
    x0[:, _ETA, 1] = 1.0
    return x0


def _lin(w, b, x):
    n, f, din = x.shape
    y = (x.reshape(n * f, din) @ w.T).reshape(n, f, w.shape[0])
    y[:, _V, :] += b
    return y


def _lin_bwd(w, x, ybar):
    n, f, dout = ybar.shape
    y2 = ybar.reshape(n * f, dout)
    x2 = x.reshape(n * f, x.shape[2])
    wbar = y2.T @ x2
    bbar = ybar[:, _V, :].sum(axis=0)
    xbar = (y2 @ w).reshape(n, f, w.shape[1])
    return xbar, wbar, bbar


def _jtanh(a):
    s = np.tanh(a[:, _V])
    s1 = 1.0 - s * s
    s2 = -2.0 * s * s1
    t = np.empty_like(a)
    t[:, _V] = s
    t[:, _XI] = s1 * a[:, _XI]
    t[:, _ETA] = s1 * a[:, _ETA]
    t[:, _XIXI] = s2 * a[:, _XI] * a[:, _XI] + s1 * a[:, _XIXI]
    t[:, _XIETA] = s2 * a[:, _XI] * a[:, _ETA] + s1 * a[:, _XIETA]
    t[:, _ETAETA] = s2 * a[:, _ETA] * a[:, _ETA] + s1 * a[:, _ETAETA]
    return t


def _jtanh_bwd(tbar, a, s):
    # s, s1, s2, s3 are tanh and its first three derivatives at a's value.
    s1 = 1.0 - s * s
    s2 = -2.0 * s * s1
    s3 = -2.0 * s1 * (1.0 - 3.0 * s * s)
    p, q = a[:, _XI], a[:, _ETA]
    r, m, n = a[:, _XIXI], a[:, _XIETA], a[:, _ETAETA]
    abar = np.empty_like(a)
    abar[:, _V] = (tbar[:, _V] * s1
                   + s2 * (tbar[:, _XI] * p + tbar[:, _ETA] * q)
                   + tbar[:, _XIXI] * (s3 * p * p + s2 * r)
                   + tbar[:, _XIETA] * (s3 * p * q + s2 * m)
                   + tbar[:, _ETAETA] * (s3 * q * q + s2 * n))
    abar[:, _XI] = tbar[:, _XI] * s1 + 2.0 * s2 * p * tbar[:, _XIXI] + s2 * q * tbar[:, _XIETA]
    abar[:, _ETA] = tbar[:, _ETA] * s1 + s2 * p * tbar[:, _XIETA] + 2.0 * s2 * q * tbar[:, _ETAETA]
    abar[:, _XIXI] = tbar[:, _XIXI] * s1
    abar[:, _XIETA] = tbar[:, _XIETA] * s1
    abar[:, _ETAETA] = tbar[:, _ETAETA] * s1
    return abar


def _jmul(a, b):
    c = np.empty_like(a)
    c[:, _V] = a[:, _V] * b[:, _V]
    c[:, _XI] = a[:, _XI] * b[:, _V] + a[:, _V] * b[:, _XI]
    c[:, _ETA] = a[:, _ETA] * b[:, _V] + a[:, _V] * b[:, _ETA]
    c[:, _XIXI] = (a[:, _XIXI] * b[:, _V] + 2.0 * a[:, _XI] * b[:, _XI]
                   + a[:, _V] * b[:, _XIXI])
    c[:, _XIETA] = (a[:, _XIETA] * b[:, _V] + a[:, _XI] * b[:, _ETA]
                    + a[:, _ETA] * b[:, _XI] + a[:, _V] * b[:, _XIETA])
    c[:, _ETAETA] = (a[:, _ETAETA] * b[:, _V] + 2.0 * a[:, _ETA] * b[:, _ETA]
                     + a[:, _V] * b[:, _ETAETA])
    return c


def _jmul_bwd_one(cbar, other):
    # Adjoint of one factor of the jet product; symmetric in the factors.
    out = np.empty_like(cbar)
    out[:, _V] = (cbar[:, _V] * other[:, _V]
                  + cbar[:, _XI] * other[:, _XI]
                  + cbar[:, _ETA] * other[:, _ETA]
                  + cbar[:, _XIXI] * other[:, _XIXI]
                  + cbar[:, _XIETA] * other[:, _XIETA]
                  + cbar[:, _ETAETA] * other[:, _ETAETA])
    out[:, _XI] = (cbar[:, _XI] * other[:, _V]
                   + 2.0 * cbar[:, _XIXI] * other[:, _XI]
                   + cbar[:, _XIETA] * other[:, _ETA])
    out[:, _ETA] = (cbar[:, _ETA] * other[:, _V]
                    + cbar[:, _XIETA] * other[:, _XI]
                    + 2.0 * cbar[:, _ETAETA] * other[:, _ETA])
    out[:, _XIXI] = cbar[:, _XIXI] * other[:, _V]
    out[:, _XIETA] = cbar[:, _XIETA] * other[:, _V]
    out[:, _ETAETA] = cbar[:, _ETAETA] * other[:, _V]
    return out


def _jmul_bwd(cbar, a, b):
    return _jmul_bwd_one(cbar, b), _jmul_bwd_one(cbar, a)


# ---------------------------------------------------------------------------
# Sub-network forward / backward

def _subnet_forward(p: SubNetParams, x0: np.ndarray, arch: str):
    if arch == "plain":
        pres = [_lin(p.w_h, p.b_h, x0)]
        hs = [_jtanh(pres[0])]
        for wg, bg in zip(p.gate_w, p.gate_b):
            pres.append(_lin(wg, bg, hs[-1]))
            hs.append(_jtanh(pres[-1]))
        out = _lin(p.w_out, p.b_out, hs[-1])
        return out[:, :, 0], ("plain", x0, pres, hs)

    a_u = _lin(p.w_b1, p.b_b1, x0)
    u = _jtanh(a_u)
    a_w = _lin(p.w_b2, p.b_b2, x0)
    w = _jtanh(a_w)
    a_h = _lin(p.w_h, p.b_h, x0)
    h = _jtanh(a_h)
    d = w - u
    hs = [h]
    gates = []
    for wg, bg in zip(p.gate_w, p.gate_b):
        g = _lin(wg, bg, hs[-1])
        z = _jtanh(g)
        hs.append(u + _jmul(z, d))
        gates.append((g, z))
    out = _lin(p.w_out, p.b_out, hs[-1])
    return out[:, :, 0], ("gated", x0, a_u, u, a_w, w, a_h, d, hs, gates)


def _subnet_backward(p: SubNetParams, cache, out_bar: np.ndarray) -> np.ndarray:
    """Exact adjoint of `_subnet_forward`; returns the flat parameter gradient."""
    kind = cache[0]
    grads = []

    if kind == "plain":
        _, x0, pres, hs = cache
        hbar = None
        # Output layer first, then walk the stack backwards.
        hbar, w_out_bar, b_out_bar = _lin_bwd(p.w_out, hs[-1], out_bar[:, :, None])
        gate_grads = []
        for k in range(len(p.gate_w) - 1, -1, -1):
            abar = _jtanh_bwd(hbar, pres[k + 1], hs[k + 1][:, _V])
            hbar, wg_bar, bg_bar = _lin_bwd(p.gate_w[k], hs[k], abar)
            gate_grads.append((wg_bar, bg_bar))
        abar = _jtanh_bwd(hbar, pres[0], hs[0][:, _V])
        _, w_h_bar, b_h_bar = _lin_bwd(p.w_h, x0, abar)
        zb1 = np.zeros_like(p.w_b1)
        zb1b = np.zeros_like(p.b_b1)
        grads = [zb1, zb1b, np.zeros_like(p.w_b2), np.zeros_like(p.b_b2),
                 w_h_bar, b_h_bar]
        for wg_bar, bg_bar in reversed(gate_grads):
            grads.extend([wg_bar, bg_bar])
        grads.extend([w_out_bar, b_out_bar])
        return np.concatenate([g.ravel() for g in grads])

    _, x0, a_u, u, a_w, w, a_h, d, hs, gates = cache
    hbar, w_out_bar, b_out_bar = _lin_bwd(p.w_out, hs[-1], out_bar[:, :, None])
    ubar = np.zeros_like(u)
    dbar = np.zeros_like(d)
    gate_grads = []
    for k in range(len(gates) - 1, -1, -1):
        g, z = gates[k]
        # h_{k+1} = u + z * d in jet arithmetic.
        ubar += hbar
        zbar, dbar_k = _jmul_bwd(hbar, z, d)
        dbar += dbar_k
        gbar = _jtanh_bwd(zbar, g, z[:, _V])
        hbar, wg_bar, bg_bar = _lin_bwd(p.gate_w[k], hs[k], gbar)
        gate_grads.append((wg_bar, bg_bar))

    abar = _jtanh_bwd(hbar, a_h, hs[0][:, _V])
    _, w_h_bar, b_h_bar = _lin_bwd(p.w_h, x0, abar)

    # d = w - u feeds every gate stage.
    wbar_jet = dbar
    ubar = ubar - dbar
    if gates:
        a_u_bar = _jtanh_bwd(ubar, a_u, u[:, _V])
        _, w_b1_bar, b_b1_bar = _lin_bwd(p.w_b1, x0, a_u_bar)
        a_w_bar = _jtanh_bwd(wbar_jet, a_w, w[:, _V])
        _, w_b2_bar, b_b2_bar = _lin_bwd(p.w_b2, x0, a_w_bar)
    else:
        w_b1_bar, b_b1_bar = np.zeros_like(p.w_b1), np.zeros_like(p.b_b1)
        w_b2_bar, b_b2_bar = np.zeros_like(p.w_b2), np.zeros_like(p.b_b2)

    grads = [w_b1_bar, b_b1_bar, w_b2_bar, b_b2_bar, w_h_bar, b_h_bar]
    for wg_bar, bg_bar in reversed(gate_grads):
        grads.extend([wg_bar, bg_bar])
    grads.extend([w_out_bar, b_out_bar])
    return np.concatenate([g.ravel() for g in grads])


# ---------------------------------------------------------------------------
# Public evaluation API

def forward_jet_batch(net: MeshNetParams, pts) -> tuple:
    """Evaluate both coordinate jets at pts (N, 2).

    Returns (xjets, yjets, cache) where the jet arrays have shape (N, 6)
    ordered (value, d_xi, d_eta, d_xixi, d_xieta, d_etaeta) and cache feeds
    `backward_params`.
    """
    x0 = _input_jets(np.atleast_2d(pts))
    xj, cx = _subnet_forward(net.x_net, x0, net.arch)
    yj, cy = _subnet_forward(net.y_net, x0, net.arch)
    return xj, yj, (cx, cy)


def backward_params(net: MeshNetParams, cache, xbar, ybar) -> np.ndarray:
    """Exact parameter gradient given adjoints of the output jet fields.

    xbar and ybar have shape (N, 6): the partial derivative of the scalar
    objective with respect to each output jet field at each point.
    """
    gx = _subnet_backward(net.x_net, cache[0], np.asarray(xbar, dtype=float))
    gy = _subnet_backward(net.y_net, cache[1], np.asarray(ybar, dtype=float))
    return np.concatenate([gx, gy])


def forward_batch(net: MeshNetParams, pts) -> np.ndarray:
    """Physical coordinates (N, 2) at computational points (N, 2)."""
    xj, yj, _ = forward_jet_batch(net, pts)
    return np.column_stack([xj[:, _V], yj[:, _V]])


def forward(net: MeshNetParams, xi: float, eta: float) -> tuple:
    """Value of the map at a single point; same arithmetic path as the jets."""
    out = forward_batch(net, np.array([[xi, eta]]))
    return float(out[0, 0]), float(out[0, 1])


def forward_jet(net: MeshNetParams, xi: float, eta: float) -> tuple:
    """Full second-order jets of both coordinates at a single point."""
    xj, yj, _ = forward_jet_batch(net, np.array([[xi, eta]]))
    return Jet2(*xj[0]), Jet2(*yj[0])


def generate_mesh(net: MeshNetParams, ni: int, nj: int,
                  snap_boundary: bool = False, fit=None) -> StructuredMesh:
    """Evaluate the map on the uniform ni-by-nj computational grid.

    With snap_boundary the border nodes are replaced by the boundary-fit
    predictions at the grid parameters, which pins the mesh edge to the
    fitted boundary regardless of residual training error.
    """
    if ni < 2 or nj < 2:
        raise ValueError("ni and nj must be at least 2")
    xi = np.linspace(0.0, 1.0, ni)
    eta = np.linspace(0.0, 1.0, nj)
    gx, gy = np.meshgrid(xi, eta, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    vals = forward_batch(net, pts)
    points = vals.reshape(ni, nj, 2)

    if snap_boundary:
        if fit is None:
            raise ValueError("snap_boundary requires a BoundaryFit")
        bx, by = fit.predict("bottom", xi)
        points[:, 0, 0], points[:, 0, 1] = bx, by
        tx, ty = fit.predict("top", xi)
        points[:, -1, 0], points[:, -1, 1] = tx, ty
        lx, ly = fit.predict("left", eta)
        points[0, :, 0], points[0, :, 1] = lx, ly
        rx, ry = fit.predict("right", eta)
        points[-1, :, 0], points[-1, :, 1] = rx, ry
    return StructuredMesh(points)


# ---------------------------------------------------------------------------
# Checkpoints

_CKPT_FORMAT = "pinnmesh-net"
_CKPT_VERSION = 1


def save_checkpoint(net: MeshNetParams, path, seed=None) -> None:
    """Write parameters as JSON; float round-trip is exact."""
    doc = {
        "format": _CKPT_FORMAT,
        "format_version": _CKPT_VERSION,
        "layers": net.layers,
        "neurons": net.neurons,
        "arch": net.arch,
        "seed": seed,
        "params": net.flatten().tolist(),
    }
    path = os.fspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(doc, fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path) -> tuple:
    """Read a checkpoint; returns (params, metadata dict)."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MeshFileError(f"checkpoint is not valid JSON: {exc}") from exc
    if doc.get("format") != _CKPT_FORMAT:
        raise MeshFileError("not a network checkpoint file")
    if doc.get("format_version") != _CKPT_VERSION:
        raise MeshFileError(f"unsupported checkpoint version {doc.get('format_version')}")
    try:
        net = MeshNetParams.from_flat(np.array(doc["params"], dtype=float),
                                      int(doc["layers"]), int(doc["neurons"]),
                                      doc.get("arch", "gated"))
    except (KeyError, ValueError) as exc:
        raise MeshFileError(f"malformed checkpoint: {exc}") from exc
    meta = {"seed": doc.get("seed"), "layers": net.layers,
            "neurons": net.neurons, "arch": net.arch}
    return net, meta
