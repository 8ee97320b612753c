"""Composite training loss: interior residuals, boundary fits, auxiliary data.

The interior term drives the map toward a solution of the inverted
smoothing system

    alpha x_xixi - 2 beta x_xieta + gamma x_etaeta = 0   (same for y)

with coefficients built from first derivatives of the map.  The standard
coefficient set is

    alpha = x_eta^2 + y_eta^2
    beta  = x_xi x_eta + y_xi y_eta
    gamma = x_xi^2 + y_xi^2

A variant form with beta = x_xi x_eta + y_xi x_eta is kept behind the
``beta_form="variant"`` flag for fidelity experiments; it is not rotation
invariant and is never the default.

All terms are plain sums over their sample points (no averaging), summed
in fixed order so results are bit-stable.  Gradients are computed by the
exact adjoint engine in :mod:`pinnmesh.network`; the seed formulas below
are the hand-derived partials of each term with respect to the output jet
fields.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyBatch, NonFiniteGradient, NonFiniteLoss
from .jets import Jet2
from .network import MeshNetParams, backward_params, forward_jet_batch

__all__ = [
    "Batch",
    "LossBreakdown",
    "winslow_coeffs",
    "residual_eqns",
    "loss_eqns",
    "loss_eqns_grad",
    "loss_bcs",
    "loss_bcs_grad",
    "loss_data",
    "loss_data_grad",
    "assemble_total",
    "total_loss",
    "total_loss_grad",
    "update_lambda1",
    "LOG_COLUMNS",
]

_V, _XI, _ETA, _XIXI, _XIETA, _ETAETA = range(6)
_BETA_FORMS = ("standard", "variant")
SIDES = ("bottom", "top", "left", "right")


@dataclass
class Batch:
    """One training batch: interior points, per-side boundary rows, aux rows.

    interior is (N, 2) with points strictly inside the unit square;
    boundary maps each side name to (n, 4) rows (xi, eta, x_true, y_true);
    aux is (m, 4) in the same row layout (possibly empty).
    """

    interior: np.ndarray
    boundary: dict
    aux: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))

    def __post_init__(self):
        self.interior = np.asarray(self.interior, dtype=float).reshape(-1, 2)
        if self.interior.size and not ((self.interior > 0.0).all()
                                       and (self.interior < 1.0).all()):
            raise ValueError("interior points must lie strictly inside (0,1)^2")
        self.boundary = {k: np.asarray(v, dtype=float).reshape(-1, 4)
                         for k, v in self.boundary.items()}
        self.aux = np.asarray(self.aux, dtype=float).reshape(-1, 4)


@dataclass
class LossBreakdown:
    """Every term of one composite loss evaluation."""

    eqns: float
    bcs_bottom: float
    bcs_top: float
    bcs_left: float
    bcs_right: float
    data: float
    lambda1: float
    lambda2: float
    total: float

    @property
    def bcs_sum(self) -> float:
        return self.bcs_bottom + self.bcs_top + self.bcs_left + self.bcs_right

    def bcs(self, side: str) -> float:
        return getattr(self, f"bcs_{side}")


LOG_COLUMNS = ("stage", "epoch", "lr", "lambda1", "loss_eqns",
               "loss_bcs_bottom", "loss_bcs_top", "loss_bcs_left",
               "loss_bcs_right", "loss_data", "loss_total")


# ---------------------------------------------------------------------------
# Residuals

def _check_beta_form(beta_form: str) -> None:
    if beta_form not in _BETA_FORMS:
        raise ValueError(f"beta_form must be one of {_BETA_FORMS}")


def winslow_coeffs(xj: Jet2, yj: Jet2, beta_form: str = "standard") -> tuple:
    """Coefficients (alpha, beta, gamma) from first derivatives of the map."""
    _check_beta_form(beta_form)
    alpha = xj.d_eta ** 2 + yj.d_eta ** 2
    gamma = xj.d_xi ** 2 + yj.d_xi ** 2
    if beta_form == "standard":
        beta = xj.d_xi * xj.d_eta + yj.d_xi * yj.d_eta
    else:
        beta = xj.d_xi * xj.d_eta + yj.d_xi * xj.d_eta
    return alpha, beta, gamma


def residual_eqns(xj: Jet2, yj: Jet2, beta_form: str = "standard") -> tuple:
    """Pointwise residuals (e1, e2) of the smoothing system."""
    alpha, beta, gamma = winslow_coeffs(xj, yj, beta_form)
    e1 = alpha * xj.d_xixi - 2.0 * beta * xj.d_xieta + gamma * xj.d_etaeta
    e2 = alpha * yj.d_xixi - 2.0 * beta * yj.d_xieta + gamma * yj.d_etaeta
    return e1, e2


def _coeffs_arrays(xj, yj, beta_form):
    alpha = xj[:, _ETA] ** 2 + yj[:, _ETA] ** 2
    gamma = xj[:, _XI] ** 2 + yj[:, _XI] ** 2
    if beta_form == "standard":
        beta = xj[:, _XI] * xj[:, _ETA] + yj[:, _XI] * yj[:, _ETA]
    else:
        beta = xj[:, _XI] * xj[:, _ETA] + yj[:, _XI] * xj[:, _ETA]
    return alpha, beta, gamma


def _residual_arrays(xj, yj, beta_form):
    alpha, beta, gamma = _coeffs_arrays(xj, yj, beta_form)
    e1 = alpha * xj[:, _XIXI] - 2.0 * beta * xj[:, _XIETA] + gamma * xj[:, _ETAETA]
    e2 = alpha * yj[:, _XIXI] - 2.0 * beta * yj[:, _XIETA] + gamma * yj[:, _ETAETA]
    return e1, e2, alpha, beta, gamma


# ---------------------------------------------------------------------------
# Individual terms

def _finite(value: float, what: str) -> float:
    if not np.isfinite(value):
        raise NonFiniteLoss(f"{what} evaluated to {value}")
    return float(value)


def loss_eqns(net: MeshNetParams, interior, beta_form: str = "standard") -> float:
    """Sum of squared interior residuals over the batch."""
    _check_beta_form(beta_form)
    interior = np.asarray(interior, dtype=float).reshape(-1, 2)
    if interior.shape[0] == 0:
        raise EmptyBatch("loss_eqns needs at least one interior point")
    xj, yj, _ = forward_jet_batch(net, interior)
    e1, e2, _, _, _ = _residual_arrays(xj, yj, beta_form)
    return _finite(np.sum(e1 * e1 + e2 * e2), "loss_eqns")


def _eqns_seeds(xj, yj, beta_form):
    e1, e2, alpha, beta, gamma = _residual_arrays(xj, yj, beta_form)
    value = float(np.sum(e1 * e1 + e2 * e2))
    e1b, e2b = 2.0 * e1, 2.0 * e2

    p_x, q_x = xj[:, _XI], xj[:, _ETA]
    p_y, q_y = yj[:, _XI], yj[:, _ETA]
    m_x, m_y = xj[:, _XIETA], yj[:, _XIETA]
    r_x, r_y = xj[:, _XIXI], yj[:, _XIXI]
    n_x, n_y = xj[:, _ETAETA], yj[:, _ETAETA]

    alpha_b = e1b * r_x + e2b * r_y
    beta_b = -2.0 * (e1b * m_x + e2b * m_y)
    gamma_b = e1b * n_x + e2b * n_y

    xbar = np.zeros_like(xj)
    ybar = np.zeros_like(yj)
    if beta_form == "standard":
        xbar[:, _XI] = 2.0 * p_x * gamma_b + q_x * beta_b
        xbar[:, _ETA] = 2.0 * q_x * alpha_b + p_x * beta_b
        ybar[:, _XI] = 2.0 * p_y * gamma_b + q_y * beta_b
        ybar[:, _ETA] = 2.0 * q_y * alpha_b + p_y * beta_b
    else:
        # beta = p_x q_x + p_y q_x: q_x multiplies both first-derivative rows.
        xbar[:, _XI] = 2.0 * p_x * gamma_b + q_x * beta_b
        xbar[:, _ETA] = 2.0 * q_x * alpha_b + (p_x + p_y) * beta_b
        ybar[:, _XI] = 2.0 * p_y * gamma_b + q_x * beta_b
        ybar[:, _ETA] = 2.0 * q_y * alpha_b
    xbar[:, _XIXI] = e1b * alpha
    xbar[:, _XIETA] = -2.0 * beta * e1b
    xbar[:, _ETAETA] = e1b * gamma
    ybar[:, _XIXI] = e2b * alpha
    ybar[:, _XIETA] = -2.0 * beta * e2b
    ybar[:, _ETAETA] = e2b * gamma
    return value, xbar, ybar


def loss_eqns_grad(net: MeshNetParams, interior,
                   beta_form: str = "standard") -> tuple:
    """(value, exact parameter gradient) of the interior term."""
    _check_beta_form(beta_form)
    interior = np.asarray(interior, dtype=float).reshape(-1, 2)
    if interior.shape[0] == 0:
        raise EmptyBatch("loss_eqns needs at least one interior point")
    xj, yj, cache = forward_jet_batch(net, interior)
    value, xbar, ybar = _eqns_seeds(xj, yj, beta_form)
    grad = backward_params(net, cache, xbar, ybar)
    _check_grad(grad, "loss_eqns")
    return _finite(value, "loss_eqns"), grad


def _fit_term(net, rows):
    """Value and jet-field seeds of a squared coordinate-mismatch sum."""
    xj, yj, cache = forward_jet_batch(net, rows[:, :2])
    dx = xj[:, _V] - rows[:, 2]
    dy = yj[:, _V] - rows[:, 3]
    value = float(np.sum(dx * dx + dy * dy))
    xbar = np.zeros_like(xj)
    ybar = np.zeros_like(yj)
    xbar[:, _V] = 2.0 * dx
    ybar[:, _V] = 2.0 * dy
    return value, xbar, ybar, cache


def loss_bcs(net: MeshNetParams, boundary: dict) -> dict:
    """Per-side sums of squared boundary mismatches."""
    out = {}
    for side in SIDES:
        if side not in boundary or np.asarray(boundary[side]).size == 0:
            raise EmptyBatch(f"boundary batch is missing side {side!r}")
        rows = np.asarray(boundary[side], dtype=float).reshape(-1, 4)
        value, _, _, _ = _fit_term(net, rows)
        out[side] = _finite(value, f"loss_bcs[{side}]")
    return out


def loss_bcs_grad(net: MeshNetParams, boundary: dict) -> tuple:
    """(per-side values, exact gradient of the summed boundary term)."""
    out = {}
    grad = None
    for side in SIDES:
        if side not in boundary or np.asarray(boundary[side]).size == 0:
            raise EmptyBatch(f"boundary batch is missing side {side!r}")
        rows = np.asarray(boundary[side], dtype=float).reshape(-1, 4)
        value, xbar, ybar, cache = _fit_term(net, rows)
        out[side] = _finite(value, f"loss_bcs[{side}]")
        g = backward_params(net, cache, xbar, ybar)
        grad = g if grad is None else grad + g
    _check_grad(grad, "loss_bcs")
    return out, grad


def loss_data(net: MeshNetParams, aux) -> float:
    """Sum of squared mismatches on auxiliary rows; empty set contributes 0."""
    aux = np.asarray(aux, dtype=float).reshape(-1, 4)
    if aux.shape[0] == 0:
        return 0.0
    value, _, _, _ = _fit_term(net, aux)
    return _finite(value, "loss_data")


def loss_data_grad(net: MeshNetParams, aux) -> tuple:
    aux = np.asarray(aux, dtype=float).reshape(-1, 4)
    if aux.shape[0] == 0:
        return 0.0, np.zeros(net.n_params)
    value, xbar, ybar, cache = _fit_term(net, aux)
    grad = backward_params(net, cache, xbar, ybar)
    _check_grad(grad, "loss_data")
    return _finite(value, "loss_data"), grad


def _check_grad(grad, what):
    if grad is None or not np.isfinite(grad).all():
        raise NonFiniteGradient(f"gradient of {what} is not finite")


# ---------------------------------------------------------------------------
# Composite

def assemble_total(eqns: float, bcs_sum: float, data: float,
                   lambda1: float, lambda2: float) -> float:
    """The exact composition rule: eqns + lambda1 * bcs_sum + lambda2 * data."""
    return eqns + lambda1 * bcs_sum + lambda2 * data


def _breakdown(eqns, bcs, data, lambda1, lambda2):
    total = assemble_total(eqns, sum(bcs[s] for s in SIDES), data, lambda1, lambda2)
    return LossBreakdown(eqns, bcs["bottom"], bcs["top"], bcs["left"],
                         bcs["right"], data, lambda1, lambda2,
                         _finite(total, "total loss"))


def total_loss(net: MeshNetParams, batch: Batch, lambda1: float,
               lambda2: float, beta_form: str = "standard") -> LossBreakdown:
    eqns = loss_eqns(net, batch.interior, beta_form)
    bcs = loss_bcs(net, batch.boundary)
    data = loss_data(net, batch.aux)
    return _breakdown(eqns, bcs, data, lambda1, lambda2)


def total_loss_grad(net: MeshNetParams, batch: Batch, lambda1: float,
                    lambda2: float, beta_form: str = "standard") -> tuple:
    """(breakdown, exact gradient of the weighted composite)."""
    eqns, g_eqns = loss_eqns_grad(net, batch.interior, beta_form)
    bcs, g_bcs = loss_bcs_grad(net, batch.boundary)
    data, g_data = loss_data_grad(net, batch.aux)
    grad = g_eqns + lambda1 * g_bcs + lambda2 * g_data
    return _breakdown(eqns, bcs, data, lambda1, lambda2), grad


def update_lambda1(grad_eqns: np.ndarray, grad_bcs: np.ndarray,
                   lambda1_old: float, smoothing: float = 0.1) -> float:
    """Gradient-balance update of the boundary weight.

    The candidate weight is max|grad_eqns| / mean|grad_bcs|; the new value
    is a (1 - smoothing) / smoothing moving average with the old one.  A
    near-zero denominator keeps the old weight.
    """
    denom = float(np.mean(np.abs(grad_bcs)))
    if denom < 1e-12:
        return float(lambda1_old)
    cand = float(np.max(np.abs(grad_eqns))) / denom
    return (1.0 - smoothing) * float(lambda1_old) + smoothing * cand
