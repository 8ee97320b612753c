"""Two-stage training: seeded stochastic Adam, then full-batch L-BFGS.

Stage one runs Adam with a step-decayed learning rate on a fresh seeded
batch every epoch, updating the boundary weight lambda1 by gradient
balance on a fixed cadence.  Stage two freezes the weights and the batch
and refines with limited-memory BFGS (two-loop recursion, strong Wolfe
line search).  Both stages are deterministic for a fixed seed.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .errors import EmptyBatch, InvalidGeometry, NonFiniteGradient, NonFiniteLoss
from .geometry import (BoundaryFit, GeometrySpec, sample_auxiliary,
                       sample_boundary, validate_geometry)
from .losses import (LOG_COLUMNS, Batch, LossBreakdown, loss_bcs_grad,
                     loss_eqns_grad, total_loss, total_loss_grad,
                     update_lambda1)
from .network import MeshNetParams, init_params

__all__ = [
    "TrainConfig",
    "AdamState",
    "LbfgsResult",
    "EpochRecord",
    "TrainHistory",
    "lr_schedule",
    "adam_step",
    "lbfgs_minimize",
    "make_batch",
    "train",
    "write_history_csv",
]

SIDES = ("bottom", "top", "left", "right")


@dataclass
class TrainConfig:
    """Resolved training configuration; every field has a usable default."""

    seed: int = 0
    layers: int = 4
    neurons: int = 30
    adam_epochs: int = 5000
    adam_batch_interior: int = 100
    bcs_per_side: int = 25
    aux_points: int = 50          # per auxiliary line, per epoch
    lr0: float = 1e-3
    lr_decay: float = 0.9
    lr_step: int = 1000
    lambda1_init: float = 1.0
    lambda2: float = 10.0
    dynamic_lambda1: bool = True
    lambda1_every: int = 10
    lambda1_smoothing: float = 0.1
    lbfgs_batch_interior: int = 1000
    lbfgs_bcs_per_side: int = 100
    lbfgs_aux_points: int = 200
    lbfgs_max_iters: int = 5000
    lbfgs_memory: int = 10
    lbfgs_tol_grad: float = 1e-8
    lbfgs_tol_loss: float = 1e-12
    no_aux: bool = False
    plain_mlp: bool = False
    beta_form: str = "standard"

    @property
    def arch(self) -> str:
        return "plain" if self.plain_mlp else "gated"

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def with_overrides(self, **kw) -> "TrainConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def lr_schedule(epoch: int, lr0: float = 1e-3, decay: float = 0.9,
                step: int = 1000) -> float:
    """Stepwise exponential decay: lr0 * decay ** floor(epoch / step)."""
    return lr0 * decay ** (epoch // step)


# ---------------------------------------------------------------------------
# Adam

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n))


def adam_step(state: AdamState, params: np.ndarray, grad: np.ndarray,
              lr: float) -> tuple:
    """One bias-corrected Adam update; returns (new state, new params)."""
    grad = np.asarray(grad, dtype=float)
    if not np.isfinite(grad).all():
        raise NonFiniteGradient("adam received a non-finite gradient")
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    mhat = m / (1.0 - state.beta1 ** t)
    vhat = v / (1.0 - state.beta2 ** t)
    new_params = params - lr * mhat / (np.sqrt(vhat) + state.eps)
    return AdamState(m, v, t, state.beta1, state.beta2, state.eps), new_params


# ---------------------------------------------------------------------------
# L-BFGS

@dataclass
class LbfgsResult:
    x: np.ndarray
    loss: float
    history: list
    n_iters: int
    status: str   # converged_grad | converged_loss | max_iters | line_search_failed


def _wolfe_line_search(objective, x, f0, g0, p, c1=1e-4, c2=0.9,
                       max_evals=30):
    """Strong Wolfe search along p; returns (alpha, f, g, ok)."""
    d0 = float(g0 @ p)
    if d0 >= 0.0:
        return None, f0, g0, False

    def phi(alpha):
        f, g = objective(x + alpha * p)
        return f, g, float(g @ p)

    def zoom(a_lo, f_lo, d_lo, a_hi, f_hi, budget):
        for _ in range(budget):
            # Quadratic interpolation using the low endpoint slope,
            # safeguarded toward bisection.
            denom = f_hi - f_lo - d_lo * (a_hi - a_lo)
            if abs(denom) > 1e-300:
                a = a_lo - 0.5 * d_lo * (a_hi - a_lo) ** 2 / denom
            else:
                a = 0.5 * (a_lo + a_hi)
            span = abs(a_hi - a_lo)
            lo, hi = min(a_lo, a_hi), max(a_lo, a_hi)
            if not (lo + 0.1 * span <= a <= hi - 0.1 * span):
                a = 0.5 * (a_lo + a_hi)
            f, g, d = phi(a)
            if f > f0 + c1 * a * d0 or f >= f_lo:
                a_hi, f_hi = a, f
            else:
                if abs(d) <= -c2 * d0:
                    return a, f, g, True
                if d * (a_hi - a_lo) >= 0.0:
                    a_hi, f_hi = a_lo, f_lo
                a_lo, f_lo, d_lo = a, f, d
            if abs(a_hi - a_lo) < 1e-16:
                break
        return None, f0, g0, False

    a_prev, f_prev, d_prev = 0.0, f0, d0
    a = 1.0
    for i in range(max_evals):
        f, g, d = phi(a)
        if f > f0 + c1 * a * d0 or (i > 0 and f >= f_prev):
            return zoom(a_prev, f_prev, d_prev, a, f, max_evals - i)
        if abs(d) <= -c2 * d0:
            return a, f, g, True
        if d >= 0.0:
            return zoom(a, f, d, a_prev, f_prev, max_evals - i)
        a_prev, f_prev, d_prev = a, f, d
        a = min(2.0 * a, 1e12)
    return None, f0, g0, False


def lbfgs_minimize(objective, x0, memory: int = 10, max_iters: int = 500,
                   tol_grad: float = 1e-8, tol_loss: float = 1e-12,
                   callback=None) -> LbfgsResult:
    """Limited-memory BFGS with two-loop recursion and strong Wolfe steps.

    objective(x) must return (loss, gradient).  Stops when the gradient
    infinity norm falls below tol_grad, the relative loss change falls
    below tol_loss, or max_iters is reached.  A failed line search returns
    the best iterate seen with status "line_search_failed" instead of
    raising.  Curvature pairs with s.y <= 1e-10 are skipped.
    """
    x = np.asarray(x0, dtype=float).copy()
    f, g = objective(x)
    if not np.isfinite(f):
        raise NonFiniteLoss("objective is not finite at the starting point")
    history = [float(f)]
    best_f, best_x = f, x.copy()
    s_list, y_list, rho_list = [], [], []
    status = "max_iters"
    k = 0
    if float(np.max(np.abs(g))) <= tol_grad:
        return LbfgsResult(x, float(f), history, 0, "converged_grad")

    while k < max_iters:
        # Two-loop recursion for the search direction.
        q = g.copy()
        alphas = []
        for s, y, rho in zip(reversed(s_list), reversed(y_list),
                             reversed(rho_list)):
            a = rho * (s @ q)
            alphas.append(a)
            q -= a * y
        if s_list:
            gamma = (s_list[-1] @ y_list[-1]) / (y_list[-1] @ y_list[-1])
            q *= gamma
        for (s, y, rho), a in zip(zip(s_list, y_list, rho_list),
                                  reversed(alphas)):
            b = rho * (y @ q)
            q += (a - b) * s
        p = -q
        if float(p @ g) >= 0.0:
            # Fall back to steepest descent if the memory went stale.
            s_list, y_list, rho_list = [], [], []
            p = -g

        alpha, f_new, g_new, ok = _wolfe_line_search(objective, x, f, g, p)
        if not ok:
            status = "line_search_failed"
            break
        k += 1
        x_new = x + alpha * p
        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-10:
            s_list.append(s)
            y_list.append(y)
            rho_list.append(1.0 / sy)
            if len(s_list) > memory:
                s_list.pop(0)
                y_list.pop(0)
                rho_list.pop(0)
        rel_change = abs(f - f_new) / max(1.0, abs(f), abs(f_new))
        x, f, g = x_new, f_new, g_new
        history.append(float(f))
        if f < best_f:
            best_f, best_x = f, x.copy()
        if callback is not None:
            callback(k, x, float(f))
        if float(np.max(np.abs(g))) <= tol_grad:
            status = "converged_grad"
            break
        if rel_change <= tol_loss:
            status = "converged_loss"
            break

    if best_f < f:
        x, f = best_x, best_f
    return LbfgsResult(x, float(f), history, k, status)


# ---------------------------------------------------------------------------
# Batch sampling

def _open_unit_square(rng: np.random.Generator, n: int) -> np.ndarray:
    pts = rng.random((n, 2))
    # random() lives in [0, 1); redraw the measure-zero exact zeros so the
    # points are strictly interior.
    mask = pts == 0.0
    while mask.any():
        pts[mask] = rng.random(int(mask.sum()))
        mask = pts == 0.0
    return pts


def make_batch(fit: BoundaryFit, geom: GeometrySpec, n_interior: int,
               n_per_side: int, n_aux: int, rng: np.random.Generator,
               no_aux: bool = False) -> Batch:
    """Draw one training batch; consumes the generator in a fixed order."""
    interior = _open_unit_square(rng, n_interior)
    boundary = {side: sample_boundary(fit, side, n_per_side, rng)
                for side in SIDES}
    if no_aux or not geom.aux_lines or n_aux <= 0:
        aux = np.zeros((0, 4))
    else:
        aux = np.vstack([sample_auxiliary(line, n_aux, rng)
                         for line in geom.aux_lines])
    return Batch(interior, boundary, aux)


# ---------------------------------------------------------------------------
# History

@dataclass
class EpochRecord:
    epoch: int
    stage: str        # "adam" or "lbfgs"
    lr: float
    breakdown: LossBreakdown


@dataclass
class TrainHistory:
    records: list
    adam_epochs: int
    lbfgs_iters: int
    lbfgs_status: str

    def final(self) -> LossBreakdown:
        return self.records[-1].breakdown

    def adam_final(self) -> LossBreakdown:
        adam = [r for r in self.records if r.stage == "adam"]
        return adam[-1].breakdown

    def stage_records(self, stage: str) -> list:
        return [r for r in self.records if r.stage == stage]


def write_history_csv(history: TrainHistory, path) -> None:
    """One row per epoch / refinement iteration, fixed column order."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOG_COLUMNS)
        for rec in history.records:
            b = rec.breakdown
            writer.writerow([rec.stage, rec.epoch, repr(rec.lr),
                             repr(b.lambda1), repr(b.eqns),
                             repr(b.bcs_bottom), repr(b.bcs_top),
                             repr(b.bcs_left), repr(b.bcs_right),
                             repr(b.data), repr(b.total)])


# ---------------------------------------------------------------------------
# The trainer

def train(geom: GeometrySpec, fit: BoundaryFit,
          cfg: TrainConfig | None = None) -> tuple:
    """Run both training stages; returns (params, history).

    Raises InvalidGeometry for unusable input and the NonFinite errors if
    the optimization blows up.  Identical (geometry, config) pairs produce
    bit-identical parameter vectors and histories.
    """
    cfg = cfg or TrainConfig()
    violations = validate_geometry(geom)
    if violations:
        raise InvalidGeometry(violations)
    if cfg.adam_batch_interior < 1 or cfg.bcs_per_side < 1:
        raise EmptyBatch("adam stage needs interior and boundary points")
    if cfg.lbfgs_batch_interior < 1 or cfg.lbfgs_bcs_per_side < 1:
        raise EmptyBatch("lbfgs stage needs interior and boundary points")

    root = np.random.SeedSequence(cfg.seed)
    init_ss, adam_ss, lbfgs_ss = root.spawn(3)

    net = init_params(cfg.layers, cfg.neurons, seed=init_ss, arch=cfg.arch)
    flat = net.flatten()
    adam = AdamState.zeros(flat.size)
    lam1 = float(cfg.lambda1_init)
    records = []

    rng = np.random.default_rng(adam_ss)
    for epoch in range(cfg.adam_epochs):
        batch = make_batch(fit, geom, cfg.adam_batch_interior,
                           cfg.bcs_per_side, cfg.aux_points, rng,
                           no_aux=cfg.no_aux)
        net = MeshNetParams.from_flat(flat, cfg.layers, cfg.neurons, cfg.arch)
        if (cfg.dynamic_lambda1 and epoch > 0
                and epoch % cfg.lambda1_every == 0):
            _, g_eqns = loss_eqns_grad(net, batch.interior, cfg.beta_form)
            _, g_bcs = loss_bcs_grad(net, batch.boundary)
            lam1 = update_lambda1(g_eqns, g_bcs, lam1, cfg.lambda1_smoothing)
        breakdown, grad = total_loss_grad(net, batch, lam1, cfg.lambda2,
                                          cfg.beta_form)
        lr = lr_schedule(epoch, cfg.lr0, cfg.lr_decay, cfg.lr_step)
        adam, flat = adam_step(adam, flat, grad, lr)
        records.append(EpochRecord(epoch, "adam", lr, breakdown))

    fixed = make_batch(fit, geom, cfg.lbfgs_batch_interior,
                       cfg.lbfgs_bcs_per_side, cfg.lbfgs_aux_points,
                       np.random.default_rng(lbfgs_ss), no_aux=cfg.no_aux)

    # Record the stage-two objective at the Adam endpoint so the two
    # stages can be compared on the same batch.
    net = MeshNetParams.from_flat(flat, cfg.layers, cfg.neurons, cfg.arch)
    start_breakdown = total_loss(net, fixed, lam1, cfg.lambda2, cfg.beta_form)
    records.append(EpochRecord(cfg.adam_epochs, "lbfgs", 0.0,
                               start_breakdown))
    last_breakdown = [None]

    def objective(vec):
        net_v = MeshNetParams.from_flat(vec, cfg.layers, cfg.neurons, cfg.arch)
        breakdown, grad = total_loss_grad(net_v, fixed, lam1, cfg.lambda2,
                                          cfg.beta_form)
        last_breakdown[0] = breakdown
        return breakdown.total, grad

    def on_iter(k, _vec, _f):
        # The accepted point is the last one the line search evaluated, so
        # the stashed breakdown belongs to it.
        records.append(EpochRecord(cfg.adam_epochs + k, "lbfgs", 0.0,
                                   last_breakdown[0]))

    result = lbfgs_minimize(objective, flat, memory=cfg.lbfgs_memory,
                            max_iters=cfg.lbfgs_max_iters,
                            tol_grad=cfg.lbfgs_tol_grad,
                            tol_loss=cfg.lbfgs_tol_loss,
                            callback=on_iter)

    net = MeshNetParams.from_flat(result.x, cfg.layers, cfg.neurons, cfg.arch)
    final_breakdown = total_loss(net, fixed, lam1, cfg.lambda2, cfg.beta_form)
    records.append(EpochRecord(cfg.adam_epochs + result.n_iters + 1, "lbfgs",
                               0.0, final_breakdown))
    history = TrainHistory(records, cfg.adam_epochs, result.n_iters,
                           result.status)
    return net, history
