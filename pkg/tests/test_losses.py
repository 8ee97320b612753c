import numpy as np
import pytest

from pinnmesh.errors import EmptyBatch, NonFiniteLoss
from pinnmesh.jets import Jet2
from pinnmesh.losses import (Batch, assemble_total, loss_bcs, loss_bcs_grad,
                             loss_data, loss_data_grad, loss_eqns,
                             loss_eqns_grad, residual_eqns, total_loss,
                             total_loss_grad, update_lambda1, winslow_coeffs)
from pinnmesh.network import MeshNetParams, forward_batch, init_params


def affine_jets(a, b, c, d, e, f, xi, eta):
    """Jets of x = a xi + b eta + c, y = d xi + e eta + f."""
    xj = Jet2(a * xi + b * eta + c, a, b, 0.0, 0.0, 0.0)
    yj = Jet2(d * xi + e * eta + f, d, e, 0.0, 0.0, 0.0)
    return xj, yj


def test_coeffs_on_affine_map():
    xj, yj = affine_jets(2.0, 0.5, 1.0, -0.25, 3.0, 0.0, 0.3, 0.7)
    alpha, beta, gamma = winslow_coeffs(xj, yj)
    assert alpha == pytest.approx(0.5**2 + 3.0**2)
    assert gamma == pytest.approx(2.0**2 + 0.25**2)
    assert beta == pytest.approx(2.0 * 0.5 + (-0.25) * 3.0)


def test_residual_zero_on_affine_maps():
    rng = np.random.default_rng(0)
    for _ in range(25):
        coef = rng.normal(size=6)
        xi, eta = rng.random(2)
        xj, yj = affine_jets(*coef, xi, eta)
        e1, e2 = residual_eqns(xj, yj)
        assert abs(e1) <= 1e-12 and abs(e2) <= 1e-12


def test_residual_rotation_invariance():
    rng = np.random.default_rng(1)
    for _ in range(25):
        xj = Jet2(*rng.normal(size=6))
        yj = Jet2(*rng.normal(size=6))
        e1, e2 = residual_eqns(xj, yj)
        base = e1 * e1 + e2 * e2
        th = rng.uniform(0, 2 * np.pi)
        c, s = np.cos(th), np.sin(th)
        xr = xj * c - yj * s
        yr = xj * s + yj * c
        r1, r2 = residual_eqns(xr, yr)
        rot = r1 * r1 + r2 * r2
        assert abs(rot - base) <= 1e-10 * max(1.0, abs(base))


def test_variant_metric_differs_from_standard():
    xj = Jet2(0.4, 1.2, 0.3, 0.5, -0.2, 0.9)
    yj = Jet2(-0.7, 0.4, 1.5, 0.1, 0.6, -0.3)
    _, b_std, _ = winslow_coeffs(xj, yj, "standard")
    _, b_var, _ = winslow_coeffs(xj, yj, "variant")
    assert b_std == pytest.approx(1.2 * 0.3 + 0.4 * 1.5)
    assert b_var == pytest.approx(1.2 * 0.3 + 0.3 * 0.4)
    assert b_std != b_var
    with pytest.raises(ValueError):
        winslow_coeffs(xj, yj, "bogus")


def test_loss_eqns_sums_over_points():
    net = init_params(2, 8, seed=0)
    rng = np.random.default_rng(2)
    a = rng.random((6, 2)) * 0.8 + 0.1
    b = rng.random((9, 2)) * 0.8 + 0.1
    whole = loss_eqns(net, np.vstack([a, b]))
    assert whole == pytest.approx(loss_eqns(net, a) + loss_eqns(net, b),
                                  rel=1e-12)


def test_loss_eqns_matches_scalar_path():
    from pinnmesh.network import forward_jet
    net = init_params(2, 8, seed=3)
    pts = np.random.default_rng(3).random((5, 2)) * 0.8 + 0.1
    total = 0.0
    for xi, eta in pts:
        xj, yj = forward_jet(net, xi, eta)
        e1, e2 = residual_eqns(xj, yj)
        total += e1 * e1 + e2 * e2
    assert loss_eqns(net, pts) == pytest.approx(total, rel=1e-12)


@pytest.mark.filterwarnings("ignore:invalid value encountered")
def test_loss_eqns_empty_and_nonfinite():
    net = init_params(2, 6, seed=0)
    with pytest.raises(EmptyBatch):
        loss_eqns(net, np.empty((0, 2)))
    net.x_net.w_out[:] = np.inf
    with pytest.raises(NonFiniteLoss):
        loss_eqns(net, np.array([[0.5, 0.5]]))


def test_loss_bcs_values_and_layout():
    net = init_params(2, 8, seed=4)
    rows = {
        "bottom": np.array([[0.25, 0.0, 0.3, -0.2], [0.5, 0.0, 0.1, 0.4]]),
        "top": np.array([[0.5, 1.0, 0.0, 1.0]]),
        "left": np.array([[0.0, 0.75, -0.1, 0.9]]),
        "right": np.array([[1.0, 0.25, 1.2, 0.3]]),
    }
    by_side = loss_bcs(net, rows)
    assert set(by_side) == {"bottom", "top", "left", "right"}
    for side, arr in rows.items():
        pred = forward_batch(net, arr[:, :2])
        expect = float(np.sum((pred[:, 0] - arr[:, 2]) ** 2
                              + (pred[:, 1] - arr[:, 3]) ** 2))
        assert by_side[side] == pytest.approx(expect, rel=1e-12)
    with pytest.raises(EmptyBatch):
        loss_bcs(net, {"bottom": rows["bottom"]})


def test_loss_data_empty_is_zero():
    net = init_params(2, 6, seed=5)
    assert loss_data(net, np.empty((0, 4))) == 0.0
    val, grad = loss_data_grad(net, np.empty((0, 4)))
    assert val == 0.0
    assert grad.shape == (net.n_params,)
    assert np.all(grad == 0.0)


def test_assemble_total():
    assert assemble_total(1.0, 2.0, 3.0, lambda1=0.5, lambda2=10.0) \
        == pytest.approx(1.0 + 0.5 * 2.0 + 10.0 * 3.0)


def _tiny_batch(rng):
    interior = rng.random((6, 2)) * 0.8 + 0.1
    boundary = {
        "bottom": np.column_stack([rng.random(3), np.zeros(3),
                                   rng.random(3), rng.random(3)]),
        "top": np.column_stack([rng.random(3), np.ones(3),
                                rng.random(3), rng.random(3)]),
        "left": np.column_stack([np.zeros(3), rng.random(3),
                                 rng.random(3), rng.random(3)]),
        "right": np.column_stack([np.ones(3), rng.random(3),
                                  rng.random(3), rng.random(3)]),
    }
    aux = np.column_stack([rng.random(4), np.full(4, 0.5),
                           rng.random(4), rng.random(4)])
    return Batch(interior, boundary, aux)


def test_total_loss_composition():
    net = init_params(2, 8, seed=6)
    rng = np.random.default_rng(7)
    batch = _tiny_batch(rng)
    lam1, lam2 = 3.0, 10.0
    br = total_loss(net, batch, lam1, lam2)
    assert br.lambda1 == lam1 and br.lambda2 == lam2
    assert br.total == pytest.approx(
        br.eqns + lam1 * br.bcs_sum + lam2 * br.data, rel=1e-12)
    assert br.bcs_sum == pytest.approx(
        br.bcs_bottom + br.bcs_top + br.bcs_left + br.bcs_right, rel=1e-12)

    br2, grad = total_loss_grad(net, batch, lam1, lam2)
    assert br2.total == pytest.approx(br.total, rel=1e-12)
    _, g_e = loss_eqns_grad(net, batch.interior)
    _, g_b = loss_bcs_grad(net, batch.boundary)
    _, g_d = loss_data_grad(net, batch.aux)
    assert np.allclose(grad, g_e + lam1 * g_b + lam2 * g_d, rtol=1e-12,
                       atol=0)


def test_total_loss_grad_matches_fd():
    net = init_params(2, 6, seed=8)
    rng = np.random.default_rng(9)
    batch = _tiny_batch(rng)
    br, grad = total_loss_grad(net, batch, 2.0, 10.0)
    theta = net.flatten()
    h = 1e-5
    for i in rng.choice(theta.size, 20, replace=False):
        tp, tm = theta.copy(), theta.copy()
        tp[i] += h
        tm[i] -= h
        fp = total_loss(MeshNetParams.from_flat(tp, 2, 6), batch, 2.0, 10.0)
        fm = total_loss(MeshNetParams.from_flat(tm, 2, 6), batch, 2.0, 10.0)
        fd = (fp.total - fm.total) / (2 * h)
        assert abs(fd - grad[i]) <= 1e-4 * max(abs(fd), abs(grad[i])) + 1e-8


def test_batch_rejects_points_on_border():
    rng = np.random.default_rng(10)
    b = _tiny_batch(rng)
    pts = b.interior.copy()
    pts[0, 0] = 0.0
    with pytest.raises(ValueError):
        Batch(pts, b.boundary, b.aux)


def test_update_lambda1():
    g_e = np.array([0.0, -4.0, 2.0])
    g_b = np.array([1.0, 1.0, 4.0])
    lam_hat = 4.0 / 2.0
    out = update_lambda1(g_e, g_b, lambda1_old=1.0, smoothing=0.1)
    assert out == pytest.approx(0.9 * 1.0 + 0.1 * lam_hat)
    # Vanishing boundary gradient keeps the old weight.
    assert update_lambda1(g_e, np.zeros(3), 7.0) == 7.0
