"""Figure rendering for the report outputs.

Every generate / evaluate / sweep run drops PNG figures next to its CSV
and JSON outputs: the mesh itself, the angle histogram, the training
curves, the solver residual history, or the sweep summary.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.collections import LineCollection  # noqa: E402

__all__ = [
    "save_mesh_figure",
    "save_histogram_figure",
    "save_convergence_figure",
    "save_residual_figure",
    "save_sweep_figure",
    "save_boundary_fit_figure",
]


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_mesh_figure(mesh, path, title=None) -> None:
    fig, ax = plt.subplots(figsize=(5.0, 5.0))
    segs = [mesh.points[:, j] for j in range(mesh.nj)]
    segs += [mesh.points[i, :] for i in range(mesh.ni)]
    ax.add_collection(LineCollection(segs, colors="tab:blue", linewidths=0.6))
    ax.autoscale()
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    if title:
        ax.set_title(title)
    _finish(fig, path)


def save_histogram_figure(report, path) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 3.5))
    rows = report.histogram_rows()
    lefts = [r[0] for r in rows]
    counts = [r[2] for r in rows]
    # Trim trailing empty bins so the axis hugs the data.
    last = max((i for i, c in enumerate(counts) if c), default=len(counts) - 1)
    hi = min(len(counts), last + 2)
    ax.bar(lefts[:hi], counts[:hi], width=rows[0][1] - rows[0][0],
           align="edge", color="tab:blue", edgecolor="white")
    ax.set_xlabel("per-cell max included angle (deg)")
    ax.set_ylabel("cells")
    _finish(fig, path)


def save_convergence_figure(history, path) -> None:
    fig, ax = plt.subplots(figsize=(6.5, 4.0))
    epochs = [r.epoch for r in history.records]
    series = [
        ("total", lambda b: b.total),
        ("interior", lambda b: b.eqns),
        ("boundary", lambda b: b.bcs_sum),
        ("aux data", lambda b: b.data),
    ]
    for label, get in series:
        vals = [max(get(r.breakdown), 1e-300) for r in history.records]
        if label == "aux data" and max(vals) <= 1e-299:
            continue
        ax.semilogy(epochs, vals, label=label, linewidth=0.9)
    if history.adam_epochs and history.lbfgs_iters:
        ax.axvline(history.adam_epochs, color="gray", linestyle=":",
                   linewidth=0.8)
    ax.set_xlabel("epoch / iteration")
    ax.set_ylabel("loss (sum)")
    ax.legend(fontsize=8)
    _finish(fig, path)


def save_residual_figure(residual_history, path) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 3.5))
    ax.semilogy(range(len(residual_history)),
                [max(v, 1e-300) for v in residual_history],
                color="tab:blue", linewidth=0.9)
    ax.set_xlabel("sweep")
    ax.set_ylabel("max node update")
    _finish(fig, path)


def save_sweep_figure(rows, path) -> None:
    """Final loss against depth, one line per neuron width."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ok = [r for r in rows if r.get("error") in (None, "") and r.get("loss_total")]
    widths = sorted({int(r["neurons"]) for r in ok})
    for h in widths:
        pts = sorted((int(r["layers"]), float(r["loss_total"]))
                     for r in ok if int(r["neurons"]) == h)
        if pts:
            ax.semilogy([p[0] for p in pts], [p[1] for p in pts],
                        marker="o", label=f"{h} neurons", linewidth=0.9)
    ax.set_xlabel("hidden layers")
    ax.set_ylabel("final loss")
    if widths:
        ax.legend(fontsize=8)
    _finish(fig, path)


def save_boundary_fit_figure(fit, spec, path, samples: int = 256) -> None:
    import numpy as np

    fig, ax = plt.subplots(figsize=(5.0, 5.0))
    t = np.linspace(0.0, 1.0, samples)
    for side in ("bottom", "top", "left", "right"):
        xs, ys = fit.predict(side, t)
        ax.plot(xs, ys, linewidth=0.9, label=side)
        ctrl = spec.side(side).points
        ax.plot(ctrl[:, 0], ctrl[:, 1], ".", markersize=3, color="black")
    ax.set_aspect("equal")
    ax.legend(fontsize=8)
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    _finish(fig, path)
