"""Optional PNG rendering of the CLI tables (needs the ``plots`` extra).

matplotlib is imported lazily with the Agg backend so the rest of the
package never depends on it.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import UsageError


def _pyplot():
    try:
        import matplotlib
    except ImportError as exc:  # pragma: no cover - depends on the environment
        raise UsageError("--figures needs matplotlib (pip install 'artifact[plots]')") from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def deficit_figure(reports, path):
    """Deficit against resolution, one line per (inequality, p, alpha)."""
    plt = _pyplot()
    groups = {}
    for r in reports:
        if r.resolution in (None, "") or not np.isfinite(r.deficit):
            continue
        key = (r.name, r.p, r.alpha, r.notes)
        groups.setdefault(key, []).append((float(r.resolution), r.deficit))
    fig, ax = plt.subplots(figsize=(6, 4))
    for (name, p, alpha, _), pts in sorted(groups.items(), key=lambda kv: str(kv[0])):
        if len(pts) < 2:
            continue
        xs, ys = zip(*sorted(pts))
        lab = name + (f" p={p:g}" if p != 2 else "") + (f" a={alpha:g}" if alpha else "")
        ax.plot(xs, np.maximum(np.abs(ys), 1e-16), marker="o", label=lab)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("resolution")
    ax.set_ylabel("|deficit|")
    if ax.lines:
        ax.legend(fontsize=6)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def hopflax_figure(reports, path):
    """F(t) and bound against t for each hypercontractivity report."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, rep in reports:
        line, = ax.plot(rep.times, rep.F, marker="o", label=f"{label} F")
        ax.plot(rep.times, rep.bound, ls="--", color=line.get_color(), label=f"{label} bound")
    ax.set_xlabel("t")
    ax.set_ylabel("norm")
    if ax.lines:
        ax.legend(fontsize=6)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def transport_figure(plan, path):
    """Support of the plan: segments from source points to targets (first two coordinates)."""
    plt = _pyplot()
    inst = plan.instance
    X = inst.source_points[plan.rows]
    Y = inst.target_points[plan.cols]
    fig, ax = plt.subplots(figsize=(5, 5))
    w = plan.weights / plan.weights.max()
    for x, y, a in zip(X, Y, w):
        ax.plot([x[0], y[0]], [x[1], y[1]], color="C0", alpha=float(0.1 + 0.6 * a), lw=0.6)
    ax.scatter(inst.target_points[:, 0], inst.target_points[:, 1], s=4, color="C1")
    ax.set_aspect("equal")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render(out_dir, deficits=(), hopflax=(), plans=()):
    """Write whichever figures have data; returns the list of files."""
    out = Path(out_dir)
    files = []
    if deficits:
        deficit_figure(deficits, out / "deficits.png")
        files.append(out / "deficits.png")
    if hopflax:
        hopflax_figure(hopflax, out / "hopflax.png")
        files.append(out / "hopflax.png")
    for label, plan in plans:
        f = out / f"transport_{label}.png"
        transport_figure(plan, f)
        files.append(f)
    return files
