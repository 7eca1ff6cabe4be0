"""Figure rendering from solver CSV artifacts.

This package never recomputes numerics: it reads the exact CSV schemas the
solver CLI emits and turns them into figures.  Output is deterministic for a
fixed input (fixed styles, hashed ids, no timestamps), so repeated runs give
byte-identical SVG files.
"""

from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from matplotlib.tri import Triangulation

matplotlib.rcParams["svg.hashsalt"] = "vemplots"

CONVERGENCE_HEADER = "mesh_id,h,N_h,eig_index,lambda_ref,lambda_h,rel_err"
SWEEP_HEADER = "param_name,param_value,eig_rank,lambda,branch_label,fit_r2"
SAMPLES_HEADER = "cell_id,x,y,value"

BRANCH_COLORS = {
    "physical": "tab:blue",
    "spurious-linear": "tab:red",
    "spurious-hyperbolic": "tab:orange",
    "unclassified": "tab:gray",
}


class SchemaError(Exception):
    """Input CSV does not match the expected schema."""


def read_rows(path, expected_header: str):
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        if header != expected_header.split(","):
            raise SchemaError(
                f"{path}: header {','.join(header)!r} does not match "
                f"{expected_header!r}"
            )
        rows = [row for row in reader if row]
    if not rows:
        raise SchemaError(f"{path}: no rows")
    return rows


def save_figure(fig, out_path) -> None:
    fig.savefig(out_path, metadata={"Date": None})
    plt.close(fig)


def plot_convergence(csv_path, out_path, reference_slopes=()) -> None:
    """Log-log eigenvalue error against mesh size, one line per eigenvalue,
    with dashed reference-slope guides."""
    rows = read_rows(csv_path, CONVERGENCE_HEADER)
    series = {}
    for mesh_id, h, n_h, idx, lam_ref, lam_h, rel in rows:
        series.setdefault(int(idx), []).append((float(h), float(rel)))
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    for idx in sorted(series):
        pts = sorted(series[idx])
        hs = np.array([p[0] for p in pts])
        errs = np.array([p[1] for p in pts])
        ax.loglog(hs, errs, "o-", label=f"eigenvalue {idx + 1}")
    all_h = np.array(sorted({float(r[1]) for r in rows}))
    all_err = np.array([float(r[6]) for r in rows])
    anchor = max(all_err.max(), 1e-300)
    for slope in reference_slopes:
        guide = anchor * (all_h / all_h.max()) ** slope
        ax.loglog(all_h, guide, "k--", linewidth=0.8)
        ax.annotate(
            f"slope {slope:g}",
            (all_h[0], guide[0]),
            fontsize=8,
            textcoords="offset points",
            xytext=(4, 0),
        )
    ax.set_xlabel("mesh size h")
    ax.set_ylabel("relative eigenvalue error")
    ax.grid(True, which="both", linewidth=0.3, alpha=0.5)
    ax.legend(fontsize=8)
    fig.tight_layout()
    save_figure(fig, out_path)


def plot_sweep(csv_path, out_path, window: float | None = None) -> None:
    """Spectrum against the stabilization parameter, colored by branch label."""
    rows = read_rows(csv_path, SWEEP_HEADER)
    param_name = rows[0][0]
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    seen = []
    for label in BRANCH_COLORS:
        pts = [
            (float(r[1]), float(r[3]))
            for r in rows
            if r[4] == label and (window is None or float(r[3]) <= window)
        ]
        if not pts:
            continue
        seen.append(label)
        xs, ys = zip(*pts)
        ax.plot(
            xs, ys, ".", color=BRANCH_COLORS[label], markersize=4, label=label
        )
    ax.set_xlabel(param_name)
    ax.set_ylabel("eigenvalue")
    if window is not None:
        ax.set_ylim(0, window)
    ax.grid(True, linewidth=0.3, alpha=0.5)
    ax.legend(fontsize=8)
    fig.tight_layout()
    save_figure(fig, out_path)


def plot_eigenfunction(csv_path, out_path) -> None:
    """Per-cell triangulated contour of sampled eigenfunction values.

    Samples per cell are its polygon vertices followed by the centroid; each
    cell is fan-triangulated around its centroid.
    """
    rows = read_rows(csv_path, SAMPLES_HEADER)
    cells = {}
    for cid, x, y, v in rows:
        cells.setdefault(int(cid), []).append((float(x), float(y), float(v)))
    xs, ys, vs, triangles = [], [], [], []
    for cid in sorted(cells):
        pts = cells[cid]
        base = len(xs)
        for x, y, v in pts:
            xs.append(x)
            ys.append(y)
            vs.append(v)
        center = base + len(pts) - 1
        m = len(pts) - 1
        for i in range(m):
            triangles.append((center, base + i, base + (i + 1) % m))
    tri = Triangulation(np.array(xs), np.array(ys), np.array(triangles))
    fig, ax = plt.subplots(figsize=(4.6, 4.0))
    im = ax.tripcolor(tri, np.array(vs), shading="gouraud", cmap="viridis")
    fig.colorbar(im, ax=ax, shrink=0.85)
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    fig.tight_layout()
    save_figure(fig, out_path)
