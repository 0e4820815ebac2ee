"""Rollout overlays and edge heatmaps as CSV plus dependency-free SVG."""
from __future__ import annotations

import csv
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"]


def _np(x):
    if hasattr(x, "detach"):
        x = x.detach().cpu().numpy()
    return np.asarray(x, dtype=np.float64)


def write_rollout_csv(path, truth, pred) -> None:
    """One row per (frame, object): truth and prediction states side by side."""
    truth, pred = _np(truth), _np(pred)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "object", "x", "y", "vx", "vy", "pred_x", "pred_y", "pred_vx", "pred_vy"])
        for t in range(truth.shape[0]):
            for i in range(truth.shape[1]):
                w.writerow([t, i, *truth[t, i].tolist(), *pred[t, i].tolist()])


def rollout_svg(truth, pred, size: int = 480, title: str = "") -> str:
    """x-y trajectories: truth as solid lines, prediction dashed."""
    truth, pred = _np(truth), _np(pred)
    pts = np.concatenate([truth[..., :2].reshape(-1, 2), pred[..., :2].reshape(-1, 2)])
    pts = pts[np.isfinite(pts).all(axis=1)]
    lo = pts.min(axis=0) if len(pts) else np.zeros(2)
    span = max(float((pts.max(axis=0) - lo).max()) if len(pts) else 1.0, 1e-9)
    pad = 20

    def xy(p):
        q = (p - lo) / span * (size - 2 * pad) + pad
        return f"{q[0]:.2f},{size - q[1]:.2f}"

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
             f'viewBox="0 0 {size} {size}">',
             f'<rect width="{size}" height="{size}" fill="white"/>']
    if title:
        parts.append(f'<text x="{pad}" y="14" font-size="12">{escape(title)}</text>')
    for i in range(truth.shape[1]):
        color = PALETTE[i % len(PALETTE)]
        for series, dash in ((truth, ""), (pred, ' stroke-dasharray="5,3"')):
            line = " ".join(xy(p) for p in series[:, i, :2] if np.isfinite(p).all())
            parts.append(f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>')
    parts.append("</svg>")
    return "\n".join(parts)


def write_edge_csv(path, probs) -> None:
    """(n, n) edge probabilities (or (n, n, K), summed over types >= 1)."""
    probs = _np(probs)
    if probs.ndim == 3:
        probs = probs[..., 1:].sum(axis=-1)
    np.savetxt(path, probs, delimiter=",", fmt="%.6f")


def edge_heatmap_svg(probs, cell: int = 36) -> str:
    probs = _np(probs)
    if probs.ndim == 3:
        probs = probs[..., 1:].sum(axis=-1)
    n = probs.shape[0]
    size = n * cell
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
             f'viewBox="0 0 {size} {size}">']
    for i in range(n):
        for j in range(n):
            v = float(np.clip(probs[i, j], 0.0, 1.0)) if np.isfinite(probs[i, j]) else 0.0
            shade = int(round(255 * (1 - v)))
            parts.append(f'<rect x="{j * cell}" y="{i * cell}" width="{cell}" height="{cell}" '
                         f'fill="rgb({shade},{shade},255)" stroke="#888"><title>{i}-{j}: {v:.3f}</title></rect>')
    parts.append("</svg>")
    return "\n".join(parts)


def export_plots(out_dir, truth, pred, edge_probs=None, stem: str = "episode") -> list[Path]:
    """Write rollout CSV/SVG and, if given, edge heatmap CSV/SVG.  Returns paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / f"{stem}_rollout.csv", out / f"{stem}_rollout.svg"]
    write_rollout_csv(written[0], truth, pred)
    written[1].write_text(rollout_svg(truth, pred, title=stem), "utf-8")
    if edge_probs is not None:
        written += [out / f"{stem}_edges.csv", out / f"{stem}_edges.svg"]
        write_edge_csv(written[2], edge_probs)
        written[3].write_text(edge_heatmap_svg(edge_probs), "utf-8")
    return written
