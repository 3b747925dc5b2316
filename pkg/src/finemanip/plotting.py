"""Static affordance heatmaps: top-down and front orthographic projections."""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .sim.world import WORKSPACE_HI, WORKSPACE_LO

PANEL = 256
LOW = np.array([30.0, 30.0, 110.0])
HIGH = np.array([255.0, 225.0, 40.0])
SPLAT_RADIUS = 1.5  # pixels
FILL_K = 4  # neighbours for inverse-distance fill of empty pixels


def project(points: np.ndarray, view: str, size: int = PANEL) -> np.ndarray:
    """Pixel coordinates (col, row) of points in the 'top' (x, y) or 'front' (x, z) view."""
    axes = (0, 1) if view == "top" else (0, 2)
    lo, hi = WORKSPACE_LO[list(axes)], WORKSPACE_HI[list(axes)]
    uv = (np.asarray(points, dtype=np.float64)[:, axes] - lo) / (hi - lo)
    col = uv[:, 0] * (size - 1)
    row = (1.0 - uv[:, 1]) * (size - 1)  # up is up
    return np.stack([col, row], axis=1)


def _panel(points, scores, view: str, size: int) -> np.ndarray:
    px = project(points, view, size)
    rr, cc = np.mgrid[0:size, 0:size]
    grid = np.stack([cc.ravel(), rr.ravel()], axis=1).astype(np.float64)
    out = np.empty(len(grid))
    for i in range(0, len(grid), 4096):
        g = grid[i : i + 4096]
        d2 = ((g[:, None, :] - px[None, :, :]) ** 2).sum(-1)
        near = d2 <= SPLAT_RADIUS**2
        splat = np.where(near, scores[None, :], -np.inf).max(axis=1)
        k = min(FILL_K, len(scores))
        nn = np.argpartition(d2, k - 1, axis=1)[:, :k]
        w = 1.0 / np.maximum(np.take_along_axis(d2, nn, axis=1), 1e-12)
        fill = (w * scores[nn]).sum(axis=1) / w.sum(axis=1)
        out[i : i + 4096] = np.where(np.isfinite(splat), splat, fill)
    return out.reshape(size, size)


def colorize(values: np.ndarray) -> np.ndarray:
    v = np.clip(values, 0.0, 1.0)[..., None]
    return np.rint(LOW + v * (HIGH - LOW)).astype(np.uint8)


def _mark(img: np.ndarray, col: float, row: float) -> None:
    c, r = int(round(col)), int(round(row))
    h, w = img.shape[:2]
    for k in range(-4, 5):
        for rr, cc in ((r + k, c), (r, c + k)):
            if 0 <= rr < h and 0 <= cc < w:
                img[rr, cc] = (230, 20, 20)


def render_affordance(points, scores, contact_index: int | None = None, mark_contact: bool = True,
                      size: int = PANEL) -> np.ndarray:
    """H × 2W × 3 uint8 image: top-down panel then front panel."""
    points = np.asarray(points, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    if points.shape[0] != scores.shape[0]:
        raise ValueError("scores must align with points")
    panels = []
    for view in ("top", "front"):
        img = colorize(_panel(points, scores, view, size))
        if mark_contact and contact_index is not None:
            col, row = project(points[contact_index : contact_index + 1], view, size)[0]
            _mark(img, col, row)
        panels.append(img)
    return np.concatenate(panels, axis=1)


def plot_affordance_heatmap(points, scores, out_path, contact_index: int | None = None,
                            mark_contact: bool = True) -> Path:
    """Write the two-panel heatmap as a PNG (no metadata, so bytes are reproducible)."""
    img = render_affordance(points, scores, contact_index, mark_contact)
    out = Path(out_path)
    Image.fromarray(img, mode="RGB").save(out, format="PNG", optimize=False)
    return out
