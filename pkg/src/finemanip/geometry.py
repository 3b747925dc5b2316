"""Quaternion and oriented-box helpers. Quaternions are (w, x, y, z)."""
from __future__ import annotations

import numpy as np

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


def normalize_quat(q, tol: float | None = None) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    n = float(np.linalg.norm(q))
    if n == 0.0 or not np.isfinite(n):
        raise ValueError("zero-norm or non-finite quaternion")
    if tol is not None and abs(n - 1.0) > tol:
        raise ValueError(f"quaternion norm {n:.6f} deviates from 1 by more than {tol}")
    return q / n


def canonical_quat(q) -> np.ndarray:
    """Sign-canonicalize so the scalar part is non-negative."""
    q = np.asarray(q, dtype=np.float64)
    return -q if q[0] < 0 else q.copy()


def quat_multiply(a, b) -> np.ndarray:
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def axis_angle_quat(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    s = np.sin(angle / 2.0)
    return np.array([np.cos(angle / 2.0), *(axis * s)])


def rotate_about(point, origin, axis, angle: float) -> np.ndarray:
    r = quat_to_matrix(axis_angle_quat(axis, angle))
    return origin + r @ (np.asarray(point) - origin)


def segment_box_entry(p0, p1, center, half, rot) -> tuple[float, float] | None:
    """Parameter interval [t_in, t_out] within [0, 1] where segment p0->p1 is inside an oriented box.

    ``t_in`` is 0.0 if p0 already lies inside; None if the segment misses.
    """
    r = quat_to_matrix(rot)
    a = r.T @ (np.asarray(p0) - center)
    b = r.T @ (np.asarray(p1) - center)
    d = b - a
    t_lo, t_hi = 0.0, 1.0
    for k in range(3):
        if abs(d[k]) < 1e-15:
            if abs(a[k]) > half[k]:
                return None
            continue
        t1 = (-half[k] - a[k]) / d[k]
        t2 = (half[k] - a[k]) / d[k]
        if t1 > t2:
            t1, t2 = t2, t1
        t_lo = max(t_lo, t1)
        t_hi = min(t_hi, t2)
        if t_lo > t_hi:
            return None
    return t_lo, t_hi


def point_box_distance(p, center, half, rot) -> float:
    """Euclidean distance from a point to an oriented box (0 inside)."""
    local = quat_to_matrix(rot).T @ (np.asarray(p) - center)
    excess = np.maximum(np.abs(local) - half, 0.0)
    return float(np.linalg.norm(excess))


def points_in_box(points, center, half, rot, margin: float = 0.0) -> np.ndarray:
    local = (np.asarray(points) - center) @ quat_to_matrix(rot)
    return np.all(np.abs(local) < np.asarray(half) - margin, axis=1)
