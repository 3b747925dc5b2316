"""Hot point-set kernels with a compiled core and a numpy fallback.

The compiled extension is used when it imports; set ``FINEMANIP_PURE_PYTHON=1``
to force the fallback. ``BACKEND`` names the active implementation.
"""
from __future__ import annotations

import math
import os

import numpy as np

from . import _kernels_py

_compiled = None
if not os.environ.get("FINEMANIP_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled  # type: ignore[attr-defined]
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"
_impl = _compiled if _compiled is not None else _kernels_py


def backends() -> dict:
    """Return every available implementation keyed by name."""
    out = {"python": _kernels_py}
    if _compiled is not None:
        out["cython"] = _compiled
    return out


def _as_points(points) -> np.ndarray:
    return np.ascontiguousarray(points, dtype=np.float64)


def exact_centroid(points: np.ndarray) -> tuple[float, float, float]:
    """Correctly rounded mean, independent of point order."""
    n = points.shape[0]
    return tuple(math.fsum(points[:, k].tolist()) / n for k in range(3))


def farthest_point_sample(points, m: int, impl=None) -> np.ndarray:
    """Indices of ``m`` farthest-point samples.

    The first sample is the point farthest from the centroid; every tie is broken
    by lexicographic (x, y, z) order, so the chosen coordinates do not depend on
    the row order of ``points``.
    """
    pts = _as_points(points)
    if not 0 < m <= pts.shape[0]:
        raise ValueError(f"cannot sample {m} of {pts.shape[0]} points")
    cx, cy, cz = exact_centroid(pts)
    return (impl or _impl).farthest_point_sample(pts, int(m), cx, cy, cz)


def ball_query(points, centers, radius: float, nsample: int, impl=None) -> np.ndarray:
    """For each center, the ``nsample`` nearest points within ``radius``.

    Neighbours are ordered by (distance, x, y, z); short groups are padded with
    the nearest neighbour. Centers must be members of ``points``.
    """
    return (impl or _impl).ball_query(_as_points(points), _as_points(centers), float(radius), int(nsample))


def three_nn(points, centers, impl=None) -> tuple[np.ndarray, np.ndarray]:
    """Three nearest centers per point (indices, squared distances); ties keep center order."""
    return (impl or _impl).three_nn(_as_points(points), _as_points(centers))


def lcs_length(a, b, impl=None) -> int:
    """Length of the longest common subsequence of two integer sequences."""
    impl = impl or _impl
    if impl is _kernels_py:
        return _kernels_py.lcs_length(list(a), list(b))
    return impl.lcs_length(np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64))
