"""Pure numpy fallback for the compiled kernels in ``_kernels.pyx``.

Results are bit-identical to the compiled versions; the tests compare both.
"""
import numpy as np


def _sqdist(points, c):
    d = points - c
    return (d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1]) + d[:, 2] * d[:, 2]


def _lex_first(points, candidates):
    # lowest (x, y, z) among candidate indices
    sub = points[candidates]
    order = np.lexsort((sub[:, 2], sub[:, 1], sub[:, 0]))
    return int(candidates[order[0]])


def farthest_point_sample(points, m, cx, cy, cz):
    n = points.shape[0]
    out = np.empty(m, dtype=np.int64)
    d0 = _sqdist(points, np.array([cx, cy, cz]))
    best = _lex_first(points, np.flatnonzero(d0 == d0.max()))
    mind = np.full(n, np.inf)
    for k in range(m):
        out[k] = best
        np.minimum(mind, _sqdist(points, points[best]), out=mind)
        top = mind.max()
        cand = np.flatnonzero(mind == top)
        best = int(cand[0]) if cand.size == 1 else _lex_first(points, cand)
    return out


def ball_query(points, centers, radius, nsample):
    r2 = radius * radius
    out = np.empty((centers.shape[0], nsample), dtype=np.int64)
    for c in range(centers.shape[0]):
        d = _sqdist(points, centers[c])
        inside = np.flatnonzero(d <= r2)
        sub = points[inside]
        order = np.lexsort((sub[:, 2], sub[:, 1], sub[:, 0], d[inside]))
        chosen = inside[order[:nsample]]
        out[c, : chosen.size] = chosen
        out[c, chosen.size:] = chosen[0]
    return out


def three_nn(points, centers):
    diff = points[:, None, :] - centers[None, :, :]
    d = (diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1]) + diff[..., 2] * diff[..., 2]
    order = np.argsort(d, axis=1, kind="stable")[:, :3]
    if order.shape[1] < 3:
        order = np.concatenate([order, np.repeat(order[:, :1], 3 - order.shape[1], axis=1)], axis=1)
    return order.astype(np.int64), np.take_along_axis(d, order, axis=1)


def lcs_length(a, b):
    m = len(b)
    prev = [0] * (m + 1)
    for x in a:
        cur = [0] * (m + 1)
        for j in range(1, m + 1):
            if x == b[j - 1]:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = prev[j] if prev[j] >= cur[j - 1] else cur[j - 1]
        prev = cur
    return prev[m]
