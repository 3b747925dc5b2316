# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled point-set and sequence kernels.

Must stay bit-compatible with ``_kernels_py``: every distance is accumulated
as ``(dx*dx + dy*dy) + dz*dz`` in float64 and every tie is broken the same way.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline bint _lex_less(const double[:, ::1] p, Py_ssize_t a, Py_ssize_t b) noexcept nogil:
    if p[a, 0] != p[b, 0]:
        return p[a, 0] < p[b, 0]
    if p[a, 1] != p[b, 1]:
        return p[a, 1] < p[b, 1]
    return p[a, 2] < p[b, 2]


def farthest_point_sample(const double[:, ::1] points, Py_ssize_t m, double cx, double cy, double cz):
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t i, k, best
    cdef double d, dx, dy, dz, bestd
    out = np.empty(m, dtype=np.int64)
    cdef cnp.int64_t[::1] idx = out
    mind_arr = np.full(n, np.inf, dtype=np.float64)
    cdef double[::1] mind = mind_arr

    with nogil:
        best = 0
        bestd = -1.0
        for i in range(n):
            dx = points[i, 0] - cx
            dy = points[i, 1] - cy
            dz = points[i, 2] - cz
            d = (dx * dx + dy * dy) + dz * dz
            if d > bestd or (d == bestd and _lex_less(points, i, best)):
                bestd = d
                best = i
        for k in range(m):
            idx[k] = best
            cx = points[best, 0]
            cy = points[best, 1]
            cz = points[best, 2]
            bestd = -1.0
            for i in range(n):
                dx = points[i, 0] - cx
                dy = points[i, 1] - cy
                dz = points[i, 2] - cz
                d = (dx * dx + dy * dy) + dz * dz
                if d < mind[i]:
                    mind[i] = d
            best = 0
            for i in range(n):
                if mind[i] > bestd or (mind[i] == bestd and _lex_less(points, i, best)):
                    bestd = mind[i]
                    best = i
    return out


def ball_query(const double[:, ::1] points, const double[:, ::1] centers, double radius, Py_ssize_t nsample):
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t m = centers.shape[0]
    cdef Py_ssize_t c, i, j, cnt, pos
    cdef double dx, dy, dz, d, r2 = radius * radius
    out = np.empty((m, nsample), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] idx = out
    dist_arr = np.empty(nsample, dtype=np.float64)
    cdef double[::1] kd = dist_arr
    cdef cnp.int64_t[::1] ki

    ki_arr = np.empty(nsample, dtype=np.int64)
    ki = ki_arr
    with nogil:
        for c in range(m):
            cnt = 0
            for i in range(n):
                dx = points[i, 0] - centers[c, 0]
                dy = points[i, 1] - centers[c, 1]
                dz = points[i, 2] - centers[c, 2]
                d = (dx * dx + dy * dy) + dz * dz
                if d > r2:
                    continue
                # insertion into a bounded sorted list keyed by (distance, lexicographic coords)
                if cnt == nsample:
                    j = cnt - 1
                    if d > kd[j] or (d == kd[j] and not _lex_less(points, i, ki[j])):
                        continue
                    pos = j
                else:
                    pos = cnt
                    cnt += 1
                while pos > 0 and (d < kd[pos - 1] or (d == kd[pos - 1] and _lex_less(points, i, ki[pos - 1]))):
                    kd[pos] = kd[pos - 1]
                    ki[pos] = ki[pos - 1]
                    pos -= 1
                kd[pos] = d
                ki[pos] = i
            for j in range(cnt):
                idx[c, j] = ki[j]
            for j in range(cnt, nsample):
                idx[c, j] = ki[0]
    return out


def three_nn(const double[:, ::1] points, const double[:, ::1] centers):
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t m = centers.shape[0]
    cdef Py_ssize_t i, c, j, pos
    cdef double dx, dy, dz, d
    cdef double bd[3]
    cdef Py_ssize_t bi[3]
    out_i = np.empty((n, 3), dtype=np.int64)
    out_d = np.empty((n, 3), dtype=np.float64)
    cdef cnp.int64_t[:, ::1] oi = out_i
    cdef double[:, ::1] od = out_d
    with nogil:
        for i in range(n):
            bd[0] = bd[1] = bd[2] = 1e300
            bi[0] = bi[1] = bi[2] = 0
            for c in range(m):
                dx = points[i, 0] - centers[c, 0]
                dy = points[i, 1] - centers[c, 1]
                dz = points[i, 2] - centers[c, 2]
                d = (dx * dx + dy * dy) + dz * dz
                if d >= bd[2]:
                    continue
                pos = 2
                while pos > 0 and d < bd[pos - 1]:
                    bd[pos] = bd[pos - 1]
                    bi[pos] = bi[pos - 1]
                    pos -= 1
                bd[pos] = d
                bi[pos] = c
            for j in range(3):
                oi[i, j] = bi[j] if m > j else bi[0]
                od[i, j] = bd[j] if m > j else bd[0]
    return out_i, out_d


def lcs_length(const cnp.int64_t[::1] a, const cnp.int64_t[::1] b):
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t m = b.shape[0]
    cdef Py_ssize_t i, j
    prev_arr = np.zeros(m + 1, dtype=np.int64)
    cur_arr = np.zeros(m + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] prev = prev_arr
    cdef cnp.int64_t[::1] cur = cur_arr
    cdef cnp.int64_t[::1] tmp
    for i in range(1, n + 1):
        cur[0] = 0
        for j in range(1, m + 1):
            if a[i - 1] == b[j - 1]:
                cur[j] = prev[j - 1] + 1
            elif prev[j] >= cur[j - 1]:
                cur[j] = prev[j]
            else:
                cur[j] = cur[j - 1]
        tmp = prev
        prev = cur
        cur = tmp
    return int(prev[m])
