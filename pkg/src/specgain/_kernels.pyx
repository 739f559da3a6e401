# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled ray kernels; same contract and arithmetic order as _pykernels."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, cos, sin, exp, log2, INFINITY

cnp.import_array()

BACKEND = "cython"


cdef inline double _entropy(double p) nogil:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * log2(p) - (1.0 - p) * log2(1.0 - p)


cdef inline double _sigmoid(double l) nogil:
    return 1.0 / (1.0 + exp(-l))


cdef inline double _clip(double v, double lo, double hi) nogil:
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


cdef struct Walk:
    int ix, iy, step_x, step_y, width, height
    double t, t_max_x, t_max_y, t_delta_x, t_delta_y, max_range
    int done


cdef inline void _walk_init(Walk* w, int width, int height, double res,
                            double x0, double y0, double angle, double max_range) nogil:
    cdef double dx, dy
    w.width = width
    w.height = height
    w.max_range = max_range
    w.t = 0.0
    w.done = 0
    if max_range <= 0.0:
        w.done = 1
        return
    w.ix = <int>floor(x0 / res)
    w.iy = <int>floor(y0 / res)
    if w.ix < 0 or w.iy < 0 or w.ix >= width or w.iy >= height:
        w.done = 1
        return
    dx = cos(angle)
    dy = sin(angle)
    if dx > 0.0:
        w.step_x = 1
        w.t_max_x = ((w.ix + 1) * res - x0) / dx
        w.t_delta_x = res / dx
    elif dx < 0.0:
        w.step_x = -1
        w.t_max_x = (w.ix * res - x0) / dx
        w.t_delta_x = -res / dx
    else:
        w.step_x = 0
        w.t_max_x = INFINITY
        w.t_delta_x = INFINITY
    if dy > 0.0:
        w.step_y = 1
        w.t_max_y = ((w.iy + 1) * res - y0) / dy
        w.t_delta_y = res / dy
    elif dy < 0.0:
        w.step_y = -1
        w.t_max_y = (w.iy * res - y0) / dy
        w.t_delta_y = -res / dy
    else:
        w.step_y = 0
        w.t_max_y = INFINITY
        w.t_delta_y = INFINITY


cdef inline int _walk_next(Walk* w, int* ix, int* iy, double* t0, double* t1) nogil:
    """Emit the current cell and advance; returns 0 when exhausted."""
    cdef double t_next
    if w.done:
        return 0
    ix[0] = w.ix
    iy[0] = w.iy
    t0[0] = w.t
    if w.t_max_x < w.t_max_y:
        t_next = w.t_max_x
        w.ix += w.step_x
        w.t_max_x += w.t_delta_x
    else:
        t_next = w.t_max_y
        w.iy += w.step_y
        w.t_max_y += w.t_delta_y
    t1[0] = t_next if t_next < w.max_range else w.max_range
    w.t = t_next
    if t_next >= w.max_range or w.ix < 0 or w.iy < 0 or w.ix >= w.width or w.iy >= w.height:
        w.done = 1
    return 1


def traverse(int width, int height, double res, double x0, double y0, double angle, double max_range):
    cdef Walk w
    cdef int ix, iy
    cdef double t0, t1
    cells = []
    enters = []
    _walk_init(&w, width, height, res, x0, y0, angle, max_range)
    while _walk_next(&w, &ix, &iy, &t0, &t1):
        cells.append((ix, iy))
        enters.append(t0)
    return np.array(cells, dtype=np.int64).reshape(-1, 2), np.array(enters, dtype=np.float64)


def cast_rays(occupied, double res, double x0, double y0, angles, double max_range):
    cdef cnp.uint8_t[:, :] occ = np.ascontiguousarray(occupied, dtype=np.uint8)
    cdef double[:] ang = np.ascontiguousarray(angles, dtype=np.float64)
    cdef Py_ssize_t n = ang.shape[0], k
    out = np.empty(n, dtype=np.float64)
    cdef double[:] o = out
    cdef Walk w
    cdef int ix, iy
    cdef double t0, t1, depth
    with nogil:
        for k in range(n):
            depth = max_range
            _walk_init(&w, <int>occ.shape[0], <int>occ.shape[1], res, x0, y0, ang[k], max_range)
            while _walk_next(&w, &ix, &iy, &t0, &t1):
                if occ[ix, iy]:
                    depth = t0
                    break
            o[k] = depth
    return out


def apply_observation(logodds, double res, double x0, double y0, angles, depths,
                      double max_range, double l_hit, double l_miss, double l_max):
    cdef double[:, :] lo = logodds
    cdef double[:] ang = np.ascontiguousarray(angles, dtype=np.float64)
    cdef double[:] dep = np.ascontiguousarray(depths, dtype=np.float64)
    cdef int width = lo.shape[0], height = lo.shape[1]
    delta_arr = np.zeros((width, height), dtype=np.float64)
    touched_arr = np.zeros((width, height), dtype=np.uint8)
    cdef double[:, :] delta = delta_arr
    cdef cnp.uint8_t[:, :] touched = touched_arr
    cdef Py_ssize_t k, n = ang.shape[0]
    cdef Walk w
    cdef int ix, iy, hit
    cdef double t0, t1, depth
    with nogil:
        for k in range(n):
            depth = dep[k]
            hit = depth < max_range
            _walk_init(&w, width, height, res, x0, y0, ang[k], max_range)
            while _walk_next(&w, &ix, &iy, &t0, &t1):
                touched[ix, iy] = 1
                if hit and depth < t1:
                    delta[ix, iy] += l_hit
                    break
                delta[ix, iy] += l_miss
        for ix in range(width):
            for iy in range(height):
                if touched[ix, iy]:
                    lo[ix, iy] = _clip(lo[ix, iy] + delta[ix, iy], -l_max, l_max)
    return touched_arr.astype(bool)


def rollforward(logodds, double res, double x0, double y0, angles,
                double max_range, double l_hit, double l_miss, double l_max):
    cdef double[:, :] lo = logodds
    cdef double[:] ang = np.ascontiguousarray(angles, dtype=np.float64)
    cdef int width = lo.shape[0], height = lo.shape[1]
    delta_arr = np.zeros((width, height), dtype=np.float64)
    touched_arr = np.zeros((width, height), dtype=np.uint8)
    cdef double[:, :] delta = delta_arr
    cdef cnp.uint8_t[:, :] touched = touched_arr
    cdef Py_ssize_t k, n = ang.shape[0]
    cdef Walk w
    cdef int ix, iy
    cdef double t0, t1
    with nogil:
        for k in range(n):
            _walk_init(&w, width, height, res, x0, y0, ang[k], max_range)
            while _walk_next(&w, &ix, &iy, &t0, &t1):
                touched[ix, iy] = 1
                if lo[ix, iy] >= 0.0:
                    delta[ix, iy] += l_hit
                    break
                delta[ix, iy] += l_miss
        for ix in range(width):
            for iy in range(height):
                if touched[ix, iy]:
                    lo[ix, iy] = _clip(lo[ix, iy] + delta[ix, iy], -l_max, l_max)
    return touched_arr.astype(bool)


def expected_gain(logodds, double res, double x0, double y0, angles,
                  double max_range, double l_hit, double l_miss, double l_max):
    cdef double[:, :] lo = np.ascontiguousarray(logodds, dtype=np.float64)
    cdef double[:] ang = np.ascontiguousarray(angles, dtype=np.float64)
    cdef int width = lo.shape[0], height = lo.shape[1]
    cdef Py_ssize_t k, n = ang.shape[0]
    cdef Walk w
    cdef int ix, iy
    cdef long cells = 0
    cdef double t0, t1, l, p, after_hit, after_miss, reach, total = 0.0
    seen_arr = np.zeros((width, height), dtype=np.uint8)
    cdef cnp.uint8_t[:, :] seen = seen_arr
    with nogil:
        for k in range(n):
            reach = 1.0
            _walk_init(&w, width, height, res, x0, y0, ang[k], max_range)
            while _walk_next(&w, &ix, &iy, &t0, &t1):
                l = lo[ix, iy]
                p = _sigmoid(l)
                after_hit = _entropy(_sigmoid(_clip(l + l_hit, -l_max, l_max)))
                after_miss = _entropy(_sigmoid(_clip(l + l_miss, -l_max, l_max)))
                total += reach * (_entropy(p) - p * after_hit - (1.0 - p) * after_miss)
                reach *= 1.0 - p
                if not seen[ix, iy]:
                    seen[ix, iy] = 1
                    cells += 1
    return total, cells


def footprint_cells(int width, int height, double res, double x0, double y0, angles, double max_range):
    cdef double[:] ang = np.ascontiguousarray(angles, dtype=np.float64)
    cdef Py_ssize_t k, n = ang.shape[0]
    cdef Walk w
    cdef int ix, iy
    cdef double t0, t1
    mask_arr = np.zeros((width, height), dtype=np.uint8)
    cdef cnp.uint8_t[:, :] mask = mask_arr
    with nogil:
        for k in range(n):
            _walk_init(&w, width, height, res, x0, y0, ang[k], max_range)
            while _walk_next(&w, &ix, &iy, &t0, &t1):
                mask[ix, iy] = 1
    return mask_arr.astype(bool)
