"""Pure-Python ray kernels.

Reference implementation of the routines in ``_kernels.pyx``; arithmetic is
performed in the same order so both backends produce identical floats.
Grids are ``(width, height)`` arrays indexed ``[x, y]``.
"""

import math

import numpy as np

BACKEND = "python"

_INF = float("inf")


def _entropy(p):
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def _sigmoid(l):
    return 1.0 / (1.0 + math.exp(-l))


def _clip(v, lo, hi):
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


def _walk(width, height, res, x0, y0, angle, max_range):
    """Yield ``(ix, iy, t_enter, t_exit)`` for every cell the ray crosses."""
    if max_range <= 0.0:
        return
    ix = int(math.floor(x0 / res))
    iy = int(math.floor(y0 / res))
    if ix < 0 or iy < 0 or ix >= width or iy >= height:
        return
    dx = math.cos(angle)
    dy = math.sin(angle)
    if dx > 0.0:
        step_x = 1
        t_max_x = ((ix + 1) * res - x0) / dx
        t_delta_x = res / dx
    elif dx < 0.0:
        step_x = -1
        t_max_x = (ix * res - x0) / dx
        t_delta_x = -res / dx
    else:
        step_x = 0
        t_max_x = _INF
        t_delta_x = _INF
    if dy > 0.0:
        step_y = 1
        t_max_y = ((iy + 1) * res - y0) / dy
        t_delta_y = res / dy
    elif dy < 0.0:
        step_y = -1
        t_max_y = (iy * res - y0) / dy
        t_delta_y = -res / dy
    else:
        step_y = 0
        t_max_y = _INF
        t_delta_y = _INF
    t = 0.0
    while True:
        if t_max_x < t_max_y:
            t_next = t_max_x
            yield ix, iy, t, (t_next if t_next < max_range else max_range)
            ix += step_x
            t_max_x += t_delta_x
        else:
            t_next = t_max_y
            yield ix, iy, t, (t_next if t_next < max_range else max_range)
            iy += step_y
            t_max_y += t_delta_y
        t = t_next
        if t >= max_range or ix < 0 or iy < 0 or ix >= width or iy >= height:
            return


def traverse(width, height, res, x0, y0, angle, max_range):
    """Cells crossed by a ray and their entry distances."""
    cells = []
    enters = []
    for ix, iy, t0, _ in _walk(width, height, res, x0, y0, angle, max_range):
        cells.append((ix, iy))
        enters.append(t0)
    return np.array(cells, dtype=np.int64).reshape(-1, 2), np.array(enters, dtype=np.float64)


def cast_rays(occupied, res, x0, y0, angles, max_range):
    """Depth to the first occupied cell along each ray (``max_range`` on a miss)."""
    width, height = occupied.shape
    occ = occupied.tolist()
    out = np.empty(len(angles), dtype=np.float64)
    for k, a in enumerate(angles):
        depth = max_range
        for ix, iy, t0, _ in _walk(width, height, res, x0, y0, float(a), max_range):
            if occ[ix][iy]:
                depth = t0
                break
        out[k] = depth
    return out


def apply_observation(logodds, res, x0, y0, angles, depths, max_range, l_hit, l_miss, l_max):
    """Additive log-odds update from one scan; returns a boolean touched mask.

    Cells before the measured depth get ``l_miss``, the cell containing the
    depth gets ``l_hit``.  Increments from all rays are summed, then the
    touched cells are clamped to ``[-l_max, l_max]``.
    """
    width, height = logodds.shape
    delta = [[0.0] * height for _ in range(width)]
    touched = np.zeros((width, height), dtype=bool)
    for a, depth in zip(angles, depths):
        hit = depth < max_range
        for ix, iy, t0, t1 in _walk(width, height, res, x0, y0, float(a), max_range):
            touched[ix, iy] = True
            if hit and depth < t1:
                delta[ix][iy] += l_hit
                break
            delta[ix][iy] += l_miss
    for ix, iy in zip(*np.nonzero(touched)):
        logodds[ix, iy] = _clip(logodds[ix, iy] + delta[ix][iy], -l_max, l_max)
    return touched


def rollforward(logodds, res, x0, y0, angles, max_range, l_hit, l_miss, l_max):
    """Apply the most likely outcome of a scan under the belief itself.

    Each ray stops at the first cell with ``p >= 0.5``.
    """
    width, height = logodds.shape
    lo = logodds.tolist()
    delta = [[0.0] * height for _ in range(width)]
    touched = np.zeros((width, height), dtype=bool)
    for a in angles:
        for ix, iy, _, _ in _walk(width, height, res, x0, y0, float(a), max_range):
            touched[ix, iy] = True
            if lo[ix][iy] >= 0.0:
                delta[ix][iy] += l_hit
                break
            delta[ix][iy] += l_miss
    for ix, iy in zip(*np.nonzero(touched)):
        logodds[ix, iy] = _clip(logodds[ix, iy] + delta[ix][iy], -l_max, l_max)
    return touched


def expected_gain(logodds, res, x0, y0, angles, max_range, l_hit, l_miss, l_max):
    """Per-ray factorized expected entropy reduction, summed over rays.

    Returns ``(bits, cells)`` where ``cells`` counts the distinct cells in the
    geometric footprint of the scan.
    """
    width, height = logodds.shape
    lo = logodds.tolist()
    seen = set()
    total = 0.0
    for a in angles:
        reach = 1.0
        for ix, iy, _, _ in _walk(width, height, res, x0, y0, float(a), max_range):
            l = lo[ix][iy]
            p = _sigmoid(l)
            after_hit = _entropy(_sigmoid(_clip(l + l_hit, -l_max, l_max)))
            after_miss = _entropy(_sigmoid(_clip(l + l_miss, -l_max, l_max)))
            total += reach * (_entropy(p) - p * after_hit - (1.0 - p) * after_miss)
            reach *= 1.0 - p
            seen.add((ix, iy))
    return total, len(seen)


def footprint_cells(width, height, res, x0, y0, angles, max_range):
    """Mask of the distinct cells a scan can touch."""
    mask = np.zeros((width, height), dtype=bool)
    for a in angles:
        for ix, iy, _, _ in _walk(width, height, res, x0, y0, float(a), max_range):
            mask[ix, iy] = True
    return mask
