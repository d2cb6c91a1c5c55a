"""Compiled grid kernels: multi-source Dijkstra, fast marching, DDA ray casting
and bounded Chebyshev BFS.

Everything here works in cell units on plain numpy arrays; callers convert to
meters and build the masks.
"""
import numpy as np
from numba import njit

SQRT2 = np.sqrt(2.0)

# 8-neighborhood: (dr, dc, is_diagonal)
_DR = np.array([-1, 1, 0, 0, -1, -1, 1, 1], dtype=np.int64)
_DC = np.array([0, 0, -1, 1, -1, 1, -1, 1], dtype=np.int64)


@njit(cache=True, inline="always")
def _push(keys, vals, size, key, val):
    i = size
    while i > 0:
        parent = (i - 1) >> 1
        if keys[parent] <= key:
            break
        keys[i] = keys[parent]
        vals[i] = vals[parent]
        i = parent
    keys[i] = key
    vals[i] = val
    return size + 1


@njit(cache=True, inline="always")
def _pop(keys, vals, size):
    key = keys[0]
    val = vals[0]
    size -= 1
    last_k = keys[size]
    last_v = vals[size]
    i = 0
    while True:
        child = 2 * i + 1
        if child >= size:
            break
        if child + 1 < size and keys[child + 1] < keys[child]:
            child += 1
        if keys[child] >= last_k:
            break
        keys[i] = keys[child]
        vals[i] = vals[child]
        i = child
    if size > 0:
        keys[i] = last_k
        vals[i] = last_v
    return key, val, size


@njit(cache=True)
def dijkstra8(passable, src_r, src_c, stop_mask, n_stop, max_cost):
    """Octile Dijkstra from a set of sources.

    Path lengths are tracked as integer counts of axial and diagonal moves, and
    the float value is always recomputed as ``axial + diag * sqrt(2)``. That
    makes the result independent of relaxation order.

    Diagonal moves require both orthogonal cells to be passable. Expansion
    stops after ``n_stop`` cells flagged in ``stop_mask`` are settled
    (``n_stop <= 0`` disables this) or once the frontier exceeds ``max_cost``.
    Unsettled cells are +inf.
    """
    h, w = passable.shape
    dist = np.full((h, w), np.inf)
    n_ax = np.zeros((h, w), dtype=np.int64)
    n_dg = np.zeros((h, w), dtype=np.int64)
    done = np.zeros((h, w), dtype=np.bool_)
    cap = 8 * h * w + src_r.shape[0] + 1
    keys = np.empty(cap)
    vals = np.empty(cap, dtype=np.int64)
    size = 0
    for i in range(src_r.shape[0]):
        r = src_r[i]
        c = src_c[i]
        if dist[r, c] != 0.0:
            dist[r, c] = 0.0
            size = _push(keys, vals, size, 0.0, r * w + c)
    remaining = n_stop
    while size > 0:
        d, idx, size = _pop(keys, vals, size)
        r = idx // w
        c = idx - r * w
        if done[r, c] or d > dist[r, c]:
            continue
        if d > max_cost:
            break
        done[r, c] = True
        if remaining > 0 and stop_mask[r, c]:
            remaining -= 1
            if remaining == 0:
                break
        for k in range(8):
            rr = r + _DR[k]
            cc = c + _DC[k]
            if rr < 0 or rr >= h or cc < 0 or cc >= w:
                continue
            if not passable[rr, cc] or done[rr, cc]:
                continue
            if k >= 4:
                if not passable[rr, c] or not passable[r, cc]:
                    continue
                a = n_ax[r, c]
                b = n_dg[r, c] + 1
            else:
                a = n_ax[r, c] + 1
                b = n_dg[r, c]
            nd = a + b * SQRT2
            if nd < dist[rr, cc]:
                dist[rr, cc] = nd
                n_ax[rr, cc] = a
                n_dg[rr, cc] = b
                size = _push(keys, vals, size, nd, rr * w + cc)
    for r in range(h):
        for c in range(w):
            if not done[r, c]:
                dist[r, c] = np.inf
    return dist


@njit(cache=True)
def _eikonal_update(T, known, r, c):
    h, w = T.shape
    a = np.inf
    if c > 0 and known[r, c - 1]:
        a = T[r, c - 1]
    if c < w - 1 and known[r, c + 1] and T[r, c + 1] < a:
        a = T[r, c + 1]
    b = np.inf
    if r > 0 and known[r - 1, c]:
        b = T[r - 1, c]
    if r < h - 1 and known[r + 1, c] and T[r + 1, c] < b:
        b = T[r + 1, c]
    if a > b:
        a, b = b, a
    if b - a >= 1.0:
        return a + 1.0
    return 0.5 * (a + b + np.sqrt(2.0 - (a - b) * (a - b)))


@njit(cache=True)
def fmm(free, src_r, src_c, src_t, stop_mask, n_stop):
    """First-order fast marching, unit speed, 4-neighbor upwind stencil.

    ``src_t`` are initial arrival values of the sources (zeros for the plain
    solve). Marching stops once ``n_stop`` flagged cells are accepted; cells
    not accepted by then are +inf.
    """
    h, w = free.shape
    T = np.full((h, w), np.inf)
    known = np.zeros((h, w), dtype=np.bool_)
    cap = 4 * h * w + src_r.shape[0] + 1
    keys = np.empty(cap)
    vals = np.empty(cap, dtype=np.int64)
    size = 0
    for i in range(src_r.shape[0]):
        r = src_r[i]
        c = src_c[i]
        if src_t[i] < T[r, c]:
            T[r, c] = src_t[i]
            size = _push(keys, vals, size, src_t[i], r * w + c)
    remaining = n_stop
    while size > 0:
        t, idx, size = _pop(keys, vals, size)
        r = idx // w
        c = idx - r * w
        if known[r, c] or t > T[r, c]:
            continue
        known[r, c] = True
        if remaining > 0 and stop_mask[r, c]:
            remaining -= 1
            if remaining == 0:
                break
        for k in range(4):
            rr = r + _DR[k]
            cc = c + _DC[k]
            if rr < 0 or rr >= h or cc < 0 or cc >= w:
                continue
            if not free[rr, cc] or known[rr, cc]:
                continue
            nt = _eikonal_update(T, known, rr, cc)
            if nt < T[rr, cc]:
                T[rr, cc] = nt
                size = _push(keys, vals, size, nt, rr * w + cc)
    for r in range(h):
        for c in range(w):
            if not known[r, c]:
                T[r, c] = np.inf
    return T


@njit(cache=True)
def cast_rays(blocked, x0, y0, angles, max_range, out):
    """Amanatides-Woo traversal of one ray per angle.

    ``(x0, y0)`` is (col, row) in continuous cell coordinates; angle 0 points
    along +col and angles grow counterclockwise (toward -row). A cell is
    visible when the ray enters it within ``max_range``. Blocked cells are
    marked visible and terminate the ray. ``out`` is OR-ed in place.
    """
    h, w = blocked.shape
    for i in range(angles.shape[0]):
        dx = np.cos(angles[i])
        dy = -np.sin(angles[i])
        cx = int(np.floor(x0))
        cy = int(np.floor(y0))
        if cx < 0 or cx >= w or cy < 0 or cy >= h:
            continue
        if abs(dx) < 1e-12:
            step_x = 0
            t_max_x = np.inf
            t_dx = np.inf
        elif dx > 0:
            step_x = 1
            t_max_x = (cx + 1 - x0) / dx
            t_dx = 1.0 / dx
        else:
            step_x = -1
            t_max_x = (x0 - cx) / -dx
            t_dx = -1.0 / dx
        if abs(dy) < 1e-12:
            step_y = 0
            t_max_y = np.inf
            t_dy = np.inf
        elif dy > 0:
            step_y = 1
            t_max_y = (cy + 1 - y0) / dy
            t_dy = 1.0 / dy
        else:
            step_y = -1
            t_max_y = (y0 - cy) / -dy
            t_dy = -1.0 / dy
        while True:
            out[cy, cx] = True
            if blocked[cy, cx]:
                break
            if t_max_x < t_max_y:
                t = t_max_x
                cx += step_x
                t_max_x += t_dx
            else:
                t = t_max_y
                cy += step_y
                t_max_y += t_dy
            if t > max_range:
                break
            if cx < 0 or cx >= w or cy < 0 or cy >= h:
                break
    return out


@njit(cache=True)
def chebyshev_bfs(passable, seeds, max_steps):
    """Unit-cost 8-connected BFS from ``seeds`` through ``passable`` cells,
    truncated at ``max_steps``. Diagonal moves may not cut corners.
    Returns hop counts, -1 where not reached."""
    h, w = passable.shape
    hops = np.full((h, w), -1, dtype=np.int64)
    queue = np.empty(h * w, dtype=np.int64)
    head = 0
    tail = 0
    for r in range(h):
        for c in range(w):
            if seeds[r, c] and passable[r, c]:
                hops[r, c] = 0
                queue[tail] = r * w + c
                tail += 1
    while head < tail:
        idx = queue[head]
        head += 1
        r = idx // w
        c = idx - r * w
        if hops[r, c] >= max_steps:
            continue
        for k in range(8):
            rr = r + _DR[k]
            cc = c + _DC[k]
            if rr < 0 or rr >= h or cc < 0 or cc >= w:
                continue
            if not passable[rr, cc] or hops[rr, cc] >= 0:
                continue
            if k >= 4 and (not passable[rr, c] or not passable[r, cc]):
                continue
            hops[rr, cc] = hops[r, c] + 1
            queue[tail] = rr * w + cc
            tail += 1
    return hops


@njit(cache=True)
def _upwind_axis(lo, hi, t):
    if lo < hi and lo < t:
        return lo - t
    if hi < t:
        return t - hi
    return 0.0


@njit(cache=True)
def descend(T, free, sources, r, c, max_len):
    """Gradient descent path readout on an arrival field (see
    planner.extract_path). Returns (cells, stalled)."""
    h, w = T.shape
    cap = max_len if max_len > 0 else h * w + 1
    path = np.empty((min(cap, h * w + 1), 2), dtype=np.int64)
    path[0, 0] = r
    path[0, 1] = c
    n = 1
    y = float(r)
    x = float(c)
    inner = 0
    stalled = False
    inf = np.inf
    while T[r, c] > 0.0 and not sources[r, c]:
        if n >= cap:
            break
        cur = T[r, c]
        up = T[r - 1, c] if r > 0 else inf
        dn = T[r + 1, c] if r < h - 1 else inf
        lf = T[r, c - 1] if c > 0 else inf
        rt = T[r, c + 1] if c < w - 1 else inf
        dy = _upwind_axis(up, dn, cur)
        dx = _upwind_axis(lf, rt, cur)
        nrm = np.hypot(dy, dx)
        nr = -1
        nc = -1
        if nrm > 0.0 and inner < 4:
            ny = y + 0.5 * dy / nrm
            nx = x + 0.5 * dx / nrm
            rr = int(np.rint(ny))
            cc = int(np.rint(nx))
            if rr == r and cc == c:
                y = ny
                x = nx
                inner += 1
                continue
            if (0 <= rr < h and 0 <= cc < w and max(abs(rr - r), abs(cc - c)) == 1
                    and T[rr, cc] < cur
                    and not (rr != r and cc != c and not (free[r, cc] and free[rr, c]))):
                nr = rr
                nc = cc
                y = ny
                x = nx
        if nr < 0:
            best = 0.0
            for k in range(8):
                rr = r + _DR[k]
                cc = c + _DC[k]
                if rr < 0 or rr >= h or cc < 0 or cc >= w:
                    continue
                t = T[rr, cc]
                if not t < cur:
                    continue
                diag = k >= 4
                if diag and not (free[r, cc] and free[rr, c]):
                    continue
                slope = (t - cur) / (SQRT2 if diag else 1.0)
                if slope < best:
                    nr = rr
                    nc = cc
                    best = slope
            if nr < 0:
                stalled = True
                break
            y = float(nr)
            x = float(nc)
        inner = 0
        r = nr
        c = nc
        path[n, 0] = r
        path[n, 1] = c
        n += 1
    # staircase merge
    out = np.empty((n, 2), dtype=np.int64)
    out[0] = path[0]
    m = 1
    i = 0
    while i < n - 1:
        r0 = path[i, 0]
        c0 = path[i, 1]
        j = i + 1
        while j + 1 < n:
            rr = path[j + 1, 0]
            cc = path[j + 1, 1]
            if max(abs(rr - r0), abs(cc - c0)) != 1:
                break
            if rr != r0 and cc != c0 and not (free[r0, cc] and free[rr, c0]):
                break
            j += 1
        out[m] = path[j]
        m += 1
        i = j
    return out[:m], stalled, path[n - 1, 0], path[n - 1, 1]
