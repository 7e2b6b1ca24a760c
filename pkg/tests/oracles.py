"""Slow, literal reference implementations used only as test oracles."""

import math

import numpy as np


def naive_detect_glass(intensity, thresh, grad, width):
    """Line-by-line trace of the peak detector, one beam at a time."""
    n = len(intensity)
    if n < 2:
        raise ValueError("scan too short")
    is_glass = [False] * n
    int_prev = intensity[0]
    h = None
    for p in range(1, n):
        int_p = intensity[p]
        diff = int_p - int_prev
        if int_p >= thresh:
            if diff >= grad:
                h = p
            elif h is not None and p - h <= width:
                r = (p + h) // 2
                is_glass[r] = True
        int_prev = int_p
    return is_glass


def odds_product(m_old, ps, lo=0.12, hi=0.971):
    """Fold updates as a product of odds with clamping after every step."""
    m = m_old
    for p in ps:
        o = (m / (1.0 - m)) * (p / (1.0 - p))
        m = min(max(o / (1.0 + o), lo), hi)
    return m


def sampled_traversal(start, end, step=0.01):
    """Cells visited by a segment in grid units, end cell excluded.

    Samples every ``step`` cells; when two consecutive samples differ in both
    coordinates the gap is bisected until the single-axis crossings are found,
    so corner clips are not skipped.
    """
    start = np.asarray(start, float)
    end = np.asarray(end, float)
    length = float(np.hypot(*(end - start)))
    n = max(int(math.ceil(length / step)), 1)

    def cell(t):
        q = end if t == 1.0 else start + t * (end - start)
        return (int(math.floor(q[0])), int(math.floor(q[1])))

    visited = []

    def push(c):
        if not visited or visited[-1] != c:
            visited.append(c)

    def refine(t0, c0, t1, c1, depth=0):
        if c0 == c1:
            return
        if (abs(c0[0] - c1[0]) + abs(c0[1] - c1[1]) <= 1) or depth > 60:
            push(c1)
            return
        tm = 0.5 * (t0 + t1)
        cm = cell(tm)
        refine(t0, c0, tm, cm, depth + 1)
        refine(tm, cm, t1, c1, depth + 1)

    t_prev, c_prev = 0.0, cell(0.0)
    push(c_prev)
    for k in range(1, n + 1):
        t = k / n
        c = cell(t)
        refine(t_prev, c_prev, t, c)
        t_prev, c_prev = t, c
    end_cell = cell(1.0)
    return [c for c in visited if c != end_cell]


def ray_segment_distance(origin, direction, a, b):
    """Distance along the unit ray to segment ab, or None. Solved with Cramer's rule."""
    ox, oy = origin
    dx, dy = direction
    ex, ey = b[0] - a[0], b[1] - a[1]
    det = dx * (-ey) - dy * (-ex)
    if abs(det) < 1e-15:
        return None
    rx, ry = a[0] - ox, a[1] - oy
    t = (rx * (-ey) - ry * (-ex)) / det
    u = (dx * ry - dy * rx) / det
    if t <= 0 or u < 0 or u > 1:
        return None
    return t


def dense_pose_graph_solve(poses0, constraints, iterations=100):
    """Gauss-Newton with dense normal equations, node 0 fixed.

    ``constraints`` is a list of (i, j, (zx, zy, zt), (wx, wy, wt)).
    """
    x = np.array(poses0, float)
    n = len(x)
    for _ in range(iterations):
        H = np.zeros((3 * n, 3 * n))
        g = np.zeros(3 * n)
        for i, j, z, w in constraints:
            xi, yi, ti = x[i]
            xj, yj, tj = x[j]
            c, s = math.cos(ti), math.sin(ti)
            dx, dy = xj - xi, yj - yi
            e = np.array([
                c * dx + s * dy - z[0],
                -s * dx + c * dy - z[1],
                math.remainder(tj - ti - z[2], 2 * math.pi),
            ])
            A = np.array([[-c, -s, -s * dx + c * dy], [s, -c, -c * dx - s * dy], [0, 0, -1.0]])
            B = np.array([[c, s, 0], [-s, c, 0], [0, 0, 1.0]])
            W = np.diag(w)
            J = np.zeros((3, 3 * n))
            J[:, 3 * i:3 * i + 3] = A
            J[:, 3 * j:3 * j + 3] = B
            H += J.T @ W @ J
            g += J.T @ W @ e
        step = np.linalg.solve(H[3:, 3:], -g[3:])
        x[1:] += step.reshape(-1, 3)
        if np.max(np.abs(step)) < 1e-13:
            break
    return x
