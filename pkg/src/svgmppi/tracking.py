"""Reference waypoints and the sequence state cost.

Waypoint CSV: header row ``x,y,yaw,speed`` then one waypoint per line
(m, m, rad, m/s).
"""

import csv
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .costmap import occupied
from .dynamics import wrap_angle

W_DIST = 1.0
W_YAW = 0.01
W_COLLIDE = 1000.0
# segments searched behind / ahead of the hint
DEFAULT_WINDOW = (3, 6)


@dataclass
class WaypointPath:
    x: np.ndarray
    y: np.ndarray
    yaw: np.ndarray
    speed: np.ndarray
    closed: bool = True

    def __post_init__(self):
        self.x, self.y, self.yaw, self.speed = (np.ascontiguousarray(a, dtype=float)
                                                for a in (self.x, self.y, self.yaw, self.speed))
        if len(self.x) < 2:
            raise ValueError("a path needs at least 2 waypoints")
        seg = np.hypot(np.diff(self.x), np.diff(self.y))
        if np.any(seg <= 0):
            raise ValueError("consecutive waypoints must be distinct")
        self.arc_length = np.concatenate([[0.0], np.cumsum(seg)])
        closing = math.hypot(self.x[0] - self.x[-1], self.y[0] - self.y[-1]) if self.closed else 0.0
        self.length = float(self.arc_length[-1] + closing)
        sdx = np.roll(self.x, -1) - self.x
        sdy = np.roll(self.y, -1) - self.y
        if not self.closed:
            sdx[-1] = sdy[-1] = 0.0
        with np.errstate(divide="ignore"):
            sinv = np.where(sdx * sdx + sdy * sdy > 0, 1.0 / (sdx * sdx + sdy * sdy), 0.0)
        self.segments = (sdx, sdy, sinv)

    def __len__(self):
        return len(self.x)

    def translated(self, dx, dy):
        return WaypointPath(self.x + dx, self.y + dy, self.yaw, self.speed, self.closed)

    def speed_at(self, s):
        """Reference speed at arc length ``s`` (wrapped on closed paths)."""
        if self.closed:
            s = np.mod(s, self.length)
            return np.interp(s, np.append(self.arc_length, self.length),
                             np.append(self.speed, self.speed[0]))
        return np.interp(s, self.arc_length, self.speed)

    def speed_profile(self, index, T, dt):
        """Reference speeds for ``T`` steps starting at waypoint ``index``."""
        out = np.empty(T)
        s = self.arc_length[index]
        for t in range(T):
            out[t] = self.speed_at(s)
            s += out[t] * dt
        return out


def load_waypoints(path, closed=True):
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = [h.strip() for h in next(reader)]
        if header != ["x", "y", "yaw", "speed"]:
            raise ValueError(f"{path}: header must be x,y,yaw,speed, got {header}")
        rows = np.array([[float(v) for v in r] for r in reader if r], dtype=float)
    return WaypointPath(rows[:, 0], rows[:, 1], rows[:, 2], rows[:, 3], closed)


def save_waypoints(path_obj, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["x", "y", "yaw", "speed"])
        for row in zip(path_obj.x, path_obj.y, path_obj.yaw, path_obj.speed):
            w.writerow([repr(float(v)) for v in row])


@njit(cache=True)
def nearest_core(px, py, sdx, sdy, sinv, closed, x, y, hint, back, fwd):
    """Windowed nearest-segment search around ``hint``.

    ``sdx, sdy, sinv`` are the segment vectors and inverse squared lengths
    (see :meth:`WaypointPath.segments`). Returns ``(index, distance, segment)``:
    ``index`` is the nearer end of the best segment and ``distance`` is to the
    projection onto that segment.
    """
    n = px.shape[0]
    if not closed:
        hint = min(max(hint, 0), n - 2)
    best = np.inf
    best_seg = hint
    best_t = 0.0
    for j in range(-back, fwd + 1):
        i = hint + j
        if closed:
            if i < 0:
                i += n
            elif i >= n:
                i -= n
        elif i < 0 or i >= n - 1:
            continue
        rx = x - px[i]
        ry = y - py[i]
        t = (rx * sdx[i] + ry * sdy[i]) * sinv[i]
        t = min(max(t, 0.0), 1.0)
        ex = rx - t * sdx[i]
        ey = ry - t * sdy[i]
        d2 = ex * ex + ey * ey
        if d2 < best:
            best = d2
            best_seg = i
            best_t = t
    idx = best_seg
    if best_t >= 0.5:
        idx = best_seg + 1
        if idx == n:
            idx = 0
    return idx, math.sqrt(best), best_seg


def nearest_reference(path, position, hint=0, window=DEFAULT_WINDOW):
    """``(index, dd, segment)`` for a position; pass ``segment`` as the next hint."""
    sdx, sdy, sinv = path.segments
    return nearest_core(path.x, path.y, sdx, sdy, sinv, path.closed,
                        float(position[0]), float(position[1]),
                        int(hint) % len(path), int(window[0]), int(window[1]))


def deviation(path, x, y, yaw, hint=0, window=DEFAULT_WINDOW):
    """``(index, dd, dyaw, segment)`` of a pose against the reference."""
    idx, dd, seg = nearest_reference(path, (x, y), hint, window)
    return idx, dd, float(wrap_angle(yaw - path.yaw[idx])), seg


def sequence_state_cost(traj, path, grid, hint=0, window=DEFAULT_WINDOW,
                        weights=(W_DIST, W_YAW, W_COLLIDE)):
    """Sum of ``dd^2 + 0.01 dyaw^2 + 1000 * collide`` over every state of ``traj``."""
    wd, wy, wc = weights
    total = 0.0
    for s in traj:
        _, dd, dyaw, hint = deviation(path, s.x, s.y, s.yaw, hint, window)
        col = occupied(grid.cells, grid.resolution, grid.origin[0], grid.origin[1], s.x, s.y)
        total += wd * dd * dd + wy * dyaw * dyaw + wc * col
    return total
