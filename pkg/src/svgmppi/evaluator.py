"""Batched rollout + sequence state cost for the vehicle tracking problem.

Each sample is independent, so results do not depend on the numba thread
count.
"""

import os

import numba
import numpy as np
from numba import njit, prange

from .costmap import occupied
from .dynamics import step_core, wrap_angle
from .tracking import DEFAULT_WINDOW, W_COLLIDE, W_DIST, W_YAW, nearest_core

THREADS_ENV = "SVGMPPI_NUM_THREADS"


def configure_threads(n=None):
    """Set the numba thread count from ``n`` or the ``SVGMPPI_NUM_THREADS`` variable."""
    if n is None:
        n = os.environ.get(THREADS_ENV)
    if n:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
    return numba.get_num_threads()


@njit(parallel=True, cache=True)
def batch_costs(seqs, x0, y0, yaw0, v0, steer0, queue0, speeds,
                px, py, sdx, sdy, sinv, pyaw, closed, hint, back, fwd,
                cells, res, ox, oy,
                wheelbase, steer_limit, gain, dt, w_d, w_y, w_c):
    K, T = seqs.shape
    nq = queue0.shape[0]
    out = np.empty(K)
    for k in prange(K):
        x, y, yaw, v, steer = x0, y0, yaw0, v0, steer0
        h = hint
        total = 0.0
        for t in range(T + 1):
            idx, dd, seg = nearest_core(px, py, sdx, sdy, sinv, closed, x, y, h, back, fwd)
            h = seg
            dyaw = wrap_angle(yaw - pyaw[idx])
            total += w_d * dd * dd + w_y * dyaw * dyaw + w_c * occupied(cells, res, ox, oy, x, y)
            if t == T:
                break
            cmd = queue0[t] if t < nq else seqs[k, t - nq]
            x, y, yaw, v, steer = step_core(x, y, yaw, v, steer, cmd, speeds[t],
                                            wheelbase, steer_limit, gain, dt)
        out[k] = total
    return out


class TrackingEvaluator:
    """Cost oracle ``(x0, seqs) -> costs`` for steering sequences on a track.

    ``hint`` is the reference segment nearest the vehicle; the harness keeps
    it up to date.
    """

    def __init__(self, path, grid, params, window=DEFAULT_WINDOW,
                 weights=(W_DIST, W_YAW, W_COLLIDE)):
        self.path = path
        self.grid = grid
        self.params = params
        self.window = window
        self.weights = weights
        self.hint = 0

    def speeds(self, T):
        idx = self.hint % len(self.path)
        return self.path.speed_profile(idx, T, self.params.dt)

    def __call__(self, x0, seqs):
        seqs = np.asarray(seqs, dtype=float)
        if seqs.ndim == 3:
            if seqs.shape[2] != 1:
                raise ValueError("the vehicle has a single steering input (m=1)")
            seqs = seqs[:, :, 0]
        seqs = np.ascontiguousarray(seqs)
        T = seqs.shape[1]
        p, g = self.params, self.grid
        queue = np.asarray(x0.queue, dtype=float)
        if len(queue) != p.dead_time_steps:
            raise ValueError(f"state queue length {len(queue)} != dead_time_steps {p.dead_time_steps}")
        return batch_costs(seqs, float(x0.x), float(x0.y), float(x0.yaw), float(x0.v),
                           float(x0.steer), queue, self.speeds(T),
                           self.path.x, self.path.y, *self.path.segments, self.path.yaw, self.path.closed,
                           int(self.hint), int(self.window[0]), int(self.window[1]),
                           g.cells, float(g.resolution), float(g.origin[0]), float(g.origin[1]),
                           p.wheelbase, p.steer_limit, p.lag_gain, p.dt, *map(float, self.weights))
