"""Kinematic bicycle with steering dead time and a first-order steering lag."""

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit


@dataclass(frozen=True)
class VehicleParams:
    wheelbase: float = 0.33          # m
    steer_limit: float = 0.4         # rad
    steer_time_constant: float = 0.1 # s, 0 = no lag
    dead_time_steps: int = 2
    dt: float = 0.05                 # s

    def __post_init__(self):
        if not self.wheelbase > 0:
            raise ValueError("wheelbase must be > 0")
        if not self.steer_limit > 0:
            raise ValueError("steer_limit must be > 0")
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if self.steer_time_constant < 0:
            raise ValueError("steer_time_constant must be >= 0")
        if self.dead_time_steps < 0:
            raise ValueError("dead_time_steps must be >= 0")

    @property
    def lag_gain(self):
        """Fraction of the steering error removed per step."""
        if self.steer_time_constant == 0:
            return 1.0
        return min(1.0, self.dt / self.steer_time_constant)


@dataclass
class VehicleState:
    x: float = 0.0
    y: float = 0.0
    yaw: float = 0.0
    v: float = 0.0
    steer: float = 0.0
    queue: tuple = field(default_factory=tuple)  # pending commands, oldest first

    @classmethod
    def at_rest(cls, x, y, yaw, v, params):
        return cls(x, y, wrap_angle(yaw), v, 0.0, (0.0,) * params.dead_time_steps)


@njit(cache=True)
def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    return a - 2.0 * math.pi * math.ceil((a - math.pi) / (2.0 * math.pi))


@njit(cache=True)
def step_core(x, y, yaw, v, steer, delayed_cmd, speed_ref, wheelbase, steer_limit, gain, dt):
    """Advance one step given the command leaving the dead-time queue."""
    d = min(max(delayed_cmd, -steer_limit), steer_limit)
    steer = steer + gain * (d - steer)
    steer = min(max(steer, -steer_limit), steer_limit)
    nx = x + v * math.cos(yaw) * dt
    ny = y + v * math.sin(yaw) * dt
    nyaw = wrap_angle(yaw + v * math.tan(steer) / wheelbase * dt)
    return nx, ny, nyaw, speed_ref, steer


def step(state, commanded_steer, speed_ref, params):
    """Enqueue ``commanded_steer``, pop the oldest command, integrate one step."""
    queue = state.queue + (float(commanded_steer),)
    delayed, queue = queue[0], queue[1:]
    x, y, yaw, v, steer = step_core(state.x, state.y, state.yaw, state.v, state.steer,
                                    delayed, float(speed_ref), params.wheelbase,
                                    params.steer_limit, params.lag_gain, params.dt)
    return VehicleState(x, y, yaw, v, steer, queue)


def rollout(x0, seq, speed_profile, params):
    """State trajectory ``[x0, x1, ..., xT]`` for a ``(T,)`` or ``(T, 1)`` steering sequence."""
    seq = np.asarray(seq, dtype=float).reshape(-1)
    traj = [x0]
    for u, s in zip(seq, np.asarray(speed_profile, dtype=float)):
        traj.append(step(traj[-1], u, s, params))
    return traj
