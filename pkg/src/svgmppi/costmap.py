"""Occupancy grid for collision checks, plus obstacle placement.

Grid text format (version 1)::

    width height resolution origin_x origin_y
    <height lines of width characters, '#' occupied, '.' free>

The first text row is the top of the map (largest y). ``origin`` is the world
position of the lower-left corner of cell (0, 0).
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridMap:
    cells: np.ndarray        # (height, width) uint8, row 0 at the bottom
    resolution: float        # m / cell
    origin: tuple            # (x, y) m

    def __post_init__(self):
        if not self.resolution > 0:
            raise ValueError("resolution must be > 0")

    @property
    def width(self):
        return self.cells.shape[1]

    @property
    def height(self):
        return self.cells.shape[0]

    def cell_centers(self):
        """World coordinates ``(X, Y)`` of every cell centre, each ``(height, width)``."""
        ox, oy = self.origin
        xs = ox + (np.arange(self.width) + 0.5) * self.resolution
        ys = oy + (np.arange(self.height) + 0.5) * self.resolution
        return np.meshgrid(xs, ys)

    def translated(self, dx, dy):
        return GridMap(self.cells, self.resolution, (self.origin[0] + dx, self.origin[1] + dy))


@dataclass(frozen=True)
class ObstacleSpec:
    center: tuple
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("obstacle radius must be > 0")


def load_grid(path):
    with open(path) as f:
        header = f.readline().split()
        if len(header) != 5:
            raise ValueError(f"{path}: header must be 'width height resolution origin_x origin_y'")
        w, h = int(header[0]), int(header[1])
        res, ox, oy = map(float, header[2:])
        rows = [line.rstrip("\n") for line in f if line.strip()]
    if len(rows) != h or any(len(r) != w for r in rows):
        raise ValueError(f"{path}: expected {h} rows of {w} characters")
    cells = np.array([[c == "#" for c in r] for r in reversed(rows)], dtype=np.uint8)
    return GridMap(cells, res, (ox, oy))


def save_grid(grid, path):
    with open(path, "w") as f:
        f.write(f"{grid.width} {grid.height} {grid.resolution!r} {grid.origin[0]!r} {grid.origin[1]!r}\n")
        for row in grid.cells[::-1]:
            f.write("".join("#" if c else "." for c in row) + "\n")


def rasterize(track, obstacles, inflation=0.0):
    """Mark every cell whose centre lies within ``radius + inflation`` of an obstacle.

    The track's own occupancy is kept as is; obstacles off the map are clipped.
    """
    cells = track.cells.copy()
    if obstacles:
        X, Y = track.cell_centers()
        for ob in obstacles:
            r = ob.radius + inflation
            cells[(X - ob.center[0]) ** 2 + (Y - ob.center[1]) ** 2 <= r * r] = 1
    return GridMap(cells, track.resolution, track.origin)


@njit(cache=True)
def occupied(cells, resolution, ox, oy, x, y):
    """1 if the cell containing (x, y) is occupied or off the map, else 0."""
    fx = (x - ox) / resolution
    fy = (y - oy) / resolution
    if not (fx >= 0.0 and fy >= 0.0):
        return 1
    ix = int(fx)
    iy = int(fy)
    if ix >= cells.shape[1] or iy >= cells.shape[0]:
        return 1
    return 1 if cells[iy, ix] else 0


def collision_indicator(grid, state):
    return int(occupied(grid.cells, grid.resolution, grid.origin[0], grid.origin[1],
                        float(state.x), float(state.y)))


def place_obstacles(path, rng, count=5, max_offset=0.1, radius=0.15, min_separation=2.0,
                    keep_out=(0.0, 0.0), max_tries=1000):
    """Pick ``count`` waypoints at least ``min_separation`` metres of arc apart and
    offset each uniformly within a disk of radius ``max_offset``.

    ``keep_out = (head, tail)`` excludes arc length near the start of a lap.
    If the track is too short for the separation, it is halved until the
    placement succeeds (logged as a warning).
    """
    s = path.arc_length
    total = path.length
    lo, hi = keep_out[0], total - keep_out[1]
    allowed = np.flatnonzero((s >= lo) & (s <= hi))
    if len(allowed) == 0:
        raise ValueError("no waypoints available for obstacle placement")
    sep = min_separation
    while True:
        chosen = []
        for _ in range(max_tries):
            i = int(allowed[rng.integers(len(allowed))])
            if all(_arc_gap(s[i], s[j], total, path.closed) >= sep for j in chosen):
                chosen.append(i)
                if len(chosen) == count:
                    break
        if len(chosen) == count:
            break
        sep *= 0.5
        log.warning("track too short for obstacle separation; reducing to %.3f m", sep)
    chosen.sort()
    out = []
    for i in chosen:
        r = max_offset * math.sqrt(rng.random())
        th = 2.0 * math.pi * rng.random()
        out.append(ObstacleSpec((path.x[i] + r * math.cos(th), path.y[i] + r * math.sin(th)), radius))
    return out


def _arc_gap(a, b, total, closed):
    d = abs(a - b)
    return min(d, total - d) if closed else d
