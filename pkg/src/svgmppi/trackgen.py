"""Generate the toy track: a stadium loop (two straights, two 180 degree
curves) with a chicane on the back straight.

Run ``python -m svgmppi.trackgen <outdir>`` to regenerate the shipped files.
"""

import sys
from pathlib import Path

import numpy as np

from .costmap import GridMap, save_grid
from .tracking import WaypointPath, save_waypoints


def centerline(straight=6.0, radius=1.5, chicane_amp=0.4, chicane_len=3.0, spacing=0.1,
               speed=2.5):
    """Closed centreline resampled at ``spacing`` metres, starting on the front straight."""
    s = np.linspace(0.0, 1.0, 4001)[:-1]
    pts = []
    # front straight, +x
    pts.append(np.column_stack([straight * s, np.full_like(s, -radius)]))
    # right curve, counterclockwise about (straight, 0)
    th = -np.pi / 2 + np.pi * s
    pts.append(np.column_stack([straight + radius * np.cos(th), radius * np.sin(th)]))
    # back straight, -x, with a lateral bump
    x = straight * (1.0 - s)
    a = 0.5 * (straight - chicane_len)
    u = np.clip((x - a) / chicane_len, 0.0, 1.0)
    y = radius + chicane_amp * 0.5 * (1.0 - np.cos(2.0 * np.pi * u))
    pts.append(np.column_stack([x, y]))
    # left curve about (0, 0)
    th = np.pi / 2 + np.pi * s
    pts.append(np.column_stack([radius * np.cos(th), radius * np.sin(th)]))
    dense = np.vstack(pts)
    seg = np.hypot(*np.diff(np.vstack([dense, dense[:1]]), axis=0).T)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    n = int(round(arc[-1] / spacing))
    q = np.linspace(0.0, arc[-1], n, endpoint=False)
    closed = np.vstack([dense, dense[:1]])
    xs = np.interp(q, arc, closed[:, 0])
    ys = np.interp(q, arc, closed[:, 1])
    dx = np.roll(xs, -1) - np.roll(xs, 1)
    dy = np.roll(ys, -1) - np.roll(ys, 1)
    yaw = np.arctan2(dy, dx)
    return WaypointPath(xs, ys, yaw, np.full(n, speed), closed=True)


def free_space(path, half_width=0.75, resolution=0.05, margin=0.5):
    """Grid with every cell farther than ``half_width`` from the centreline occupied."""
    ox = np.floor((path.x.min() - half_width - margin) / resolution) * resolution
    oy = np.floor((path.y.min() - half_width - margin) / resolution) * resolution
    w = int(np.ceil((path.x.max() + half_width + margin - ox) / resolution))
    h = int(np.ceil((path.y.max() + half_width + margin - oy) / resolution))
    grid = GridMap(np.zeros((h, w), np.uint8), resolution, (float(ox), float(oy)))
    X, Y = grid.cell_centers()
    P = np.column_stack([X.ravel(), Y.ravel()])
    ax, ay = path.x, path.y
    bx, by = np.roll(ax, -1), np.roll(ay, -1)
    best = np.full(len(P), np.inf)
    for i in range(len(ax)):
        dx, dy = bx[i] - ax[i], by[i] - ay[i]
        t = np.clip(((P[:, 0] - ax[i]) * dx + (P[:, 1] - ay[i]) * dy) / (dx * dx + dy * dy), 0, 1)
        d = np.hypot(P[:, 0] - ax[i] - t * dx, P[:, 1] - ay[i] - t * dy)
        np.minimum(best, d, out=best)
    cells = (best > half_width).reshape(h, w).astype(np.uint8)
    return GridMap(cells, resolution, grid.origin)


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    out = Path(argv[0] if argv else Path(__file__).parent / "data")
    out.mkdir(parents=True, exist_ok=True)
    path = centerline()
    save_waypoints(path, out / "toy_track.csv")
    save_grid(free_space(path), out / "toy_track.grid")
    print(f"{len(path)} waypoints, {path.length:.2f} m -> {out}")


if __name__ == "__main__":
    main()
