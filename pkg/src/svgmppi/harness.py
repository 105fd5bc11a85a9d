"""Closed-loop PT / OA scenarios, metrics, persistence and the NS/AC ablation.

Output directory layout (schema version 1)::

    manifest.json    config values, seed, package/library versions
    trajectory.csv   t,x,y,yaw,steer_cmd,S  (one row per control step, all laps)
    metrics.json     per-lap MS, collision events, CR, step counts
    timing.json      wall-clock solve statistics (the only non-deterministic file)

``t`` is simulated time in seconds, ``(x, y, yaw)`` the observed pose the
solve started from, ``steer_cmd`` the applied first input and ``S`` the
sequence state cost of the applied solution.
"""

import csv
import json
import logging
import math
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from . import __version__
from . import rng as rngmod
from .core import CostCounter
from .costmap import collision_indicator, load_grid, place_obstacles, rasterize
from .dynamics import VehicleState, step
from .evaluator import TrackingEvaluator
from .solver import Controller
from .tracking import load_waypoints, nearest_reference

log = logging.getLogger(__name__)

RESULT_SCHEMA = 1
CSV_HEADER = ["t", "x", "y", "yaw", "steer_cmd", "S"]


@dataclass
class ScenarioResult:
    config: dict
    ms_per_lap: list = field(default_factory=list)
    steps_per_lap: list = field(default_factory=list)
    collisions: list = field(default_factory=list)   # dicts: lap, step, obstacle, x, y
    obstacles_encountered: int = 0
    timeouts: int = 0
    sample_evaluations: int = 0
    state_evaluations: int = 0
    log: np.ndarray = None                              # (steps, 6) rows of CSV_HEADER
    solve_ms: list = field(default_factory=list)

    @property
    def cr(self):
        """Collision rate in percent of obstacle encounters (0 when none)."""
        if self.obstacles_encountered == 0:
            return 0.0
        hits = sum(1 for c in self.collisions if c["obstacle"] >= 0)
        return 100.0 * hits / self.obstacles_encountered

    @property
    def mean_ms(self):
        return float(np.mean(self.ms_per_lap))

    def timing(self):
        t = np.asarray(self.solve_ms, dtype=float)
        if t.size == 0:
            return {"mean_ms": 0.0, "median_ms": 0.0, "max_ms": 0.0}
        return {"mean_ms": float(t.mean()), "median_ms": float(np.median(t)),
                "max_ms": float(t.max())}

    def metrics(self):
        return {
            "schema_version": RESULT_SCHEMA,
            "ms_per_lap": [float(v) for v in self.ms_per_lap],
            "mean_ms": self.mean_ms,
            "steps_per_lap": [int(v) for v in self.steps_per_lap],
            "collisions": self.collisions,
            "obstacles_encountered": self.obstacles_encountered,
            "cr_percent": self.cr,
            "timeouts": self.timeouts,
            "sample_evaluations": self.sample_evaluations,
            "state_evaluations": self.state_evaluations,
        }


class _Progress:
    """Unwrapped arc length travelled along a closed reference."""

    def __init__(self, path, index):
        self.path = path
        self.last = path.arc_length[index]
        self.total = 0.0

    def update(self, index):
        s = self.path.arc_length[index]
        d = s - self.last
        half = 0.5 * self.path.length
        if d < -half:
            d += self.path.length
        elif d > half:
            d -= self.path.length
        self.total += d
        self.last = s
        return self.total


def _global_nearest(path, x, y):
    return int(np.argmin((path.x - x) ** 2 + (path.y - y) ** 2))


def _arc_gap(path, i, j):
    d = abs(path.arc_length[i] - path.arc_length[j])
    return min(d, path.length - d)


class _SensedMap:
    """Controller's view of the course: obstacles appear once within ``sensing_range``."""

    def __init__(self, track, obstacles, inflation, sensing_range):
        self.track, self.obstacles = track, obstacles
        self.inflation, self.range = inflation, sensing_range
        self.cache = {}

    def at(self, x, y):
        if self.range > 0:
            seen = frozenset(i for i, ob in enumerate(self.obstacles)
                             if math.hypot(ob.center[0] - x, ob.center[1] - y) <= self.range)
        else:
            seen = frozenset(range(len(self.obstacles)))
        if seen not in self.cache:
            self.cache[seen] = rasterize(self.track, [self.obstacles[i] for i in sorted(seen)],
                                         self.inflation)
        return self.cache[seen]


def run_scenario(cfg):
    """Drive ``cfg['scenario.laps']`` laps and return a :class:`ScenarioResult`."""
    cfg.validate()
    path = load_waypoints(cfg.resolve("files.waypoints"))
    track = load_grid(cfg.resolve("files.track"))
    params = cfg.vehicle_params()
    scfg = cfg.solver_config()
    use_ns, use_ac = cfg.guided_flags
    ctl = Controller(scfg, use_ns, use_ac)
    window = (cfg["tracking.window_back"], cfg["tracking.window_fwd"])
    ev = TrackingEvaluator(path, track, params, window=window)
    counter = CostCounter(ev)
    oa = cfg["scenario.scenario"] == "OA"
    seed = cfg["scenario.seed"]
    timeout = cfg["scenario.solver_timeout"]
    dt = params.dt

    result = ScenarioResult(config=dict(cfg.values))
    rows = []
    state = VehicleState.at_rest(path.x[0], path.y[0], path.yaw[0], path.speed[0], params)
    hint = 0
    progress = _Progress(path, 0)
    last_cmd = 0.0
    step_no = 0

    for lap in range(cfg["scenario.laps"]):
        obstacles, ob_index = [], []
        grid = track
        if oa:
            obstacles = place_obstacles(
                path, rngmod.stream(seed, rngmod.OBSTACLES, lap), count=cfg["obstacles.count"],
                max_offset=cfg["obstacles.max_offset"], radius=cfg["obstacles.radius"],
                min_separation=cfg["obstacles.min_separation"],
                keep_out=(cfg["obstacles.keep_out_head"], cfg["obstacles.keep_out_tail"]))
            ob_index = [_global_nearest(path, *ob.center) for ob in obstacles]
            grid = rasterize(track, obstacles, cfg["obstacles.inflation"])
            result.obstacles_encountered += len(obstacles)
        view = _SensedMap(track, obstacles, cfg["obstacles.inflation"], cfg["obstacles.sensing_range"])
        hit = [False] * len(obstacles)
        lap_start = progress.total
        costs = []
        steps = 0
        while progress.total - lap_start < path.length:
            if steps >= cfg["scenario.max_steps_per_lap"]:
                log.warning("lap %d hit max_steps_per_lap", lap)
                break
            idx, _, hint = nearest_reference(path, (state.x, state.y), hint, window)
            ev.hint = hint
            ev.grid = view.at(state.x, state.y)
            t0 = time.perf_counter()
            U = ctl.solve(state, counter)
            elapsed = 1000.0 * (time.perf_counter() - t0)
            result.solve_ms.append(elapsed)
            cmd = float(U[0, 0])
            if timeout > 0 and elapsed > 1000.0 * timeout:
                result.timeouts += 1
                cmd = last_cmd
            S = float(ev(state, U[None])[0])
            costs.append(S)
            rows.append((step_no * dt, state.x, state.y, state.yaw, cmd, S))
            state = step(state, cmd, path.speed[idx], params)
            last_cmd = cmd
            step_no += 1
            steps += 1
            idx, _, hint = nearest_reference(path, (state.x, state.y), hint, window)
            progress.update(idx)
            if collision_indicator(grid, state):
                ob = -1
                if obstacles:
                    ob = int(min(range(len(obstacles)), key=lambda j: _arc_gap(path, idx, ob_index[j])))
                if ob < 0 or not hit[ob]:
                    if ob >= 0:
                        hit[ob] = True
                    result.collisions.append({"lap": lap, "step": step_no - 1, "obstacle": ob,
                                              "x": float(state.x), "y": float(state.y)})
                # restart further along the reference with a fresh solver
                target = (path.arc_length[idx] + cfg["scenario.reset_skip"]) % path.length
                j = int(np.searchsorted(path.arc_length, target)) % len(path)
                state = VehicleState.at_rest(path.x[j], path.y[j], path.yaw[j], path.speed[j], params)
                ctl.reset()
                last_cmd = 0.0
                hint = j
                progress.update(j)
        result.ms_per_lap.append(float(np.mean(costs)) if costs else math.nan)
        result.steps_per_lap.append(steps)

    result.log = np.array(rows, dtype=float).reshape(-1, len(CSV_HEADER))
    result.sample_evaluations = counter.sample_calls
    result.state_evaluations = counter.state_calls
    return result


def versions():
    return {"svgmppi": __version__, "numpy": np.__version__, "numba": numba.__version__,
            "python": platform.python_version()}


def persist(result, outdir):
    """Write manifest, trajectory CSV, metrics and timing into ``outdir``."""
    if not result.ms_per_lap:
        raise ValueError("refusing to persist a result with no laps")
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"schema_version": RESULT_SCHEMA, "seed": result.config.get("scenario.seed"),
                "config": result.config, "versions": versions()}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    with open(out / "trajectory.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(CSV_HEADER)
        for row in result.log:
            w.writerow([repr(float(v)) for v in row])
    (out / "metrics.json").write_text(json.dumps(result.metrics(), indent=2, sort_keys=True) + "\n")
    timing = dict(result.timing(), solve_ms=[float(v) for v in result.solve_ms])
    (out / "timing.json").write_text(json.dumps(timing, indent=2) + "\n")
    return out


def load_result(outdir):
    out = Path(outdir)
    manifest = json.loads((out / "manifest.json").read_text())
    metrics = json.loads((out / "metrics.json").read_text())
    timing = json.loads((out / "timing.json").read_text())
    with open(out / "trajectory.csv", newline="") as f:
        reader = csv.reader(f)
        if next(reader) != CSV_HEADER:
            raise ValueError(f"{out}/trajectory.csv: unexpected header")
        rows = [[float(v) for v in r] for r in reader if r]
    return ScenarioResult(
        config=manifest["config"], ms_per_lap=metrics["ms_per_lap"],
        steps_per_lap=metrics["steps_per_lap"], collisions=metrics["collisions"],
        obstacles_encountered=metrics["obstacles_encountered"], timeouts=metrics["timeouts"],
        sample_evaluations=metrics["sample_evaluations"],
        state_evaluations=metrics["state_evaluations"],
        log=np.array(rows, dtype=float).reshape(-1, len(CSV_HEADER)), solve_ms=timing["solve_ms"])


ABLATION_ROWS = [
    ("MPPI", False, False),
    ("MPPI+NS", True, False),
    ("MPPI+AC", False, True),
    ("MPPI+NS+AC", True, True),
]


def ablate(base, scenarios=("PT", "OA"), rows=ABLATION_ROWS):
    """Run every ablation row on every scenario with the base config's seed.

    Returns ``{row_name: {scenario: ScenarioResult}}``.
    """
    table = {}
    for name, ns, ac in rows:
        table[name] = {}
        for sc in scenarios:
            cfg = base.copy(**{"scenario.scenario": sc, "scenario.solver": "svg_mppi",
                               "scenario.use_nominal": ns, "scenario.use_adaptive_cov": ac})
            table[name][sc] = run_scenario(cfg)
    return table


def format_ablation(table, scenarios=("PT", "OA")):
    lines = [f"{'method':<14}" + "".join(f"{'MS ' + s:>12}" for s in scenarios)
             + (f"{'CR OA [%]':>12}" if "OA" in scenarios else "")]
    for name, res in table.items():
        line = f"{name:<14}" + "".join(f"{res[s].mean_ms:>12.3f}" for s in scenarios)
        if "OA" in scenarios:
            line += f"{res['OA'].cr:>12.1f}"
        lines.append(line)
    return "\n".join(lines)
