"""Scenario configuration files.

INI syntax, one ``[section]`` per group, addressed on the command line as
``section.key``. Every key, its type, default and unit is listed in
``SCHEMA``; unknown sections or keys are rejected. Relative file paths are
resolved against the config file's directory (or the bundled data
directory for the defaults).
"""

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .core import ConfigError, SolverConfig
from .dynamics import VehicleParams

SCHEMA_VERSION = 1
DATA_DIR = Path(__file__).parent / "data"


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _choice(*options):
    def parse(text):
        t = str(text).strip()
        if t not in options:
            raise ValueError(f"expected one of {options}, got {t!r}")
        return t
    return parse


# key -> (parser, default, unit, description)
SCHEMA = {
    "meta.schema_version": (int, SCHEMA_VERSION, "-", "config schema version"),
    "scenario.scenario": (_choice("PT", "OA"), "PT", "-", "PT path tracking or OA obstacle avoidance"),
    "scenario.laps": (int, 1, "laps", "laps to drive"),
    "scenario.solver": (_choice("mppi", "svg_mppi"), "svg_mppi", "-", "controller family"),
    "scenario.use_nominal": (_bool, True, "-", "NS: nominal sequence from guide particles (svg_mppi only)"),
    "scenario.use_adaptive_cov": (_bool, True, "-", "AC: fitted covariance schedule (svg_mppi only)"),
    "scenario.seed": (int, 0, "-", "run seed (64-bit)"),
    "scenario.control_period": (float, 0.05, "s", "simulation / control step; must equal vehicle.dt"),
    "scenario.solver_timeout": (float, 0.0, "s", "per-step solve budget, 0 disables (timing dependent!)"),
    "scenario.max_steps_per_lap": (int, 2000, "steps", "abort a lap after this many steps"),
    "scenario.reset_skip": (float, 1.0, "m", "arc length ahead of a collision where the vehicle restarts"),
    "files.waypoints": (str, "toy_track.csv", "path", "waypoint CSV (x,y,yaw,speed)"),
    "files.track": (str, "toy_track.grid", "path", "track free-space grid"),
    "vehicle.wheelbase": (float, 0.33, "m", "wheelbase"),
    "vehicle.steer_limit": (float, 0.4, "rad", "steering angle limit"),
    "vehicle.steer_time_constant": (float, 0.1, "s", "first-order steering lag, 0 = none"),
    "vehicle.dead_time_steps": (int, 2, "steps", "steering dead time"),
    "vehicle.dt": (float, 0.05, "s", "prediction step"),
    "solver.K": (int, 8000, "samples", "MPPI samples per solve"),
    "solver.T": (int, 15, "steps", "horizon"),
    "solver.lam": (float, 10.0, "-", "temperature (sets how sharply cost differences are weighted)"),
    "solver.sigma_fixed": (float, 0.075, "rad^2", "fixed steering covariance (baseline / fallback)"),
    "solver.K_g": (int, 1, "particles", "guide particles"),
    "solver.L": (int, 8, "iterations", "transport iterations per cycle"),
    "solver.epsilon": (float, 0.005, "rad^2", "transport step size"),
    "solver.N": (int, 512, "samples", "Monte Carlo samples per surrogate gradient"),
    "solver.sigma_g": (float, 0.01, "rad^2", "guide perturbation covariance"),
    "solver.sigma_min": (float, 0.01, "rad", "lower clamp on fitted std"),
    "solver.sigma_max": (float, 0.5, "rad", "upper clamp on fitted std"),
    "obstacles.count": (int, 5, "-", "obstacles per OA lap"),
    "obstacles.max_offset": (float, 0.1, "m", "random offset of each obstacle from its waypoint"),
    "obstacles.radius": (float, 0.15, "m", "obstacle radius"),
    "obstacles.inflation": (float, 0.15, "m", "vehicle half-width added around obstacles"),
    "obstacles.sensing_range": (float, 0.0, "m", "obstacles enter the controller's map within this range, 0 = always"),
    "obstacles.min_separation": (float, 2.0, "m", "minimum arc length between obstacles"),
    "obstacles.keep_out_head": (float, 2.0, "m", "no obstacles in the first metres of a lap"),
    "obstacles.keep_out_tail": (float, 1.0, "m", "no obstacles in the last metres of a lap"),
    "tracking.window_back": (int, 3, "segments", "nearest-reference search behind the hint"),
    "tracking.window_fwd": (int, 6, "segments", "nearest-reference search ahead of the hint"),
}


def help_text():
    lines = ["config keys (section.key  type  default  [unit]  description):"]
    for key, (parse, default, unit, desc) in SCHEMA.items():
        lines.append(f"  {key:<28} {default!s:<14} [{unit}] {desc}")
    return "\n".join(lines)


@dataclass
class ScenarioConfig:
    values: dict = field(default_factory=lambda: {k: v[1] for k, v in SCHEMA.items()})
    base_dir: Path = DATA_DIR

    def __getitem__(self, key):
        return self.values[key]

    def set(self, key, text):
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key: {key}")
        parse = SCHEMA[key][0]
        try:
            self.values[key] = parse(text)
        except ValueError as e:
            raise ConfigError(f"bad value for {key}: {e}") from None
        return self

    def copy(self, **overrides):
        out = ScenarioConfig(dict(self.values), self.base_dir)
        for k, v in overrides.items():
            out.set(k.replace("__", "."), v if isinstance(v, str) else str(v))
        return out

    def resolve(self, key):
        """File path for ``key``; relative paths try the config dir, then the bundled data."""
        p = Path(self.values[key])
        if p.is_absolute():
            return p
        if (self.base_dir / p).exists() or not (DATA_DIR / p).exists():
            return self.base_dir / p
        return DATA_DIR / p

    @property
    def guided_flags(self):
        if self["scenario.solver"] == "mppi":
            return False, False
        return self["scenario.use_nominal"], self["scenario.use_adaptive_cov"]

    def vehicle_params(self):
        return VehicleParams(self["vehicle.wheelbase"], self["vehicle.steer_limit"],
                             self["vehicle.steer_time_constant"], self["vehicle.dead_time_steps"],
                             self["vehicle.dt"])

    def solver_config(self):
        lim = self["vehicle.steer_limit"]
        return SolverConfig(K=self["solver.K"], T=self["solver.T"], m=1, lam=self["solver.lam"],
                            u_min=-lim, u_max=lim, sigma_fixed=self["solver.sigma_fixed"],
                            seed=self["scenario.seed"], K_g=self["solver.K_g"], L=self["solver.L"],
                            epsilon=self["solver.epsilon"], N=self["solver.N"],
                            sigma_g=self["solver.sigma_g"],
                            sigma_clamp=(self["solver.sigma_min"], self["solver.sigma_max"])).validate()

    def validate(self):
        if self["meta.schema_version"] != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self['meta.schema_version']}")
        if self["scenario.laps"] < 1:
            raise ConfigError("scenario.laps must be >= 1")
        if abs(self["scenario.control_period"] - self["vehicle.dt"]) > 1e-12:
            raise ConfigError("scenario.control_period must equal vehicle.dt")
        try:
            self.vehicle_params()
        except ValueError as e:
            raise ConfigError(f"vehicle: {e}") from None
        self.solver_config()
        return self


def load_config(path=None, overrides=()):
    """Read an INI config (or the defaults when ``path`` is None) and apply
    ``section.key=value`` overrides."""
    cfg = ScenarioConfig()
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        parser.read(path)
        cfg.base_dir = path.resolve().parent
        for section in parser.sections():
            for key, text in parser.items(section):
                cfg.set(f"{section}.{key}", text)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        key, text = item.split("=", 1)
        cfg.set(key.strip(), text.strip())
    return cfg.validate()
