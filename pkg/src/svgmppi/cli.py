"""Command line entry point: ``svgmppi {run,bench,ablate,fit-demo,version}``.

Every command that produces numbers ends with one ``RESULT {json}`` line so
scripts can scrape it.
"""

import argparse
import json
import logging
import statistics
import sys
import time

import numpy as np

from . import rng as rngmod
from .config import ConfigError, help_text, load_config
from .core import CostCounter
from .dynamics import VehicleState
from .evaluator import TrackingEvaluator, configure_threads
from .guide import QSTAR_FLOOR, TransportTrajectory, fit_covariance
from .harness import ablate, format_ablation, persist, run_scenario, versions
from .solver import Controller, evaluations_per_solve
from .costmap import load_grid
from .tracking import load_waypoints


def _load(args, extra=()):
    sets = list(extra) + list(args.set or [])
    if args.seed is not None:
        sets.append(f"scenario.seed={args.seed}")
    return load_config(args.config, sets)


def _result(payload):
    print("RESULT " + json.dumps(payload, sort_keys=True))


def cmd_run(args):
    cfg = _load(args)
    res = run_scenario(cfg)
    print(f"{'scenario':<10}{'solver':<10}{'NS':>4}{'AC':>4}{'laps':>6}{'MS':>12}{'CR [%]':>9}")
    ns, ac = cfg.guided_flags
    print(f"{cfg['scenario.scenario']:<10}{cfg['scenario.solver']:<10}{int(ns):>4}{int(ac):>4}"
          f"{len(res.ms_per_lap):>6}{res.mean_ms:>12.4f}{res.cr:>9.1f}")
    out = persist(res, args.out) if args.out else None
    _result({"scenario": cfg["scenario.scenario"], "solver": cfg["scenario.solver"],
             "use_nominal": ns, "use_adaptive_cov": ac, "seed": cfg["scenario.seed"],
             "laps": len(res.ms_per_lap), "mean_ms": res.mean_ms, "cr_percent": res.cr,
             "collisions": len(res.collisions), "out": str(out) if out else None})
    return 0


def cmd_bench(args):
    if args.n < 1:
        raise ConfigError(f"bench needs at least one solve, got n={args.n}")
    cfg = _load(args)
    path = load_waypoints(cfg.resolve("files.waypoints"))
    track = load_grid(cfg.resolve("files.track"))
    params = cfg.vehicle_params()
    scfg = cfg.solver_config()
    ns, ac = cfg.guided_flags
    ctl = Controller(scfg, ns, ac)
    ev = CostCounter(TrackingEvaluator(path, track, params,
                                       window=(cfg["tracking.window_back"], cfg["tracking.window_fwd"])))
    x0 = VehicleState.at_rest(path.x[0], path.y[0], path.yaw[0], path.speed[0], params)
    for _ in range(args.warmup):
        ctl.solve(x0, ev)
    ev.reset()
    times = []
    for _ in range(args.n):
        t0 = time.perf_counter()
        ctl.solve(x0, ev)
        times.append(1000.0 * (time.perf_counter() - t0))
    per_solve = ev.sample_calls / args.n
    expected = evaluations_per_solve(scfg, ctl.guided)
    summary = {"solver": cfg["scenario.solver"], "use_nominal": ns, "use_adaptive_cov": ac,
               "K": scfg.K, "T": scfg.T, "n": args.n, "threads": configure_threads(),
               "mean_ms": statistics.fmean(times), "median_ms": statistics.median(times),
               "max_ms": max(times), "evaluations_per_solve": per_solve,
               "expected_evaluations": expected,
               "state_evaluations_per_solve": ev.state_calls / args.n}
    print(f"{summary['solver']}: mean {summary['mean_ms']:.2f} ms, median {summary['median_ms']:.2f} ms, "
          f"max {summary['max_ms']:.2f} ms over {args.n} solves ({summary['threads']} threads)")
    print(f"sample evaluations per solve {per_solve:g} (expected {expected})")
    _result(summary)
    return 0 if per_solve == expected else 1


def cmd_ablate(args):
    cfg = _load(args)
    scenarios = tuple(args.scenarios.split(","))
    table = ablate(cfg, scenarios)
    print(format_ablation(table, scenarios))
    if args.out:
        for name, row in table.items():
            for sc, res in row.items():
                persist(res, f"{args.out}/{name.replace('+', '_')}_{sc}")
    _result({name: {sc: {"mean_ms": r.mean_ms, "cr_percent": r.cr} for sc, r in row.items()}
             for name, row in table.items()})
    return 0


def _fit_case(name, a, b, sigma_true=None):
    a = np.asarray(a, dtype=float)
    traj = TransportTrajectory(states=a.reshape(-1, 1, 1), qstar_values=np.asarray(b, float),
                               log_qstar=np.log(np.maximum(b, QSTAR_FLOOR)))
    cov, nfb = fit_covariance(traj, (1e-6, 1e6), np.full((1, 1), np.nan))
    sigma = float(np.sqrt(cov[0, 0])) if nfb == 0 else None
    line = f"{name:<16} sigma={'fallback' if sigma is None else f'{sigma:.6g}'}"
    out = {"case": name, "sigma": sigma}
    if sigma is not None:
        fit = np.polyfit(a, np.log(b), 2, w=b)
        resid = np.log(b) - np.polyval(fit, a)
        out["max_abs_log_residual"] = float(np.abs(resid).max())
        line += f" max|log residual|={out['max_abs_log_residual']:.3g}"
    if sigma_true is not None and sigma is not None:
        out["relative_error"] = abs(sigma - sigma_true) / sigma_true
        line += f" rel.err={out['relative_error']:.3g}"
    print(line)
    return out


def cmd_fit_demo(args):
    a = np.array([-1.0, 0.0, 1.0])
    cases = [_fit_case("exact sigma=0.5", a, np.exp(-a ** 2 / (2 * 0.25)), 0.5),
             _fit_case("constant b", a, np.ones(3))]
    g = rngmod.stream(args.seed or 0, rngmod.TEST)
    a = np.linspace(-0.9, 0.9, 20)
    b = np.exp(-a ** 2 / (2 * 0.09)) * np.exp(g.normal(0, 0.05, a.size))
    cases.append(_fit_case("noisy sigma=0.3", a, b, 0.3))
    _result({"cases": cases})
    return 0


def cmd_version(args):
    for k, v in versions().items():
        print(f"{k} {v}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="svgmppi", description=__doc__.splitlines()[0],
                                formatter_class=argparse.RawDescriptionHelpFormatter,
                                epilog=help_text())
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--threads", type=int, default=None,
                   help="numba worker threads (default: SVGMPPI_NUM_THREADS or all cores)")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="INI config file (default: built-in defaults)")
        sp.add_argument("--seed", type=int, help="override scenario.seed")
        sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable)")

    sp = sub.add_parser("run", help="drive PT/OA laps and persist the results")
    common(sp)
    sp.add_argument("--out", help="output directory for manifest/trajectory/metrics/timing")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("bench", help="time repeated solves from a fixed state")
    common(sp)
    sp.add_argument("-n", type=int, default=50, help="timed solves")
    sp.add_argument("--warmup", type=int, default=3, help="untimed solves first (JIT, caches)")
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("ablate", help="NS/AC ablation table")
    common(sp)
    sp.add_argument("--scenarios", default="PT,OA", help="comma separated subset of PT,OA")
    sp.add_argument("--out", help="persist every row/scenario below this directory")
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("fit-demo", help="Gaussian-fit covariance on synthetic data")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_fit_demo)

    sp = sub.add_parser("version", help="package and library versions")
    sp.set_defaults(func=cmd_version)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    configure_threads(args.threads)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
