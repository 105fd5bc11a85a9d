import json

import numpy as np
import pytest

from svgmppi import harness
from svgmppi.costmap import ObstacleSpec
from svgmppi.harness import CSV_HEADER, ablate, format_ablation, load_result, persist, run_scenario
from svgmppi.solver import Controller


def same_result(a, b):
    return (np.array_equal(a.log, b.log) and a.metrics() == b.metrics())


def test_pt_has_no_collisions(fast_cfg):
    r = run_scenario(fast_cfg("scenario.scenario=PT"))
    assert r.cr == 0.0 and r.collisions == [] and r.obstacles_encountered == 0
    assert len(r.ms_per_lap) == 1 and np.isfinite(r.mean_ms)


def test_same_seed_bit_identical(fast_cfg):
    cfg = fast_cfg("scenario.scenario=OA", "scenario.seed=3", "obstacles.sensing_range=1.2")
    assert same_result(run_scenario(cfg), run_scenario(cfg))


def test_different_seed_differs(fast_cfg):
    a = run_scenario(fast_cfg("scenario.seed=1"))
    b = run_scenario(fast_cfg("scenario.seed=2"))
    assert not np.array_equal(a.log, b.log)


def test_off_track_obstacles_match_pt(fast_cfg, monkeypatch):
    def far_away(path, rng, count=5, **kw):
        return [ObstacleSpec((1e3 + i, 1e3), 0.15) for i in range(count)]
    monkeypatch.setattr(harness, "place_obstacles", far_away)
    for seed in range(3):
        pt = run_scenario(fast_cfg("scenario.scenario=PT", f"scenario.seed={seed}"))
        oa = run_scenario(fast_cfg("scenario.scenario=OA", f"scenario.seed={seed}"))
        assert oa.ms_per_lap == pt.ms_per_lap
        assert oa.cr == 0.0 and oa.obstacles_encountered == 5


def test_flags_off_equals_vanilla(fast_cfg):
    a = run_scenario(fast_cfg("scenario.solver=mppi"))
    b = run_scenario(fast_cfg("scenario.solver=svg_mppi", "scenario.use_nominal=false",
                              "scenario.use_adaptive_cov=false"))
    assert np.array_equal(a.log, b.log)


def test_no_adaptive_cov_keeps_fixed_schedule(fast_cfg, monkeypatch):
    seen = []
    solve = Controller.solve

    def spy(self, x0, ev):
        U = solve(self, x0, ev)
        seen.append(self.last_cov.copy())
        return U
    monkeypatch.setattr(Controller, "solve", spy)
    cfg = fast_cfg("scenario.use_nominal=true", "scenario.use_adaptive_cov=false",
                   "scenario.max_steps_per_lap=20")
    run_scenario(cfg)
    fixed = cfg.solver_config().fixed_cov()
    assert len(seen) == 20 and all(np.array_equal(c, fixed) for c in seen)


def test_collision_accounting(fast_cfg):
    cfg = fast_cfg("scenario.scenario=OA", "scenario.laps=2", "obstacles.sensing_range=0.5",
                   "solver.sigma_fixed=0.01", "scenario.solver=mppi")
    r = run_scenario(cfg)
    hits = [c for c in r.collisions if c["obstacle"] >= 0]
    assert len(hits) > 0
    assert len({(c["lap"], c["obstacle"]) for c in hits}) == len(hits)
    assert 0.0 <= r.cr <= 100.0
    assert r.cr == pytest.approx(100.0 * len(hits) / r.obstacles_encountered)


def test_persist_round_trip(fast_cfg, tmp_path):
    r = run_scenario(fast_cfg("scenario.scenario=OA", "obstacles.sensing_range=1.0"))
    persist(r, tmp_path)
    back = load_result(tmp_path)
    assert same_result(r, back)
    assert back.config == json.loads(json.dumps(r.config))
    rows = (tmp_path / "trajectory.csv").read_text().splitlines()
    assert rows[0] == ",".join(CSV_HEADER)
    assert len(rows) - 1 == sum(r.steps_per_lap) == len(r.log)


def test_persist_is_deterministic(fast_cfg, tmp_path):
    cfg = fast_cfg("scenario.seed=5")
    persist(run_scenario(cfg), tmp_path / "a")
    persist(run_scenario(cfg), tmp_path / "b")
    for name in ("manifest.json", "trajectory.csv", "metrics.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_persist_rejects_empty(tmp_path):
    with pytest.raises(ValueError):
        persist(harness.ScenarioResult(config={}), tmp_path / "x")
    assert not (tmp_path / "x").exists()


def test_sample_evaluation_count(fast_cfg):
    cfg = fast_cfg("scenario.max_steps_per_lap=10")
    r = run_scenario(cfg)
    s = cfg.solver_config()
    assert r.sample_evaluations == 10 * (s.K + s.L * s.K_g * s.N)


def test_ablation_table(fast_cfg):
    cfg = fast_cfg("scenario.max_steps_per_lap=15")
    table = ablate(cfg, scenarios=("PT",))
    assert list(table) == ["MPPI", "MPPI+NS", "MPPI+AC", "MPPI+NS+AC"]
    text = format_ablation(table, ("PT",))
    assert text.count("\n") == 4 and "MPPI+NS+AC" in text
