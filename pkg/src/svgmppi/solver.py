"""Receding-horizon controllers: vanilla MPPI and the guided variant.

``Controller(cfg)`` is vanilla MPPI. Turning on ``use_nominal`` (NS) and/or
``use_adaptive_cov`` (AC) runs the guide particles each cycle and feeds the
transported particle as the nominal sequence and/or the fitted covariance
schedule into the MPPI update. Both on is the full guided solver.
"""

import numpy as np

from . import rng as rngmod
from .core import as_counted, mppi_solve, time_shift
from .guide import GuideStats, guide_step


class Controller:
    def __init__(self, cfg, use_nominal=False, use_adaptive_cov=False):
        self.cfg = cfg.validate()
        self.use_nominal = use_nominal
        self.use_adaptive_cov = use_adaptive_cov
        self.guide_stats = GuideStats()
        self.degenerate_solves = 0
        self.nonfinite_samples = 0
        self.reset()

    @property
    def guided(self):
        return self.use_nominal or self.use_adaptive_cov

    def reset(self, u0=None):
        """Forget the warm start (and guide particles); the cycle counter keeps running."""
        cfg = self.cfg
        self.u_prev = np.zeros((cfg.T, cfg.m)) if u0 is None else np.array(u0, dtype=float)
        self.particles = None
        self.nominal = None
        self.last_cov = cfg.fixed_cov()
        if not hasattr(self, "cycle"):
            self.cycle = 0

    def solve(self, x0, evaluator):
        """One control cycle; returns the ``(T, m)`` solution and stores it as the warm start."""
        cfg = self.cfg
        ev = as_counted(evaluator)
        cov = cfg.fixed_cov()
        nominal = None
        if self.guided:
            prev_nom = None if self.nominal is None else time_shift(self.nominal)
            particles = None if self.particles is None else time_shift_batch(self.particles)
            est, self.particles = guide_step(x0, self.u_prev, particles, cfg, ev,
                                             cycle=self.cycle,
                                             nominal_prev=prev_nom if self.use_nominal else None,
                                             fallback=cov, stats=self.guide_stats)
            if self.use_nominal:
                nominal = est.nominal
                self.nominal = est.nominal
            if self.use_adaptive_cov:
                cov = est.cov
        g = rngmod.stream(cfg.seed, rngmod.MPPI_SAMPLES, self.cycle)
        U, batch = mppi_solve(x0, self.u_prev, cov, nominal, ev, cfg, g)
        self.degenerate_solves += batch.degenerate
        self.nonfinite_samples += batch.n_nonfinite
        self.last_cov = cov
        self.last_batch = batch
        self.u_prev = U
        self.cycle += 1
        return U


def time_shift_batch(particles):
    out = np.empty_like(particles)
    out[:, :-1] = particles[:, 1:]
    out[:, -1] = particles[:, -1]
    return out


def evaluations_per_solve(cfg, guided):
    """Sample evaluations one ``solve`` performs: K, plus L*K_g*N when guided."""
    return cfg.K + (cfg.L * cfg.K_g * cfg.N if guided else 0)
