"""Sampling-based stochastic optimal control: vanilla MPPI and guide-particle
(Stein variational) guided MPPI, with a 2D vehicle benchmark harness."""

import os

# the bundled TBB is too old for numba; pick a layer before numba loads
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

__version__ = "0.1.0"
