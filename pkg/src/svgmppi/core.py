"""Gaussian sequence sampling, importance weights and the closed-form MPPI update.

Shapes used throughout: a control sequence is a ``(T, m)`` array, a covariance
schedule is a ``(T, m)`` array of per-step diagonal variances, and a sample
batch holds ``(K, T, m)`` sequences.
"""

from dataclasses import dataclass

import numpy as np


class ConfigError(ValueError):
    """Invalid solver or scenario configuration."""


@dataclass
class SolverConfig:
    """Parameters shared by vanilla MPPI and the guided variant.

    Covariances (``sigma_fixed``, ``sigma_g``) are variances in rad^2;
    ``sigma_clamp`` bounds the fitted standard deviation in rad.
    """

    K: int = 8000
    T: int = 15
    m: int = 1
    lam: float = 1.0
    u_min: float = -0.4
    u_max: float = 0.4
    sigma_fixed: float = 0.075
    seed: int = 0
    # guide particles
    K_g: int = 1
    L: int = 8
    epsilon: float = 0.005
    N: int = 512
    sigma_g: float = 0.01
    sigma_clamp: tuple = (0.01, 0.5)

    def validate(self):
        if self.K < 1:
            raise ConfigError(f"K must be >= 1, got {self.K}")
        if self.T < 1 or self.m < 1:
            raise ConfigError(f"T and m must be >= 1, got T={self.T}, m={self.m}")
        if not self.lam > 0:
            raise ConfigError(f"lam must be > 0, got {self.lam}")
        if not self.u_min < self.u_max:
            raise ConfigError(f"u_min must be < u_max, got [{self.u_min}, {self.u_max}]")
        if not self.sigma_fixed > 0 or not self.sigma_g > 0:
            raise ConfigError("sigma_fixed and sigma_g must be positive variances")
        if self.epsilon < 0:
            raise ConfigError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.N < 1 or self.K_g < 1 or self.L < 1:
            raise ConfigError(f"N, K_g and L must be >= 1, got N={self.N}, K_g={self.K_g}, L={self.L}")
        lo, hi = self.sigma_clamp
        if not 0 < lo <= hi:
            raise ConfigError(f"bad sigma_clamp {self.sigma_clamp}")
        return self

    @property
    def u_bounds(self):
        return (self.u_min, self.u_max)

    def fixed_cov(self):
        return np.full((self.T, self.m), float(self.sigma_fixed))

    def guide_cov(self):
        return np.full((self.T, self.m), float(self.sigma_g))


@dataclass
class SampleBatch:
    sequences: np.ndarray
    costs: np.ndarray = None
    weights: np.ndarray = None
    degenerate: bool = False   # weights fell back to uniform
    n_nonfinite: int = 0       # samples whose cost was not finite


class CostCounter:
    """Wrap a cost oracle ``fn(x0, seqs) -> costs`` and count evaluations.

    ``sample_calls`` counts stochastic sample sequences (MPPI samples and
    guide Monte Carlo perturbations); ``state_calls`` counts the deterministic
    evaluations of guide particle states.
    """

    def __init__(self, fn):
        self.fn = fn
        self.sample_calls = 0
        self.state_calls = 0

    def __call__(self, x0, seqs):
        self.sample_calls += len(seqs)
        return np.asarray(self.fn(x0, seqs), dtype=float)

    def evaluate_states(self, x0, seqs):
        self.state_calls += len(seqs)
        return np.asarray(self.fn(x0, seqs), dtype=float)

    def reset(self):
        self.sample_calls = 0
        self.state_calls = 0


def as_counted(evaluator):
    return evaluator if isinstance(evaluator, CostCounter) else CostCounter(evaluator)


def check_covariance(cov, allow_zero=False):
    cov = np.asarray(cov, dtype=float)
    bad = cov < 0 if allow_zero else ~(cov > 0)
    if np.any(bad) or not np.all(np.isfinite(cov)):
        raise ConfigError("covariance schedule entries must be positive and finite")
    return cov


def time_shift(seq):
    """Shift a sequence one step forward in time, repeating the last element."""
    seq = np.asarray(seq)
    out = np.empty_like(seq)
    out[:-1] = seq[1:]
    out[-1] = seq[-1]
    return out


def sample_inputs(mean, cov, K, rng, u_bounds=None, allow_zero=False):
    """Draw ``K`` sequences with element ``(k, t, i) ~ Normal(mean[t, i], cov[t, i])``.

    ``allow_zero`` admits zero variances; it exists for tests only.
    """
    mean = np.asarray(mean, dtype=float)
    cov = check_covariance(cov, allow_zero=allow_zero)
    if K < 1:
        raise ConfigError(f"K must be >= 1, got {K}")
    if cov.shape != mean.shape:
        raise ValueError(f"covariance shape {cov.shape} != mean shape {mean.shape}")
    seqs = rng.standard_normal((K,) + mean.shape)
    seqs *= np.sqrt(cov)
    seqs += mean
    if u_bounds is not None:
        np.clip(seqs, u_bounds[0], u_bounds[1], out=seqs)
    return SampleBatch(sequences=seqs)


def log_weights(costs, sequences, u_hat, u_nominal, cov, lam):
    """Unnormalised log importance weights, with the min cost as baseline.

    Non-finite costs map to ``-inf``.
    """
    costs = np.asarray(costs, dtype=float)
    finite = np.isfinite(costs)
    if not finite.any():
        return np.full(costs.shape, -np.inf)
    rho = costs[finite].min()
    logw = np.full(costs.shape, -np.inf)
    logw[finite] = -(costs[finite] - rho) / lam
    diff = np.asarray(u_hat, dtype=float) - np.asarray(u_nominal, dtype=float)
    if np.any(diff != 0):
        tilt = np.einsum("ktm,tm->k", sequences, diff / cov)
        logw[finite] -= tilt[finite]
    return logw


def normalize_log_weights(logw):
    """Return ``(weights, degenerate)``; uniform weights when nothing survives."""
    finite = np.isfinite(logw)
    if not finite.any():
        return np.full(logw.shape, 1.0 / len(logw)), True
    w = np.exp(logw - logw[finite].max())
    total = w.sum()
    if not (total > 0 and np.isfinite(total)):
        return np.full(logw.shape, 1.0 / len(logw)), True
    return w / total, False


def compute_weights(batch, u_hat, u_nominal, cov, lam):
    """Fill ``batch.weights`` with the normalised importance weights.

    w_k ~ exp(-(S_k - rho)/lam - sum_t (u_hat_t - u_nom_t)^T cov_t^-1 v_t)
    """
    if batch.costs is None:
        raise ValueError("batch costs must be evaluated before weighting")
    logw = log_weights(batch.costs, batch.sequences, u_hat, u_nominal, cov, lam)
    batch.n_nonfinite = int(np.count_nonzero(~np.isfinite(batch.costs)))
    batch.weights, batch.degenerate = normalize_log_weights(logw)
    return batch


def weighted_average(batch, u_bounds=None):
    w = np.asarray(batch.weights)
    seqs = np.asarray(batch.sequences)
    if w.shape != seqs.shape[:1]:
        raise ValueError(f"weights shape {w.shape} does not match {seqs.shape[0]} sequences")
    out = np.tensordot(w, seqs, axes=1)
    if u_bounds is not None:
        np.clip(out, u_bounds[0], u_bounds[1], out=out)
    return out


def mppi_solve(x0, u_prev, cov, u_nominal, evaluator, cfg, rng, allow_zero=False):
    """One sample-evaluate-weight-average pass.

    The sampling mean (and the importance-sampling proposal mean ``u_hat``) is
    ``u_prev`` shifted by one step. ``u_nominal=None`` means no nominal tilt.
    Returns ``(U, batch)``.
    """
    u_hat = time_shift(u_prev)
    if u_nominal is None:
        u_nominal = u_hat
    batch = sample_inputs(u_hat, cov, cfg.K, rng, cfg.u_bounds, allow_zero=allow_zero)
    batch.costs = np.asarray(evaluator(x0, batch.sequences), dtype=float)
    compute_weights(batch, u_hat, u_nominal, cov, cfg.lam)
    return weighted_average(batch, cfg.u_bounds), batch
