"""Guide particles: transport toward a peak of the optimal action density,
pick the target mode, and fit a covariance schedule from the transport path.
"""

from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .core import as_counted, log_weights, normalize_log_weights, time_shift

QSTAR_FLOOR = 1e-30


@dataclass
class TransportTrajectory:
    states: np.ndarray        # (L, T, m); states[0] is the particle before transport
    qstar_values: np.ndarray  # (L,) unnormalised q*, rescaled so the max is 1, floored
    log_qstar: np.ndarray     # (L,) log q* up to a constant, before flooring


@dataclass
class ModeEstimate:
    nominal: np.ndarray
    cov: np.ndarray
    k_star: int
    n_fallback: int = 0


@dataclass
class GuideStats:
    degenerate_gradients: int = 0
    rejected_updates: int = 0
    fallback_entries: int = 0


def surrogate_gradient(x0, particle, u_hat, u_nominal, cov_w, cov_g, N, lam,
                       evaluator, rng):
    """Monte Carlo gradient of the reverse-KL upper bound ``-log E[w]``.

    Perturbations ``V_i ~ N(particle, cov_g)`` are weighted with the MPPI
    weight function (temperature ``lam``, tilt ``u_hat - u_nominal`` scaled
    by ``cov_w``). Returns ``(grad, degenerate)``; the descent direction is
    ``-grad``.
    """
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    particle = np.asarray(particle, dtype=float)
    cov_g = np.asarray(cov_g, dtype=float)
    noise = rng.standard_normal((N,) + particle.shape) * np.sqrt(cov_g)
    perturbed = particle + noise
    costs = evaluator(x0, perturbed)
    logw = log_weights(costs, perturbed, u_hat, u_nominal, cov_w, lam)
    if not np.isfinite(logw).any():
        return np.zeros_like(particle), True
    w, _ = normalize_log_weights(logw)
    # grad log q(V_i | particle, cov_g) = (V_i - particle) / cov_g
    grad = -np.tensordot(w, noise, axes=1) / cov_g
    return grad, False


def log_qstar(costs, seqs, u_nominal, cov, lam):
    """log of exp(-S/lam) * q(V | u_nominal, cov), dropping normalisers."""
    d = np.asarray(seqs) - u_nominal
    return -np.asarray(costs, dtype=float) / lam - 0.5 * np.einsum("ltm,ltm->l", d, d / cov)


def _trajectory(states, costs, u_nominal, cov, lam):
    lq = log_qstar(costs, states, u_nominal, cov, lam)
    finite = np.isfinite(lq)
    scaled = np.full(lq.shape, QSTAR_FLOOR)
    if finite.any():
        scaled[finite] = np.maximum(np.exp(lq[finite] - lq[finite].max()), QSTAR_FLOOR)
    return TransportTrajectory(states=states, qstar_values=scaled, log_qstar=lq)


def transport(x0, particles, u_hat, u_nominal, cov_w, cov_g, epsilon, L, N, lam,
              evaluator, seed=0, cycle=0, u_bounds=None, stats=None, qstar_nominal=None):
    """Run ``L`` surrogate-gradient descent updates on every guide particle.

    The recorded trajectory holds the ``L`` states the gradients were taken
    at (``states[0]`` is the incoming particle); the returned particles are
    the result of the last update. ``q*`` in the trajectories uses
    ``qstar_nominal`` (default ``u_nominal``) and ``cov_w``. Returns
    ``(new_particles, trajectories)``.
    """
    qstar_nominal = u_nominal if qstar_nominal is None else qstar_nominal
    if L < 1:
        raise ValueError(f"L must be >= 1, got {L}")
    ev = as_counted(evaluator)
    stats = stats if stats is not None else GuideStats()
    particles = np.asarray(particles, dtype=float)
    out = np.empty_like(particles)
    trajs = []
    for k, particle in enumerate(particles):
        states = np.empty((L,) + particle.shape)
        cur = particle.copy()
        for l in range(L):
            states[l] = cur
            g = rngmod.stream(seed, rngmod.GUIDE_MC, cycle, k, l)
            grad, degenerate = surrogate_gradient(x0, cur, u_hat, u_nominal, cov_w, cov_g,
                                                  N, lam, ev, g)
            stats.degenerate_gradients += degenerate
            nxt = cur - epsilon * grad
            if not np.all(np.isfinite(nxt)):
                stats.rejected_updates += 1
                continue
            if u_bounds is not None:
                np.clip(nxt, u_bounds[0], u_bounds[1], out=nxt)
            cur = nxt
        out[k] = cur
        costs = ev.evaluate_states(x0, states)
        trajs.append(_trajectory(states, costs, qstar_nominal, cov_w, lam))
    return out, trajs


def pick_nominal(costs):
    """Index of the lowest-cost particle; ties go to the lowest index."""
    costs = np.where(np.isfinite(costs), costs, np.inf)
    return int(np.argmin(costs))


def fit_sigma(a, b):
    """Fit ``log b = z0 + z1 a + z2 a^2`` by b^2-weighted least squares.

    ``a`` is ``(L, P)`` (one column per fitted entry) and ``b`` is ``(L,)``,
    shared by all columns. Returns ``(sigma, ok)`` with ``sigma = sqrt(-1/(2 z2))``
    where the fit is well posed, NaN elsewhere.

    Columns are centred and scaled before solving; z2 is recovered exactly
    from the affine change of variable.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    b = np.maximum(np.asarray(b, dtype=float), QSTAR_FLOOR)
    L, P = a.shape
    sigma = np.full(P, np.nan)
    if L < 3:
        return sigma, np.zeros(P, bool)
    logb = np.log(b)
    logb = logb - logb.max()
    if np.ptp(logb) <= 1e-12:
        return sigma, np.zeros(P, bool)
    w = (b / b.max()) ** 2
    center = a.mean(axis=0)
    scale = a.std(axis=0)
    ok = scale > 1e-12 * np.maximum(1.0, np.abs(center))
    safe = np.where(ok, scale, 1.0)
    x = (a - center) / safe
    pw = np.stack([np.einsum("l,lp->p", w, x ** j) for j in range(5)], axis=-1)  # (P, 5)
    M = np.stack([pw[:, 0:3], pw[:, 1:4], pw[:, 2:5]], axis=1)                 # (P, 3, 3)
    r = np.stack([np.einsum("l,lp->p", w * logb, x ** j) for j in range(3)], axis=-1)
    with np.errstate(all="ignore"):
        cond = np.linalg.cond(M)
    ok &= np.isfinite(cond) & (cond < 1e12)
    z = np.zeros((P, 3))
    if ok.any():
        z[ok] = np.linalg.solve(M[ok], r[ok][..., None])[..., 0]
    z2 = z[:, 2] / safe ** 2
    ok &= z2 < 0
    sigma[ok] = np.sqrt(-1.0 / (2.0 * z2[ok]))
    return sigma, ok


def fit_covariance(traj, clamp, fallback):
    """Per-entry variance schedule from a transport trajectory.

    Entries whose fit is ill posed take the ``fallback`` value. Returns
    ``(cov, n_fallback)``; fitted standard deviations are clamped to
    ``clamp = (sigma_min, sigma_max)`` before squaring.
    """
    states = np.asarray(traj.states, dtype=float)
    L = states.shape[0]
    shape = states.shape[1:]
    fallback = np.broadcast_to(np.asarray(fallback, dtype=float), shape)
    sigma, ok = fit_sigma(states.reshape(L, -1), traj.qstar_values)
    sigma = np.clip(sigma, clamp[0], clamp[1])
    cov = np.where(ok, sigma ** 2, fallback.ravel()).reshape(shape)
    return cov, int(np.count_nonzero(~ok))


def init_particles(u_prev, K_g, cov_g, seed, cycle=0, u_bounds=None):
    """Cold start: the time-shifted previous solution plus one ``cov_g`` draw each."""
    base = time_shift(u_prev)
    g = rngmod.stream(seed, rngmod.GUIDE_INIT, cycle)
    parts = base + g.standard_normal((K_g,) + base.shape) * np.sqrt(cov_g)
    if u_bounds is not None:
        np.clip(parts, u_bounds[0], u_bounds[1], out=parts)
    return parts


def guide_step(x0, u_prev, particles, cfg, evaluator, cycle=0, nominal_prev=None,
               fallback=None, stats=None):
    """Transport, pick the target mode, fit its covariance.

    ``particles=None`` triggers a cold start. ``nominal_prev`` (already time
    shifted by the caller, or None to use the shifted ``u_prev``) anchors the
    q* values of the fit. The transport weights carry no nominal tilt: the
    guide descends the smoothed cost alone, without a pull back toward any
    prior mean. Returns ``(ModeEstimate, particles)``.
    """
    ev = as_counted(evaluator)
    stats = stats if stats is not None else GuideStats()
    cov_w = cfg.fixed_cov()
    cov_g = cfg.guide_cov()
    fallback = cov_w if fallback is None else fallback
    u_hat = time_shift(u_prev)
    u_nom = u_hat if nominal_prev is None else np.asarray(nominal_prev, dtype=float)
    if particles is None:
        particles = init_particles(u_prev, cfg.K_g, cov_g, cfg.seed, cycle, cfg.u_bounds)
    particles, trajs = transport(x0, particles, u_hat, u_hat, cov_w, cov_g, cfg.epsilon,
                                 cfg.L, cfg.N, cfg.lam, ev, seed=cfg.seed, cycle=cycle,
                                 u_bounds=cfg.u_bounds, stats=stats, qstar_nominal=u_nom)
    if len(particles) == 1:
        k_star = 0
    else:
        k_star = pick_nominal(ev.evaluate_states(x0, particles))
    cov, n_fb = fit_covariance(trajs[k_star], cfg.sigma_clamp, fallback)
    stats.fallback_entries += n_fb
    est = ModeEstimate(nominal=particles[k_star].copy(), cov=cov, k_star=k_star, n_fallback=n_fb)
    return est, particles
