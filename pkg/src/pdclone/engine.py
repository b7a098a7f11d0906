"""Annealed-SMC engine: particle system, adaptive schedule, reweighting,
resampling, and the particle-data-cloning driver loop.

The engine is target-agnostic: any object exposing ``dim``,
``sample_initial``, ``loglik``, ``log_prior`` and ``log_ref`` (vectorized
over an (M, dim) matrix) can be run, together with a kernel that keeps the
per-particle caches consistent.  All weight arithmetic is in log space.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

TRACE_COLUMNS = ("r", "phi", "ress", "accept_rate", "logZ_increment")


class ScheduleError(RuntimeError):
    """The annealing schedule cannot proceed (degenerate weights or too
    many steps); carries the trace collected so far."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class ScheduleConfig:
    eps_rcess: float = 0.999
    zeta: float = 0.5
    bisection_tol: float = 1e-10
    bisection_max_iter: int = 100
    max_R: int = 10_000

    def __post_init__(self):
        if not 0.0 < self.eps_rcess <= 1.0:
            raise ValueError("eps_rcess must lie in (0, 1]")
        if not 0.0 < self.zeta <= 1.0:
            raise ValueError("zeta must lie in (0, 1]")


@dataclass
class ParticleSystem:
    """M particles with weights, annealing state, and density caches."""

    particles: np.ndarray
    logw: np.ndarray
    W: np.ndarray
    r: int = 0
    phi: float = 0.0
    loglik: Optional[np.ndarray] = None
    logprior: Optional[np.ndarray] = None
    logref: Optional[np.ndarray] = None
    aux: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.particles.shape[0]

    def base_logweight(self, k: int) -> np.ndarray:
        """Per-particle log(p^k p0 / ref); the incremental-weight slope."""
        with np.errstate(invalid="ignore"):
            base = k * self.loglik + self.logprior - self.logref
        return np.where(np.isnan(base), -np.inf, base)

    def refresh_densities(self, target) -> None:
        self.logprior = target.log_prior(self.particles)
        self.logref = target.log_ref(self.particles)


def init_particles(target, m: int, rng) -> ParticleSystem:
    particles = target.sample_initial(m, rng)
    ps = ParticleSystem(
        particles=particles,
        logw=np.zeros(m),
        W=np.full(m, 1.0 / m),
    )
    ps.refresh_densities(target)
    return ps


def ess(W) -> float:
    """Effective sample size 1 / sum(W^2) of normalized weights."""
    W = np.asarray(W, dtype=np.float64)
    return float(1.0 / np.sum(W * W))


def rcess(W_prev, logw_inc) -> float:
    """Relative conditional ESS of an incremental reweighting step.

    Computed through log-sum-exp; invariant to a common scaling of the
    incremental weights.
    """
    W_prev = np.asarray(W_prev, dtype=np.float64)
    logw_inc = np.asarray(logw_inc, dtype=np.float64)
    with np.errstate(divide="ignore"):
        logW = np.where(W_prev > 0, np.log(np.where(W_prev > 0, W_prev, 1.0)), -np.inf)
    num = logsumexp(logW + logw_inc)
    den = logsumexp(logW + 2.0 * logw_inc)
    if np.isneginf(num):
        raise ScheduleError("all incremental weights are zero")
    return float(np.exp(2.0 * num - den))


def next_phi(ps: ParticleSystem, k: int, sched: ScheduleConfig) -> float:
    """Choose the next annealing parameter by rCESS bisection on
    (phi_r-1, 1]; no new likelihood evaluations are needed."""
    if ps.phi >= 1.0:
        raise ValueError("annealing already finished")
    base = ps.base_logweight(k)

    def f(phi: float) -> float:
        return rcess(ps.W, (phi - ps.phi) * base)

    eps = sched.eps_rcess
    if f(1.0) >= eps:
        return 1.0
    lo, hi = ps.phi, 1.0
    # f(lo) = 1 >= eps by construction; guard against misuse anyway.
    if f(lo) < eps:
        raise ScheduleError("rCESS below threshold at the current phi")
    for _ in range(sched.bisection_max_iter):
        mid = 0.5 * (lo + hi)
        if f(mid) >= eps:
            lo = mid
        else:
            hi = mid
        if hi - lo < sched.bisection_tol:
            break
    return lo if lo > ps.phi else hi


def reweight(ps: ParticleSystem, phi_new: float, k: int) -> float:
    """Apply the incremental weights for the move phi -> phi_new and
    renormalize; returns the log normalizing-constant increment."""
    if phi_new <= ps.phi:
        raise ValueError("phi must strictly increase")
    base = ps.base_logweight(k)
    with np.errstate(invalid="ignore"):
        logw_inc = (phi_new - ps.phi) * base
    logw_inc = np.where(np.isnan(logw_inc), -np.inf, logw_inc)
    with np.errstate(divide="ignore"):
        logW = np.where(ps.W > 0, np.log(np.where(ps.W > 0, ps.W, 1.0)), -np.inf)
    logz_inc = float(logsumexp(logW + logw_inc))
    if np.isneginf(logz_inc):
        raise ScheduleError("all particles received zero weight")
    ps.logw = ps.logw + logw_inc
    norm = logsumexp(ps.logw)
    ps.W = np.exp(ps.logw - norm)
    return logz_inc


def resample_multinomial(ps: ParticleSystem, rng) -> np.ndarray:
    """Multinomial resampling; resets weights to uniform and permutes the
    caches consistently.  Returns the chosen ancestor indices."""
    m = ps.m
    idx = rng.choice(m, size=m, p=ps.W)
    ps.particles = ps.particles[idx]
    for name in ("loglik", "logprior", "logref"):
        arr = getattr(ps, name)
        if arr is not None:
            setattr(ps, name, arr[idx])
    for key, arr in ps.aux.items():
        ps.aux[key] = arr[idx]
    ps.logw = np.zeros(m)
    ps.W = np.full(m, 1.0 / m)
    return idx


def weighted_mean_cov(particles, W):
    particles = np.asarray(particles, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    mean = W @ particles
    delta = particles - mean
    cov = (delta * W[:, None]).T @ delta
    return mean, cov


@dataclass(frozen=True)
class FitSummary:
    """Point estimate and rescaled asymptotic uncertainty at phi = 1."""

    names: tuple
    theta_hat: np.ndarray
    cov_rescaled: np.ndarray  # k x weighted covariance
    se: np.ndarray
    loglik_hat: float
    k: int
    n_steps: int  # R for PDC, chain length for DC
    n_resampled: int = 0
    degenerate: bool = False

    @property
    def ci_lower(self) -> np.ndarray:
        return self.theta_hat - 1.96 * self.se

    @property
    def ci_upper(self) -> np.ndarray:
        return self.theta_hat + 1.96 * self.se


def summarize(
    particles,
    W,
    k: int,
    names=None,
    loglik_hat: float = np.nan,
    n_steps: int = 0,
    n_resampled: int = 0,
) -> FitSummary:
    """Weighted MLE and k-rescaled asymptotic covariance of a particle
    cloud at phi = 1."""
    particles = np.atleast_2d(np.asarray(particles, dtype=np.float64))
    mean, cov = weighted_mean_cov(particles, W)
    support = particles[np.asarray(W) > 0]
    degenerate = len(np.unique(support, axis=0)) < 2
    cov_rescaled = k * cov
    se = np.sqrt(np.clip(np.diag(cov_rescaled), 0.0, None))
    if names is None:
        names = tuple(f"p{i}" for i in range(particles.shape[1]))
    return FitSummary(
        names=tuple(names),
        theta_hat=mean,
        cov_rescaled=cov_rescaled,
        se=se,
        loglik_hat=float(loglik_hat),
        k=int(k),
        n_steps=n_steps,
        n_resampled=n_resampled,
        degenerate=degenerate,
    )


@dataclass
class PdcResult:
    """Everything a PDC run produces: the final weighted particles, the
    reporting summary, the raw-coordinate moments, and the schedule trace."""

    ps: ParticleSystem
    summary: FitSummary
    trace: np.ndarray  # columns TRACE_COLUMNS
    n_steps: int
    n_resampled: int
    mean_raw: np.ndarray
    cov_raw: np.ndarray
    pre_propagation: Optional[np.ndarray] = None


def pdc_run(
    target,
    k: int,
    m: int,
    kernel,
    sched: ScheduleConfig = ScheduleConfig(),
    rng=None,
) -> PdcResult:
    """Run the annealed sampler from the reference to the k-cloned
    posterior with an adaptive rCESS schedule."""
    if m < 2:
        raise ValueError("need at least two particles")
    if int(k) != k or k < 1:
        raise ValueError("k must be a positive integer")
    rng = np.random.default_rng(rng)
    ps = init_particles(target, m, rng)
    kernel.init(target, ps)
    trace_rows = []
    n_resampled = 0
    pre_prop = None
    while ps.phi < 1.0:
        ps.r += 1
        if ps.r > sched.max_R:
            raise ScheduleError(
                f"no convergence within max_R={sched.max_R} annealing steps",
                trace=np.asarray(trace_rows),
            )
        W_prev = ps.W.copy()
        phi_new = next_phi(ps, k, sched)
        logz_inc = reweight(ps, phi_new, k)
        if phi_new >= 1.0:
            pre_prop = ps.particles.copy()
        accept = kernel.move(
            target, ps, phi_new, k, W_prev, rng, first=(ps.r == 1)
        )
        ps.phi = phi_new
        rel_ess = ess(ps.W) / ps.m
        trace_rows.append((ps.r, ps.phi, rel_ess, accept, logz_inc))
        if ps.phi >= 1.0:
            break
        if rel_ess < sched.zeta:
            resample_multinomial(ps, rng)
            n_resampled += 1
    mean_raw, cov_raw = weighted_mean_cov(ps.particles, ps.W)
    transform = getattr(target, "report_particles", None)
    if transform is not None:
        report, names = transform(ps.particles)
    else:
        report, names = ps.particles, None
    loglik_hat = float(target.loglik(mean_raw[None, :])[0])
    summary = summarize(
        report, ps.W, k, names=names, loglik_hat=loglik_hat,
        n_steps=ps.r, n_resampled=n_resampled,
    )
    return PdcResult(
        ps=ps,
        summary=summary,
        trace=np.asarray(trace_rows, dtype=np.float64),
        n_steps=ps.r,
        n_resampled=n_resampled,
        mean_raw=mean_raw,
        cov_raw=cov_raw,
        pre_propagation=pre_prop,
    )
