"""Priors, Gaussian likelihood, cloned posteriors, and annealed densities.

Everything is computed in log space and vectorized over an (M, dim)
matrix of flattened parameter vectors.  A failed ODE solve yields a
log-likelihood of -inf, never NaN.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Union

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import gammaln

from .data import Dataset
from .models import ModelSpec
from .params import ParamLayout
from .solver import SolverConfig, batch_residual_ss

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class PriorSpec:
    """Independent priors: normal for ODE parameters and free initial
    conditions, inverse-gamma(a, b) for each measurement variance."""

    mu: np.ndarray  # (P,) means for theta_ode
    sd_ode: np.ndarray  # (P,) standard deviations
    tau: np.ndarray  # (n_x0,) means for free initial conditions
    sd_x0: np.ndarray  # (n_x0,) standard deviations
    a: float = 1.0
    b: float = 1.0

    def __post_init__(self):
        for name in ("mu", "sd_ode", "tau", "sd_x0"):
            object.__setattr__(
                self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=np.float64))
            )
        if np.any(self.sd_ode <= 0) or np.any(self.sd_x0 <= 0):
            raise ValueError("prior standard deviations must be positive")
        if self.a <= 0 or self.b <= 0:
            raise ValueError("inverse-gamma hyperparameters must be positive")

    def check(self, layout: ParamLayout) -> None:
        if self.mu.size != layout.n_theta or self.sd_ode.size != layout.n_theta:
            raise ValueError("prior theta dimensions do not match the model")
        if self.tau.size != layout.n_x0 or self.sd_x0.size != layout.n_x0:
            raise ValueError("prior x0 dimensions do not match the model")


def default_prior(layout: ParamLayout) -> PriorSpec:
    """The simulation-study default: N(5, 5^2) parameters, N(2, 4^2)
    initial conditions, IG(1, 1) variances."""
    return PriorSpec(
        mu=np.full(layout.n_theta, 5.0),
        sd_ode=np.full(layout.n_theta, 5.0),
        tau=np.full(layout.n_x0, 2.0),
        sd_x0=np.full(layout.n_x0, 4.0),
        a=1.0,
        b=1.0,
    )


def log_prior(theta, prior: PriorSpec, layout: ParamLayout) -> np.ndarray:
    """Log prior density on the layout coordinates, (M,).

    Includes the +log(sigma2) Jacobian so the density is correct for the
    log-variance parameterization.
    """
    theta = np.atleast_2d(np.asarray(theta, dtype=np.float64))
    th = theta[:, layout.theta_slice]
    x0 = theta[:, layout.x0_slice]
    logs2 = theta[:, layout.logs2_slice]
    out = np.zeros(theta.shape[0])
    if layout.n_theta:
        z = (th - prior.mu) / prior.sd_ode
        out += np.sum(-0.5 * (LOG_2PI + z * z) - np.log(prior.sd_ode), axis=1)
    if layout.n_x0:
        z = (x0 - prior.tau) / prior.sd_x0
        out += np.sum(-0.5 * (LOG_2PI + z * z) - np.log(prior.sd_x0), axis=1)
    if layout.n_sigma2:
        a, b = prior.a, prior.b
        # IG(a, b) density in sigma2, times the Jacobian d(sigma2)/d(log sigma2).
        out += np.sum(
            a * np.log(b) - gammaln(a) - a * logs2 - b * np.exp(-logs2), axis=1
        )
    return out


def sample_prior(prior: PriorSpec, layout: ParamLayout, m: int, rng) -> np.ndarray:
    theta = np.empty((m, layout.dim))
    theta[:, layout.theta_slice] = rng.normal(
        prior.mu, prior.sd_ode, size=(m, layout.n_theta)
    )
    theta[:, layout.x0_slice] = rng.normal(
        prior.tau, prior.sd_x0, size=(m, layout.n_x0)
    )
    # sigma2 ~ IG(a, b): reciprocal of a Gamma(a, 1/b) draw.
    g = rng.gamma(prior.a, 1.0 / prior.b, size=(m, layout.n_sigma2))
    theta[:, layout.logs2_slice] = -np.log(g)
    return theta


@dataclass(frozen=True)
class GaussianReference:
    """Multivariate-normal reference on the layout coordinates."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64))
        object.__setattr__(self, "cov", np.asarray(self.cov, dtype=np.float64))
        if self.cov.shape != (self.mean.size, self.mean.size):
            raise ValueError("covariance shape must match the mean")

    @cached_property
    def _chol(self) -> np.ndarray:
        return np.linalg.cholesky(self.cov)

    @cached_property
    def _logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self._chol))))

    def logpdf(self, theta) -> np.ndarray:
        theta = np.atleast_2d(np.asarray(theta, dtype=np.float64))
        delta = theta - self.mean
        sol = solve_triangular(self._chol, delta.T, lower=True)
        quad = np.sum(sol * sol, axis=0)
        d = self.mean.size
        return -0.5 * (d * LOG_2PI + self._logdet + quad)

    def sample(self, m: int, rng) -> np.ndarray:
        z = rng.standard_normal((m, self.mean.size))
        return self.mean + z @ self._chol.T


# A reference is either the prior itself or a fitted Gaussian.
ReferenceSpec = Union[str, GaussianReference]
PRIOR_REFERENCE = "prior"


def log_ref(theta, ref: ReferenceSpec, prior: PriorSpec, layout: ParamLayout) -> np.ndarray:
    if isinstance(ref, GaussianReference):
        return ref.logpdf(theta)
    if ref == PRIOR_REFERENCE:
        return log_prior(theta, prior, layout)
    raise ValueError(f"unknown reference kind {ref!r}")


def sample_ref(ref: ReferenceSpec, prior: PriorSpec, layout: ParamLayout, m: int, rng):
    if isinstance(ref, GaussianReference):
        return ref.sample(m, rng)
    if ref == PRIOR_REFERENCE:
        return sample_prior(prior, layout, m, rng)
    raise ValueError(f"unknown reference kind {ref!r}")


def loglik_from_rss(rss, ok, logs2, n_obs_times: int) -> np.ndarray:
    """Gaussian log-likelihood given per-component residual sums of squares."""
    rss = np.atleast_2d(rss)
    logs2 = np.atleast_2d(logs2)
    s2 = np.exp(logs2)
    ll = np.sum(
        -0.5 * n_obs_times * (LOG_2PI + logs2) - rss / (2.0 * s2), axis=1
    )
    ll = np.where(np.asarray(ok, dtype=bool), ll, -np.inf)
    return np.where(np.isnan(ll), -np.inf, ll)


class OdeTarget:
    """The k-cloned posterior of one model/dataset pair, exposed through
    the vectorized density interface the SMC engine consumes.

    ``stats`` returns the per-particle residual sums of squares and solve
    flags; kernels cache them so that variance updates never re-solve.
    """

    def __init__(
        self,
        model: ModelSpec,
        dataset: Dataset,
        prior: PriorSpec,
        ref: ReferenceSpec = PRIOR_REFERENCE,
        solver_cfg: SolverConfig = SolverConfig(),
        max_init_redraws: int = 100,
    ):
        if tuple(dataset.obs_components) != tuple(model.obs_mask):
            raise ValueError(
                "dataset observes components "
                f"{dataset.obs_components}, model declares {model.obs_mask}"
            )
        self.model = model
        self.dataset = dataset
        self.prior = prior
        self.ref = ref
        self.solver_cfg = solver_cfg
        self.layout = ParamLayout(model)
        self.max_init_redraws = max_init_redraws
        prior.check(self.layout)

    @property
    def dim(self) -> int:
        return self.layout.dim

    def stats(self, theta):
        """(rss, ok) for each row of theta; one ODE solve per row."""
        theta = np.atleast_2d(np.asarray(theta, dtype=np.float64))
        theta_ode, x0, _ = self.layout.split(theta)
        return batch_residual_ss(self.model, theta_ode, x0, self.dataset, self.solver_cfg)

    def loglik(self, theta, stats=None) -> np.ndarray:
        theta = np.atleast_2d(np.asarray(theta, dtype=np.float64))
        if stats is None:
            stats = self.stats(theta)
        rss, ok = stats
        logs2 = theta[:, self.layout.logs2_slice]
        return loglik_from_rss(rss, ok, logs2, self.dataset.n)

    def log_prior(self, theta) -> np.ndarray:
        return log_prior(theta, self.prior, self.layout)

    def log_ref(self, theta) -> np.ndarray:
        return log_ref(theta, self.ref, self.prior, self.layout)

    def report_particles(self, theta):
        """Reporting-scale view (sigma instead of log variance) + names."""
        return self.layout.to_report_scale(theta), self.layout.report_names

    def sample_initial(self, m: int, rng) -> np.ndarray:
        """Draw from the reference, re-drawing zero-likelihood particles.

        After `max_init_redraws` rounds any remaining failures are kept;
        they enter the run with -inf log-likelihood (zero weight).
        """
        theta = sample_ref(self.ref, self.prior, self.layout, m, rng)
        bad = ~np.isfinite(self.loglik(theta))
        rounds = 0
        while np.any(bad) and rounds < self.max_init_redraws:
            redraw = sample_ref(self.ref, self.prior, self.layout, int(bad.sum()), rng)
            theta[bad] = redraw
            bad_idx = np.flatnonzero(bad)
            still = ~np.isfinite(self.loglik(redraw))
            bad = np.zeros(m, dtype=bool)
            bad[bad_idx[still]] = True
            rounds += 1
        return theta


def log_likelihood(
    model: ModelSpec,
    theta,
    dataset: Dataset,
    prior: Optional[PriorSpec] = None,
    solver_cfg: SolverConfig = SolverConfig(),
) -> float:
    """Scalar log-likelihood of one flattened parameter vector."""
    layout = ParamLayout(model)
    theta = np.atleast_2d(np.asarray(theta, dtype=np.float64))
    if theta.shape[1] != layout.dim:
        raise ValueError(
            f"parameter vector has {theta.shape[1]} entries, layout needs {layout.dim}"
        )
    theta_ode, x0, logs2 = layout.split(theta)
    rss, ok = batch_residual_ss(model, theta_ode, x0, dataset, solver_cfg)
    return float(loglik_from_rss(rss, ok, logs2, dataset.n)[0])


def log_k_cloned_posterior(
    model: ModelSpec,
    theta,
    k: int,
    dataset: Dataset,
    prior: PriorSpec,
    solver_cfg: SolverConfig = SolverConfig(),
) -> float:
    """Unnormalized log density of the k-cloned posterior at one point."""
    if int(k) != k or k < 1:
        raise ValueError("k must be a positive integer")
    layout = ParamLayout(model)
    ll = log_likelihood(model, theta, dataset, solver_cfg=solver_cfg)
    lp = float(log_prior(theta, prior, layout)[0])
    return k * ll + lp


def log_intermediate(
    model: ModelSpec,
    theta,
    k: int,
    phi: float,
    dataset: Dataset,
    prior: PriorSpec,
    ref: ReferenceSpec = PRIOR_REFERENCE,
    solver_cfg: SolverConfig = SolverConfig(),
) -> float:
    """Unnormalized log density of the annealed distribution at one point."""
    if not 0.0 <= phi <= 1.0:
        raise ValueError("phi must lie in [0, 1]")
    layout = ParamLayout(model)
    lp = log_k_cloned_posterior(model, theta, k, dataset, prior, solver_cfg)
    lr = float(log_ref(theta, ref, prior, layout)[0])
    if phi == 0.0:
        return lr
    if np.isneginf(lp):
        return -np.inf if phi > 0 else lr
    return phi * lp + (1.0 - phi) * lr
