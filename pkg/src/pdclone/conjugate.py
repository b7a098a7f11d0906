"""Tractable Gaussian-mean target with closed-form cloned posteriors.

For y_i ~ N(theta, sigma2) with sigma2 known and a N(mu0, tau0^2) prior,
the k-cloned posterior is Gaussian in closed form.  This target plugs into
the same engine and kernels as the ODE targets and anchors the
correctness tests of the whole sampling stack.
"""

from __future__ import annotations

import numpy as np

from .prob import PRIOR_REFERENCE, GaussianReference, LOG_2PI


class GaussianMeanTarget:
    """Unknown-mean normal model with known variance."""

    dim = 1

    def __init__(self, y, sigma2: float, mu0: float, tau0_sq: float,
                 ref=PRIOR_REFERENCE):
        y = np.asarray(y, dtype=np.float64)
        if sigma2 <= 0 or tau0_sq <= 0:
            raise ValueError("variances must be positive")
        self.n = y.size
        self.sum_y = float(np.sum(y))
        self.sum_yy = float(np.sum(y * y))
        self.sigma2 = float(sigma2)
        self.mu0 = float(mu0)
        self.tau0_sq = float(tau0_sq)
        self.ref = ref

    def loglik(self, theta) -> np.ndarray:
        th = np.atleast_2d(np.asarray(theta, dtype=np.float64))[:, 0]
        quad = self.sum_yy - 2.0 * th * self.sum_y + self.n * th * th
        return -0.5 * self.n * (LOG_2PI + np.log(self.sigma2)) - quad / (
            2.0 * self.sigma2
        )

    def log_prior(self, theta) -> np.ndarray:
        th = np.atleast_2d(np.asarray(theta, dtype=np.float64))[:, 0]
        z = (th - self.mu0) ** 2 / self.tau0_sq
        return -0.5 * (LOG_2PI + np.log(self.tau0_sq) + z)

    def log_ref(self, theta) -> np.ndarray:
        if isinstance(self.ref, GaussianReference):
            return self.ref.logpdf(theta)
        return self.log_prior(theta)

    def sample_initial(self, m: int, rng) -> np.ndarray:
        if isinstance(self.ref, GaussianReference):
            return self.ref.sample(m, rng)
        return rng.normal(self.mu0, np.sqrt(self.tau0_sq), size=(m, 1))

    def cloned_posterior(self, k: int):
        """Exact (mean, variance) of the k-cloned posterior."""
        prec = 1.0 / self.tau0_sq + k * self.n / self.sigma2
        var = 1.0 / prec
        mean = var * (self.mu0 / self.tau0_sq + k * self.sum_y / self.sigma2)
        return mean, var

    def log_cloned_posterior(self, theta, k: int) -> np.ndarray:
        """Unnormalized log density k * loglik + log prior."""
        theta = np.atleast_2d(theta)
        return k * self.loglik(theta) + self.log_prior(theta)
