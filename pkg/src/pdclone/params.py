"""Flattened parameter-vector layout shared by every sampler.

One point is the vector (theta_ode, estimated initial conditions,
log measurement variances), in that fixed order.  Variances live on the
log scale so that Gaussian reference distributions assign no mass to
invalid values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import ModelSpec


@dataclass(frozen=True)
class ParamLayout:
    """Index bookkeeping for the flattened parameter vector of one model."""

    model: ModelSpec

    @property
    def n_theta(self) -> int:
        return self.model.n_params

    @property
    def n_x0(self) -> int:
        return self.model.n_estimated_ic

    @property
    def n_sigma2(self) -> int:
        return self.model.n_obs_components

    @property
    def dim(self) -> int:
        return self.n_theta + self.n_x0 + self.n_sigma2

    @property
    def theta_slice(self) -> slice:
        return slice(0, self.n_theta)

    @property
    def x0_slice(self) -> slice:
        return slice(self.n_theta, self.n_theta + self.n_x0)

    @property
    def logs2_slice(self) -> slice:
        return slice(self.n_theta + self.n_x0, self.dim)

    @property
    def block_slice(self) -> slice:
        """The MH-updated block: ODE parameters plus free initial conditions."""
        return slice(0, self.n_theta + self.n_x0)

    @property
    def estimated_ic_indices(self) -> tuple:
        return tuple(
            j for j in range(self.model.dim) if self.model.ic_estimated[j]
        )

    @property
    def names(self) -> tuple:
        return (
            tuple(self.model.param_names)
            + tuple(f"x0_{j + 1}" for j in self.estimated_ic_indices)
            + tuple(f"log_sigma2_{j + 1}" for j in self.model.obs_mask)
        )

    @property
    def report_names(self) -> tuple:
        """Names on the reporting scale (sigma instead of log variance)."""
        return (
            tuple(self.model.param_names)
            + tuple(f"x0_{j + 1}" for j in self.estimated_ic_indices)
            + tuple(f"sigma_{j + 1}" for j in self.model.obs_mask)
        )

    def split(self, theta):
        """Split an (M, dim) matrix into (theta_ode, full x0, log sigma2).

        The returned x0 is (M, J) with fixed components filled in from the
        model's declared values.
        """
        theta = np.atleast_2d(np.asarray(theta, dtype=np.float64))
        m = theta.shape[0]
        theta_ode = theta[:, self.theta_slice]
        logs2 = theta[:, self.logs2_slice]
        x0 = np.tile(np.asarray(self.model.ic_fixed, dtype=np.float64), (m, 1))
        for col, j in enumerate(self.estimated_ic_indices):
            x0[:, j] = theta[:, self.n_theta + col]
        return theta_ode, x0, logs2

    def pack(self, theta_ode, x0, sigma2) -> np.ndarray:
        """Build one flattened vector from natural-scale pieces."""
        theta_ode = np.asarray(theta_ode, dtype=np.float64)
        x0 = np.asarray(x0, dtype=np.float64)
        sigma2 = np.asarray(sigma2, dtype=np.float64)
        if np.any(sigma2 <= 0):
            raise ValueError("variances must be positive")
        out = np.empty(self.dim)
        out[self.theta_slice] = theta_ode
        out[self.x0_slice] = [x0[j] for j in self.estimated_ic_indices]
        out[self.logs2_slice] = np.log(sigma2)
        return out

    def to_report_scale(self, theta):
        """Map (M, dim) layout coordinates to the reporting scale.

        ODE parameters and initial conditions are unchanged; log variances
        become standard deviations.
        """
        theta = np.atleast_2d(np.asarray(theta, dtype=np.float64))
        out = theta.copy()
        out[:, self.logs2_slice] = np.exp(0.5 * theta[:, self.logs2_slice])
        return out
