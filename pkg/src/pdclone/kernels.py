"""Forward kernels: pi_r-invariant MH-Gibbs moves for ODE targets and a
plain MH move for targets without a conjugate variance block.

Both kernels share the proposal machinery: either a fixed-scale random
walk or the adaptive normal mixture (heavy component scaled by the
weighted particle covariance, light exploration component on the
identity).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .engine import ParticleSystem, weighted_mean_cov

# Classic adaptive-MH scalings of the two mixture components.
MAIN_SCALE_SQ = 2.38**2
SMALL_SCALE_SQ = 0.1**2


@dataclass(frozen=True)
class KernelConfig:
    """Proposal configuration shared by PDC and DC.

    ``kind`` selects the fixed-scale random walk ("rwmh") or the adaptive
    normal mixture ("adaptive").  ``d`` overrides the dimension used in
    the 2.38^2/d and 0.1^2/d scalings; by default it is the updated
    block's dimension.
    """

    kind: str = "adaptive"
    rw_step: Union[float, np.ndarray] = 0.1
    mix_weight: float = 0.95
    cov_ridge: float = 1e-10
    d: Optional[int] = None
    n_moves: int = 1

    def __post_init__(self):
        if self.kind not in ("adaptive", "rwmh"):
            raise ValueError("kernel kind must be 'adaptive' or 'rwmh'")
        if not 0.0 < self.mix_weight <= 1.0:
            raise ValueError("mixture weight must lie in (0, 1]")
        if self.n_moves < 1:
            raise ValueError("n_moves must be at least 1")


def propose_block(
    cur: np.ndarray,
    W_prev: np.ndarray,
    cfg: KernelConfig,
    rng,
    adaptive_ready: bool,
    cov_override: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Draw symmetric proposals for every row of the current block."""
    m, dblock = cur.shape
    z = rng.standard_normal((m, dblock))
    if cfg.kind == "rwmh":
        return cur + z * np.asarray(cfg.rw_step, dtype=np.float64)

    d = cfg.d if cfg.d is not None else dblock
    small = cur + z * (np.sqrt(SMALL_SCALE_SQ / d))
    if cov_override is not None:
        cov = cov_override
    elif adaptive_ready:
        _, cov = weighted_mean_cov(cur, W_prev)
    else:
        cov = None
    if cov is None:
        return small
    cov = cov + cfg.cov_ridge * np.eye(dblock)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        return small
    main = cur + (z @ chol.T) * np.sqrt(MAIN_SCALE_SQ / d)
    use_main = rng.random(m) < cfg.mix_weight
    return np.where(use_main[:, None], main, small)


def gibbs_sigma2(residual_ss, n_obs_times: int, phi: float, k: int, a: float,
                 b: float, rng) -> np.ndarray:
    """Exact conditional draw of the measurement variances.

    sigma2_j ~ IG(a + N k phi / 2, b + (k phi / 2) rss_j), vectorized over
    an (M, n_obs) residual matrix; phi = 0 recovers the IG(a, b) prior.
    """
    residual_ss = np.atleast_2d(np.asarray(residual_ss, dtype=np.float64))
    shape = a + 0.5 * n_obs_times * k * phi
    scale = b + 0.5 * k * phi * residual_ss
    g = rng.gamma(shape, 1.0 / scale)
    return 1.0 / g


def _mh_accept(log_ratio: np.ndarray, rng) -> np.ndarray:
    u = rng.random(log_ratio.shape[0])
    with np.errstate(invalid="ignore"):
        return np.log(u) < log_ratio


def _block_log_ratio(phi, k, ll_prop, ll_cur, dlp, dlref):
    with np.errstate(invalid="ignore"):
        ratio = phi * (k * (ll_prop - ll_cur) + dlp) + (1.0 - phi) * dlref
    # A failed proposal is rejected; a finite proposal rescues a failed state.
    ratio = np.where(np.isneginf(ll_prop), -np.inf, ratio)
    rescue = np.isneginf(ll_cur) & np.isfinite(ll_prop)
    ratio = np.where(rescue, np.inf, ratio)
    return np.where(np.isnan(ratio), -np.inf, ratio)


class MhGibbsKernel:
    """Composite move for ODE targets: exact inverse-gamma Gibbs update of
    the measurement variances followed by an MH step on the (ODE
    parameters, free initial conditions) block."""

    def __init__(self, cfg: KernelConfig = KernelConfig()):
        self.cfg = cfg

    def init(self, target, ps: ParticleSystem) -> None:
        rss, ok = target.stats(ps.particles)
        ps.aux["rss"] = rss
        ps.aux["ok"] = ok
        ps.loglik = target.loglik(ps.particles, stats=(rss, ok))
        ps.refresh_densities(target)

    def move(self, target, ps, phi, k, W_prev, rng, first=False,
             cov_override=None) -> float:
        layout = target.layout
        rss, ok = ps.aux["rss"], ps.aux["ok"]
        prior = target.prior

        # Gibbs step: variances for particles with a valid trajectory.
        if layout.n_sigma2 and np.any(ok):
            sigma2 = gibbs_sigma2(
                rss, target.dataset.n, phi, k, prior.a, prior.b, rng
            )
            logs2 = np.log(sigma2)
            ps.particles[ok, layout.logs2_slice] = logs2[ok]
            ps.loglik = target.loglik(ps.particles, stats=(rss, ok))
            ps.refresh_densities(target)

        block = layout.block_slice
        accepted_total = 0.0
        for _ in range(self.cfg.n_moves):
            prop = ps.particles.copy()
            prop[:, block] = propose_block(
                ps.particles[:, block], W_prev, self.cfg, rng,
                adaptive_ready=not first, cov_override=cov_override,
            )
            stats_p = target.stats(prop)
            ll_p = target.loglik(prop, stats=stats_p)
            lp_p = target.log_prior(prop)
            lref_p = target.log_ref(prop)
            ratio = _block_log_ratio(
                phi, k, ll_p, ps.loglik, lp_p - ps.logprior, lref_p - ps.logref
            )
            acc = _mh_accept(ratio, rng)
            ps.particles[acc] = prop[acc]
            ps.aux["rss"][acc] = stats_p[0][acc]
            ps.aux["ok"][acc] = stats_p[1][acc]
            ps.loglik[acc] = ll_p[acc]
            ps.logprior[acc] = lp_p[acc]
            ps.logref[acc] = lref_p[acc]
            accepted_total += float(np.mean(acc))
        return accepted_total / self.cfg.n_moves


class MhKernel:
    """Plain MH move on all coordinates; for targets without the
    trajectory/variance structure (e.g. analytic toy posteriors)."""

    def __init__(self, cfg: KernelConfig = KernelConfig()):
        self.cfg = cfg

    def init(self, target, ps: ParticleSystem) -> None:
        ps.loglik = target.loglik(ps.particles)
        ps.refresh_densities(target)

    def move(self, target, ps, phi, k, W_prev, rng, first=False,
             cov_override=None) -> float:
        accepted_total = 0.0
        for _ in range(self.cfg.n_moves):
            prop = propose_block(
                ps.particles, W_prev, self.cfg, rng,
                adaptive_ready=not first, cov_override=cov_override,
            )
            ll_p = target.loglik(prop)
            lp_p = target.log_prior(prop)
            lref_p = target.log_ref(prop)
            ratio = _block_log_ratio(
                phi, k, ll_p, ps.loglik, lp_p - ps.logprior, lref_p - ps.logref
            )
            acc = _mh_accept(ratio, rng)
            ps.particles[acc] = prop[acc]
            ps.loglik[acc] = ll_p[acc]
            ps.logprior[acc] = lp_p[acc]
            ps.logref[acc] = lref_p[acc]
            accepted_total += float(np.mean(acc))
        return accepted_total / self.cfg.n_moves


def kernel_for(target, cfg: KernelConfig = KernelConfig()):
    """Pick the kernel matching the target's structure."""
    if hasattr(target, "stats") and getattr(target, "layout", None) is not None:
        return MhGibbsKernel(cfg)
    return MhKernel(cfg)
