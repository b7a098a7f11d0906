"""Clone-ladder orchestration: PDC runs across increasing clone counts,
reference recycling, and the standardized-eigenvalue stopping diagnostic.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .engine import FitSummary, PdcResult, ScheduleConfig, pdc_run
from .kernels import KernelConfig, kernel_for
from .prob import PRIOR_REFERENCE, GaussianReference


@dataclass(frozen=True)
class LadderConfig:
    k_sequence: tuple = (1, 5, 10, 20, 30, 40, 50)
    init_mode: str = "adaptive"  # or "prior"
    lambda_threshold: float = 0.05
    ref_ridge: float = 1e-8  # scaled by trace(C)/dim
    stability_rtol: float = 0.2  # agreement of lambda_S * k across last two ks

    def __post_init__(self):
        ks = tuple(int(k) for k in self.k_sequence)
        if not ks or ks[0] != 1:
            raise ValueError("k_sequence must start at 1")
        if any(b <= a for a, b in zip(ks, ks[1:])):
            raise ValueError("k_sequence must be strictly increasing")
        if self.init_mode not in ("adaptive", "prior"):
            raise ValueError("init_mode must be 'adaptive' or 'prior'")
        object.__setattr__(self, "k_sequence", ks)


def make_reference(mean_raw, cov_raw, ridge: float = 1e-8):
    """Gaussian reference from a weighted particle cloud.

    Uses the raw weighted covariance (the cloned-posterior spread, not the
    k-rescaled asymptotic one), regularized by ``ridge * trace/dim * I``.
    Returns ``(reference, warning)``; on a hopeless covariance the
    reference falls back to the prior.
    """
    mean_raw = np.asarray(mean_raw, dtype=np.float64)
    cov_raw = np.asarray(cov_raw, dtype=np.float64)
    dim = mean_raw.size
    tr = float(np.trace(cov_raw))
    if not np.isfinite(tr) or tr <= 0:
        return PRIOR_REFERENCE, "degenerate covariance; using prior reference"
    cov = cov_raw + (ridge * tr / dim) * np.eye(dim)
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        return PRIOR_REFERENCE, "covariance not positive definite; using prior reference"
    return GaussianReference(mean=mean_raw, cov=cov), None


def eigen_diagnostic(covs_by_k: dict):
    """Standardized largest eigenvalues of the cloned-posterior covariance.

    ``covs_by_k`` maps clone count -> raw weighted covariance; the k = 1
    entry is the normalizer and must be present.
    """
    if 1 not in covs_by_k:
        raise ValueError("eigen diagnostic requires the k=1 ladder point")
    ks = sorted(covs_by_k)
    lam_max = {
        k: float(np.linalg.eigvalsh(np.atleast_2d(covs_by_k[k]))[-1]) for k in ks
    }
    lam1 = lam_max[1]
    if lam1 <= 0:
        raise ValueError("k=1 covariance has no positive spread")
    lam_s = {k: lam_max[k] / lam1 for k in ks}
    return lam_max, lam_s


@dataclass
class LadderPoint:
    k: int
    summary: Optional[FitSummary]
    result: Optional[PdcResult]
    lambda_max: float = np.nan
    lambda_s: float = np.nan
    time_sec: float = np.nan
    n_steps: int = 0
    init_kind: str = "prior"
    error: Optional[str] = None


@dataclass
class LadderReport:
    points: list
    stopped: bool = False
    chosen_k: Optional[int] = None
    warnings: list = field(default_factory=list)

    def point(self, k: int) -> LadderPoint:
        for p in self.points:
            if p.k == k:
                return p
        raise KeyError(k)

    @property
    def lambda_s_by_k(self) -> dict:
        return {p.k: p.lambda_s for p in self.points if p.error is None}


def ladder_run_generic(
    make_target: Callable,
    cfg: LadderConfig,
    m: int,
    kernel_cfg: KernelConfig = KernelConfig(),
    sched: ScheduleConfig = ScheduleConfig(),
    rng=None,
    stop_early: bool = True,
) -> LadderReport:
    """Run PDC at each clone count in the ladder.

    ``make_target(ref)`` must build a fresh target whose reference
    distribution is ``ref`` (``PRIOR_REFERENCE`` or a Gaussian).  In
    adaptive mode the reference for k > 1 is fitted to the previous
    point's weighted particles.
    """
    rng = np.random.default_rng(rng)
    report = LadderReport(points=[])
    ref = PRIOR_REFERENCE
    covs = {}
    prev_point = None
    for k in cfg.k_sequence:
        use_ref = ref if cfg.init_mode == "adaptive" else PRIOR_REFERENCE
        init_kind = (
            "adaptive" if isinstance(use_ref, GaussianReference) else "prior"
        )
        target = make_target(use_ref)
        kernel = kernel_for(target, kernel_cfg)
        t0 = time.perf_counter()
        try:
            result = pdc_run(target, k, m, kernel, sched, rng)
        except Exception as exc:  # single-point failure: record, keep going
            report.points.append(
                LadderPoint(k=k, summary=None, result=None,
                            init_kind=init_kind, error=str(exc))
            )
            report.warnings.append(f"k={k} failed: {exc}")
            ref = PRIOR_REFERENCE
            continue
        elapsed = time.perf_counter() - t0
        point = LadderPoint(
            k=k, summary=result.summary, result=result,
            time_sec=elapsed, n_steps=result.n_steps, init_kind=init_kind,
        )
        report.points.append(point)
        covs[k] = result.cov_raw

        if cfg.init_mode == "adaptive":
            ref, warn = make_reference(
                result.mean_raw, result.cov_raw, cfg.ref_ridge
            )
            if warn:
                report.warnings.append(f"k={k}: {warn}")

        if 1 in covs:
            lam_max, lam_s = eigen_diagnostic(covs)
            for p in report.points:
                if p.k in lam_max:
                    p.lambda_max = lam_max[p.k]
                    p.lambda_s = lam_s[p.k]
            if (
                stop_early
                and prev_point is not None
                and point.lambda_s < cfg.lambda_threshold
            ):
                cur = point.lambda_s * point.k
                prev = prev_point.lambda_s * prev_point.k
                if prev > 0 and abs(cur - prev) / prev < cfg.stability_rtol:
                    report.stopped = True
                    report.chosen_k = k
                    break
        if point.error is None:
            prev_point = point
    return report


def ladder_run(
    model,
    dataset,
    prior,
    cfg: LadderConfig = LadderConfig(),
    m: int = 500,
    kernel_cfg: KernelConfig = KernelConfig(),
    sched: ScheduleConfig = ScheduleConfig(),
    solver_cfg=None,
    rng=None,
    stop_early: bool = True,
) -> LadderReport:
    """Clone ladder for an ODE model/dataset pair."""
    from .prob import OdeTarget
    from .solver import SolverConfig

    solver_cfg = solver_cfg or SolverConfig()

    def make_target(ref):
        return OdeTarget(model, dataset, prior, ref=ref, solver_cfg=solver_cfg)

    return ladder_run_generic(
        make_target, cfg, m, kernel_cfg, sched, rng, stop_early=stop_early
    )
