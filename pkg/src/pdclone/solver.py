"""Adaptive Runge-Kutta integration of the model ODEs.

The integrator is an explicit Dormand-Prince 5(4) pair with step-size
control and exact step-hitting at the requested output times.  Failed
solves (pole in the rhs, step underflow, step budget exhausted) are
first-class values: downstream likelihood code maps them to -inf rather
than raising.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

# Dormand-Prince 5(4) tableau.
_C2, _C3, _C4, _C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = (
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
)
_A61, _A62, _A63, _A64, _A65 = (
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
)
_B1, _B3, _B4, _B5, _B6 = (
    35.0 / 384.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
)
# Difference between the 5th- and 4th-order weights (error estimator).
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71.0 / 57600.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
)

# Failure codes returned by the compiled core.
OK = 0
FAIL_RHS = 1
FAIL_MAX_STEPS = 2
FAIL_STEP_UNDERFLOW = 3
FAIL_BOUND = 4

_FAIL_REASONS = {
    FAIL_RHS: "non-finite rhs",
    FAIL_MAX_STEPS: "max_steps exceeded",
    FAIL_STEP_UNDERFLOW: "step-size underflow",
    FAIL_BOUND: "solution magnitude bound exceeded",
}


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and step-control limits for the adaptive integrator."""

    rel_tol: float = 1e-6
    abs_tol: float = 1e-8
    max_steps: int = 100_000
    initial_step: Optional[float] = None  # default: span / 100
    min_step: Optional[float] = None  # default: 1e-10 * span
    # Solutions whose magnitude exceeds this are treated as diverged and the
    # solve fails, mirroring how production stiff solvers abort on blow-up.
    solution_bound: float = 1e4

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.solution_bound <= 0:
            raise ValueError("solution_bound must be positive")
        if self.max_steps <= 0:
            raise ValueError("max_steps must be positive")
        if (
            self.initial_step is not None
            and self.min_step is not None
            and not self.min_step < self.initial_step
        ):
            raise ValueError("min_step must be smaller than initial_step")

    def steps_for(self, t_end: float):
        span = max(t_end, 1.0)
        h0 = self.initial_step if self.initial_step is not None else span / 100.0
        hmin = self.min_step if self.min_step is not None else 1e-10 * span
        return h0, hmin


@dataclass(frozen=True)
class SolveStatus:
    ok: bool
    reason: Optional[str] = None
    t_fail: Optional[float] = None


@dataclass(frozen=True)
class Trajectory:
    """ODE solution sampled at the requested times.

    On failure ``states`` holds only the rows solved before the failure
    point, and ``times`` is truncated to match.
    """

    times: np.ndarray
    states: np.ndarray
    status: SolveStatus


@njit
def _integrate(rhs, p, consts, x0, times, rtol, atol, max_steps, h0, hmin,
               xbound, states):
    """Core stepper.  Fills `states` row by row; returns (rows_done, code)."""
    n = times.shape[0]
    dim = x0.shape[0]
    t = 0.0
    y = x0.copy()
    idx = 0
    while idx < n and times[idx] <= t:
        for j in range(dim):
            states[idx, j] = y[j]
        idx += 1
    if idx >= n:
        return idx, OK

    k1 = np.empty(dim)
    k2 = np.empty(dim)
    k3 = np.empty(dim)
    k4 = np.empty(dim)
    k5 = np.empty(dim)
    k6 = np.empty(dim)
    k7 = np.empty(dim)
    ytmp = np.empty(dim)
    ynew = np.empty(dim)

    if rhs(t, y, p, consts, k1) != 0:
        return idx, FAIL_RHS
    for j in range(dim):
        if not np.isfinite(k1[j]):
            return idx, FAIL_RHS

    h = h0
    steps = 0
    while idx < n:
        if steps >= max_steps:
            return idx, FAIL_MAX_STEPS
        steps += 1
        t_target = times[idx]
        hit = False
        if h >= t_target - t:
            h = t_target - t
            hit = True
        if h < hmin:
            return idx, FAIL_STEP_UNDERFLOW

        # Stage evaluations (FSAL pair: k7 becomes next step's k1).
        for j in range(dim):
            ytmp[j] = y[j] + h * _A21 * k1[j]
        if rhs(t + _C2 * h, ytmp, p, consts, k2) != 0:
            return idx, FAIL_RHS
        for j in range(dim):
            ytmp[j] = y[j] + h * (_A31 * k1[j] + _A32 * k2[j])
        if rhs(t + _C3 * h, ytmp, p, consts, k3) != 0:
            return idx, FAIL_RHS
        for j in range(dim):
            ytmp[j] = y[j] + h * (_A41 * k1[j] + _A42 * k2[j] + _A43 * k3[j])
        if rhs(t + _C4 * h, ytmp, p, consts, k4) != 0:
            return idx, FAIL_RHS
        for j in range(dim):
            ytmp[j] = y[j] + h * (
                _A51 * k1[j] + _A52 * k2[j] + _A53 * k3[j] + _A54 * k4[j]
            )
        if rhs(t + _C5 * h, ytmp, p, consts, k5) != 0:
            return idx, FAIL_RHS
        for j in range(dim):
            ytmp[j] = y[j] + h * (
                _A61 * k1[j]
                + _A62 * k2[j]
                + _A63 * k3[j]
                + _A64 * k4[j]
                + _A65 * k5[j]
            )
        if rhs(t + h, ytmp, p, consts, k6) != 0:
            return idx, FAIL_RHS
        for j in range(dim):
            ynew[j] = y[j] + h * (
                _B1 * k1[j] + _B3 * k3[j] + _B4 * k4[j] + _B5 * k5[j] + _B6 * k6[j]
            )
        if rhs(t + h, ynew, p, consts, k7) != 0:
            return idx, FAIL_RHS

        # Weighted rms error of the embedded 4th-order difference.
        err = 0.0
        finite = True
        for j in range(dim):
            if not (np.isfinite(ynew[j]) and np.isfinite(k7[j])):
                finite = False
                break
            e = h * (
                _E1 * k1[j]
                + _E3 * k3[j]
                + _E4 * k4[j]
                + _E5 * k5[j]
                + _E6 * k6[j]
                + _E7 * k7[j]
            )
            ay = abs(y[j])
            an = abs(ynew[j])
            scale = atol + rtol * (ay if ay > an else an)
            e = e / scale
            err += e * e
        if not finite:
            return idx, FAIL_RHS
        err = np.sqrt(err / dim)

        if err <= 1.0:
            t = t_target if hit else t + h
            for j in range(dim):
                if abs(ynew[j]) > xbound:
                    return idx, FAIL_BOUND
            for j in range(dim):
                y[j] = ynew[j]
                k1[j] = k7[j]
            while idx < n and times[idx] <= t:
                for j in range(dim):
                    states[idx, j] = y[j]
                idx += 1
            if err == 0.0:
                factor = 5.0
            else:
                factor = 0.9 * err ** (-0.2)
                if factor > 5.0:
                    factor = 5.0
                elif factor < 0.2:
                    factor = 0.2
            h = h * factor
        else:
            factor = 0.9 * err ** (-0.2)
            if factor < 0.1:
                factor = 0.1
            h = h * factor
    return idx, OK


@njit
def _batch_rss(rhs, params, x0s, consts, times, y, obs_idx, rtol, atol,
               max_steps, h0, hmin, xbound):
    """Per-particle residual sums of squares at the observed components.

    Returns (rss, ok) with rss of shape (M, n_obs); rows with ok == False
    hold no meaningful rss.
    """
    m_total = params.shape[0]
    n = times.shape[0]
    n_obs = obs_idx.shape[0]
    dim = x0s.shape[1]
    rss = np.zeros((m_total, n_obs))
    ok = np.zeros(m_total, dtype=np.bool_)
    states = np.empty((n, dim))
    for m in range(m_total):
        rows, code = _integrate(
            rhs, params[m], consts, x0s[m], times, rtol, atol, max_steps,
            h0, hmin, xbound, states,
        )
        if code != OK or rows < n:
            continue
        good = True
        for jo in range(n_obs):
            s = 0.0
            col = obs_idx[jo]
            for i in range(n):
                r = y[i, jo] - states[i, col]
                s += r * r
            if not np.isfinite(s):
                good = False
                break
            rss[m, jo] = s
        ok[m] = good
    return rss, ok


def solve(model, theta_ode, x0, times, cfg: SolverConfig = SolverConfig()) -> Trajectory:
    """Integrate `model` from t=0 and sample the solution at `times`."""
    theta_ode = np.ascontiguousarray(theta_ode, dtype=np.float64)
    x0 = np.ascontiguousarray(x0, dtype=np.float64)
    times = np.ascontiguousarray(times, dtype=np.float64)
    if x0.shape != (model.dim,):
        raise ValueError(f"x0 must have length {model.dim}")
    if theta_ode.shape != (model.n_params,):
        raise ValueError(f"theta_ode must have length {model.n_params}")
    if times.ndim != 1 or times.size == 0:
        raise ValueError("times must be a nonempty 1-d array")
    if times[0] < 0.0:
        raise ValueError("times must start at or after t=0")
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")

    h0, hmin = cfg.steps_for(float(times[-1]))
    states = np.empty((times.size, model.dim))
    rows, code = _integrate(
        model.rhs, theta_ode, model.constants, x0, times,
        cfg.rel_tol, cfg.abs_tol, cfg.max_steps, h0, hmin,
        cfg.solution_bound, states,
    )
    if code == OK and rows == times.size:
        return Trajectory(times=times, states=states, status=SolveStatus(ok=True))
    t_fail = float(times[rows]) if rows < times.size else float(times[-1])
    return Trajectory(
        times=times[:rows],
        states=states[:rows],
        status=SolveStatus(ok=False, reason=_FAIL_REASONS[code], t_fail=t_fail),
    )


def batch_residual_ss(model, theta_ode, x0s, dataset, cfg: SolverConfig):
    """Residual sums of squares for M parameter draws against one dataset.

    Parameters are (M, P) and (M, J) arrays; returns ``(rss, ok)`` where
    ``rss`` is (M, n_obs) and ``ok`` marks particles whose solve succeeded.
    """
    theta_ode = np.ascontiguousarray(theta_ode, dtype=np.float64)
    x0s = np.ascontiguousarray(x0s, dtype=np.float64)
    h0, hmin = cfg.steps_for(float(dataset.times[-1]))
    obs_idx = np.asarray(model.obs_mask, dtype=np.int64)
    return _batch_rss(
        model.rhs, theta_ode, x0s, model.constants,
        np.ascontiguousarray(dataset.times, dtype=np.float64),
        np.ascontiguousarray(dataset.y, dtype=np.float64),
        obs_idx, cfg.rel_tol, cfg.abs_tol, cfg.max_steps, h0, hmin,
        cfg.solution_bound,
    )


def solve_rk4(model, theta_ode, x0, times, n_substeps: int = 20) -> Trajectory:
    """Fixed-step classical RK4 between output points; profiling fallback."""
    theta_ode = np.asarray(theta_ode, dtype=np.float64)
    x = np.asarray(x0, dtype=np.float64).copy()
    times = np.asarray(times, dtype=np.float64)
    consts = model.constants
    states = np.empty((times.size, model.dim))
    k = np.empty(model.dim)
    t = 0.0

    def f(tt, xx):
        status = model.rhs(tt, xx, theta_ode, consts, k)
        if status != 0:
            raise FloatingPointError
        return k.copy()

    try:
        for i, t_next in enumerate(times):
            nsub = max(1, int(n_substeps))
            h = (t_next - t) / nsub if t_next > t else 0.0
            for _ in range(nsub if h > 0 else 0):
                k1 = f(t, x)
                k2 = f(t + h / 2, x + h / 2 * k1)
                k3 = f(t + h / 2, x + h / 2 * k2)
                k4 = f(t + h, x + h * k3)
                x = x + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
                t += h
            t = t_next
            states[i] = x
    except FloatingPointError:
        return Trajectory(
            times=times[:i], states=states[:i],
            status=SolveStatus(ok=False, reason="non-finite rhs", t_fail=float(t_next)),
        )
    return Trajectory(times=times, states=states, status=SolveStatus(ok=True))
