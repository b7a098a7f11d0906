"""Built-in ODE systems and the model descriptor they share.

Each model's right-hand side is a numba-compiled function with the uniform
signature ``rhs(t, x, p, c, out) -> status`` where ``p`` are the free ODE
parameters, ``c`` the fixed experimental constants, and ``out`` receives
dx/dt.  A nonzero status flags a numeric failure (pole proximity); callers
translate it into a failed solve rather than an exception.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from numba import njit

# Denominators smaller than this are treated as poles.
POLE_EPS = 1e-12


@dataclass(frozen=True)
class ModelSpec:
    """Descriptor of an ODE system.

    Attributes
    ----------
    name : str
        Registry identifier.
    dim : int
        Number of state components J.
    param_names : tuple of str
        Names of the P free ODE parameters, in rhs order.
    rhs : callable
        Compiled ``rhs(t, x, p, c, out) -> int`` evaluator.
    obs_mask : tuple of int
        Zero-based indices of the observed state components (nonempty).
    ic_estimated : tuple of bool
        Per-component flag: is this initial condition estimated?
    ic_fixed : tuple of float
        Default value for each initial condition; used for components whose
        flag is False (and as simulation truth defaults).
    fixed_constants : dict
        Named scalars that are experimental settings, never estimated.
    """

    name: str
    dim: int
    param_names: tuple
    rhs: Callable
    obs_mask: tuple
    ic_estimated: tuple
    ic_fixed: tuple
    fixed_constants: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.obs_mask:
            raise ValueError("obs_mask must be nonempty")
        if any(j < 0 or j >= self.dim for j in self.obs_mask):
            raise ValueError("obs_mask indices outside state range")
        if len(self.ic_estimated) != self.dim or len(self.ic_fixed) != self.dim:
            raise ValueError("initial-condition specs must have length dim")

    @property
    def n_params(self) -> int:
        return len(self.param_names)

    @property
    def n_obs_components(self) -> int:
        return len(self.obs_mask)

    @property
    def constants(self) -> np.ndarray:
        """Fixed constants as an array, in declaration order."""
        return np.asarray(list(self.fixed_constants.values()), dtype=np.float64)

    @property
    def n_estimated_ic(self) -> int:
        return int(sum(self.ic_estimated))

    def with_ic_mode(self, estimated) -> "ModelSpec":
        """Copy of this model with a different per-component ic flag."""
        estimated = tuple(bool(e) for e in estimated)
        if len(estimated) != self.dim:
            raise ValueError("ic flag length must equal dim")
        return replace(self, ic_estimated=estimated)


def eval_rhs(model: ModelSpec, t: float, x, theta_ode) -> np.ndarray:
    """Evaluate dx/dt; entries are NaN on a numeric failure (pole)."""
    x = np.asarray(x, dtype=np.float64)
    theta_ode = np.asarray(theta_ode, dtype=np.float64)
    if x.shape != (model.dim,):
        raise ValueError(f"state must have length {model.dim}")
    if theta_ode.shape != (model.n_params,):
        raise ValueError(f"theta_ode must have length {model.n_params}")
    out = np.empty(model.dim)
    status = model.rhs(t, x, theta_ode, model.constants, out)
    if status != 0 or not np.all(np.isfinite(out)):
        out[:] = np.nan
    return out


@njit(cache=True)
def _scenario_rhs(t, x, p, c, out):
    den = 36.0 + x[1]
    if abs(den) < POLE_EPS:
        return 1
    out[0] = 72.0 / den - p[0]
    out[1] = p[1] * x[0] - 1.0
    return 0


@njit(cache=True)
def _scenario_abs_rhs(t, x, p, c, out):
    den = 36.0 + x[1]
    if abs(den) < POLE_EPS:
        return 1
    out[0] = 72.0 / den - abs(p[0])
    out[1] = p[1] * x[0] - 1.0
    return 0


@njit(cache=True)
def _prey_predator_rhs(t, x, p, c, out):
    # states: N (nitrogen), C (Chlorella), R (reproducing Brachionus),
    # B (total Brachionus); p = (b_C, b_B, k_C, k_B, eps, alpha, m)
    N, C, R, B = x[0], x[1], x[2], x[3]
    b_c, b_b, k_c, k_b, eps, alpha, m = p[0], p[1], p[2], p[3], p[4], p[5], p[6]
    delta, nstar = c[0], c[1]
    den_c = k_c + N
    den_b = k_b + C
    if abs(den_c) < POLE_EPS or abs(den_b) < POLE_EPS or abs(eps) < POLE_EPS:
        return 1
    f_c = b_c * N / den_c
    f_b = b_b * C / den_b
    out[0] = delta * (nstar - N) - f_c * C
    out[1] = f_c * C - f_b * B / eps - delta * C
    out[2] = f_b * R - (delta + alpha + m) * R
    out[3] = f_b * R - (delta + m) * B
    return 0


@njit(cache=True)
def _linear_decay_rhs(t, x, p, c, out):
    out[0] = -x[0]
    return 0


SCENARIO1 = ModelSpec(
    name="scenario1",
    dim=2,
    param_names=("theta1", "theta2"),
    rhs=_scenario_rhs,
    obs_mask=(0, 1),
    ic_estimated=(True, True),
    ic_fixed=(7.0, -10.0),
)

SCENARIO2 = ModelSpec(
    name="scenario2",
    dim=2,
    param_names=("theta1", "theta2"),
    rhs=_scenario_abs_rhs,
    obs_mask=(0, 1),
    ic_estimated=(True, True),
    ic_fixed=(7.0, -10.0),
)

# Chemostat settings are known experimental dials, not estimands.
PREY_PREDATOR = ModelSpec(
    name="prey_predator",
    dim=4,
    param_names=("b_C", "b_B", "k_C", "k_B", "epsilon", "alpha", "m"),
    rhs=_prey_predator_rhs,
    obs_mask=(1, 3),
    ic_estimated=(False, False, False, False),
    ic_fixed=(16.0, 20.0, 8.0, 8.0),
    fixed_constants={"delta": 0.68, "N_star": 80.0},
)

LINEAR_DECAY = ModelSpec(
    name="linear_decay",
    dim=1,
    param_names=(),
    rhs=_linear_decay_rhs,
    obs_mask=(0,),
    ic_estimated=(False,),
    ic_fixed=(1.0,),
)

_REGISTRY = {
    m.name: m for m in (SCENARIO1, SCENARIO2, PREY_PREDATOR, LINEAR_DECAY)
}


def model_names() -> list:
    return sorted(_REGISTRY)


def get_model(name: str, estimate_ic=None) -> ModelSpec:
    """Look up a built-in model, optionally overriding which ICs are estimated."""
    try:
        model = _REGISTRY[name]
    except KeyError:
        raise KeyError(
            f"unknown model {name!r}; available: {', '.join(model_names())}"
        ) from None
    if estimate_ic is not None:
        model = model.with_ic_mode(estimate_ic)
    return model


def register_model(model: ModelSpec) -> None:
    """Add a custom model to the registry (compile-time, not scripted)."""
    if model.name in _REGISTRY:
        raise ValueError(f"model {model.name!r} already registered")
    _REGISTRY[model.name] = model
