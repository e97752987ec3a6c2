"""Plain SGD with a recursive Polyak-Ruppert average and optional burn-in."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import DimensionError, Observation, StepSchedule, as_param_vector
from .models import GradientModel


class DivergenceError(FloatingPointError):
    """An iterate became non-finite."""

    def __init__(self, t: int, detail: str = ""):
        self.t = t
        msg = f"SGD diverged at t={t}"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class NoEstimateError(RuntimeError):
    """The average is requested before any post-burn-in iterate exists."""


@dataclass
class SgdState:
    """Iteration state. ``beta``/``beta_bar`` may carry a leading batch axis."""

    t: int
    beta: np.ndarray
    beta_bar: np.ndarray
    burn_in: int = 0
    avg_count: int = 0

    @property
    def d(self) -> int:
        return self.beta.shape[-1]

    @property
    def estimate(self) -> np.ndarray:
        if self.avg_count == 0:
            raise NoEstimateError(f"no averaged iterate yet (t={self.t}, burn_in={self.burn_in})")
        return self.beta_bar

    def copy(self) -> SgdState:
        return SgdState(self.t, self.beta.copy(), self.beta_bar.copy(), self.burn_in, self.avg_count)


def sgd_init(beta0, burn_in: int = 0) -> SgdState:
    beta0 = np.array(beta0, dtype=np.float64)
    if beta0.ndim == 0:
        beta0 = beta0.reshape(1)
    if beta0.ndim == 1:
        beta0 = as_param_vector(beta0, "beta0")
    if burn_in < 0:
        raise ValueError("burn_in must be non-negative")
    return SgdState(0, beta0.copy(), np.zeros_like(beta0), int(burn_in), 0)


def sgd_step(
    state: SgdState,
    model: GradientModel,
    obs: Observation,
    sched: StepSchedule,
    check_finite: bool = True,
) -> SgdState:
    """Consume one observation (per stream) and update ``state`` in place.

    Returns the same object for chaining. The step size uses the global
    clock ``t``; only the average skips the burn-in prefix.
    """
    x = np.asarray(obs.x, dtype=np.float64)
    if x.shape != state.beta.shape:
        raise DimensionError(f"observation shape {x.shape} does not match beta {state.beta.shape}")
    t = state.t + 1
    grad = model.gradient(state.beta, x, obs.y)
    state.beta = state.beta - sched(t) * grad
    state.t = t
    if check_finite and not np.all(np.isfinite(state.beta)):
        raise DivergenceError(t, "non-finite iterate")
    if t > state.burn_in:
        k = state.avg_count + 1
        state.beta_bar = state.beta_bar * ((k - 1) / k) + state.beta / k
        state.avg_count = k
    return state


Hook = Callable[[SgdState, np.ndarray, Observation], None]


def sgd_run(
    stream: Iterable[Observation],
    model: GradientModel,
    sched: StepSchedule,
    beta0,
    burn_in: int = 0,
    hooks: Sequence[Hook] = (),
) -> SgdState:
    """Fold :func:`sgd_step` over ``stream``.

    After every post-burn-in step each hook is called once as
    ``hook(state, beta_prev, obs)``, where ``state.beta`` is the new iterate
    and ``beta_prev`` the iterate the gradient was evaluated at.
    """
    state = sgd_init(beta0, burn_in)
    for obs in stream:
        beta_prev = state.beta
        sgd_step(state, model, obs, sched)
        if state.t > state.burn_in:
            for hook in hooks:
                hook(state, beta_prev, obs)
    return state
