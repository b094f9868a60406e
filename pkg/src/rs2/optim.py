"""Mini-batch SGD, accelerated (three-iterate) SGD and step-size schedules."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from rs2.core import ConfigError, NumericError

LR_KINDS = ("constant", "cosine_full", "cosine_r_scaled", "naive_early_stop", "inverse_t")


@dataclass(frozen=True)
class LrSchedule:
    """Step size as a pure function of the 1-based global step.

    ``total_full_steps`` is the full-data budget ``T * X``. The r-scaled
    cosine finishes its decay after ``scaled_steps`` steps, which defaults to
    ``floor(r * total_full_steps)``; the harness overrides it with the exact
    number of steps a run will take. ``inverse_t`` uses ``eta0 / step``.
    """

    kind: str
    eta0: float
    total_full_steps: int = 1
    r: float = 1.0
    eta_min: float = 0.0
    scaled_steps: int | None = None

    def __post_init__(self):
        if self.kind not in LR_KINDS:
            raise ConfigError(f"unknown learning-rate schedule {self.kind!r}")
        if self.eta0 < 0 or self.eta_min < 0 or self.eta_min > self.eta0:
            raise ConfigError("need 0 <= eta_min <= eta0")
        if self.total_full_steps < 1:
            raise ConfigError("total_full_steps must be >= 1")
        if not 0.0 < self.r <= 1.0:
            raise ConfigError("r must be in (0, 1]")

    @property
    def horizon(self) -> int:
        if self.kind == "cosine_r_scaled":
            if self.scaled_steps is not None:
                return max(1, int(self.scaled_steps))
            return max(1, int(math.floor(self.r * self.total_full_steps + 1e-9)))
        return self.total_full_steps


def _cosine(eta0: float, eta_min: float, step: int, horizon: int) -> float:
    if horizon <= 1:
        return eta0
    step = min(step, horizon)
    return eta_min + 0.5 * (eta0 - eta_min) * (1.0 + math.cos(math.pi * (step - 1) / (horizon - 1)))


def lr_at(schedule: LrSchedule, step: int) -> float:
    if step < 1:
        raise ValueError("steps are 1-based")
    kind = schedule.kind
    if kind == "constant":
        return schedule.eta0
    if kind == "inverse_t":
        return schedule.eta0 / step
    # naive early stop is the full schedule read at the raw step; it only
    # differs from cosine_full in how far a pruned run gets along it
    return _cosine(schedule.eta0, schedule.eta_min, step, schedule.horizon)


@dataclass(frozen=True)
class OptimizerState:
    w: np.ndarray
    w_ag: np.ndarray
    w_md: np.ndarray
    velocity: np.ndarray
    t: int = 1

    @classmethod
    def init(cls, w0) -> "OptimizerState":
        w = np.array(w0, dtype=np.float64, copy=True)
        return cls(w=w, w_ag=w.copy(), w_md=w.copy(), velocity=np.zeros_like(w), t=1)


def _finite_or_raise(grad: np.ndarray, what: str = "gradient"):
    if not np.all(np.isfinite(grad)):
        bad = int(np.flatnonzero(~np.isfinite(grad))[0])
        raise NumericError(f"non-finite {what} at coordinate {bad}")


def sgd_step(state: OptimizerState, grad, lr: float, momentum: float = 0.0) -> OptimizerState:
    """Heavy-ball SGD: ``v = m*v + g``; ``w = w - lr*v``."""
    grad = np.asarray(grad, dtype=np.float64)
    _finite_or_raise(grad)
    if momentum == 0.0:
        velocity = grad.copy()
    else:
        velocity = momentum * state.velocity + grad
    with np.errstate(over="ignore", invalid="ignore"):
        w = state.w - lr * velocity
    _finite_or_raise(w, "weights")
    return replace(state, w=w, w_ag=w, w_md=w, velocity=velocity, t=state.t + 1)


@dataclass(frozen=True)
class AcceleratedParams:
    """Step sequences for the three-iterate accelerated update.

    ``alpha``, ``beta`` and ``lam`` map the 1-based step to a value. With
    ``check_lambda`` set, each step verifies ``beta_t <= lam_t <= (1 +
    alpha_t/4) * beta_t`` (the nonconvex setting); the convex
    parameterization runs with it off.
    """

    alpha: Callable[[int], float]
    beta: Callable[[int], float]
    lam: Callable[[int], float]
    D_tilde: float | None = None
    beta_smooth: float | None = None
    sigma: float | None = None
    check_lambda: bool = True


def _two_over(t: int) -> float:
    return 2.0 / (t + 1)


def accelerated_params(
    beta_smooth: float,
    sigma: float,
    r: float,
    T: int,
    X: int,
    D_tilde: float,
    convex: bool = False,
) -> AcceleratedParams:
    """Constant-step parameterization used for the accelerated rate.

    Nonconvex: ``alpha_t = 2/(t+1)``, ``beta_t = min(8/(21 beta), D/(sigma
    sqrt(rTX)))`` and ``lam_t = beta_t``. Convex: ``beta_t = min(1/(2 beta),
    (D^2 / (beta^2 sigma^2 (rTX)^3))^(1/4))`` and ``lam_t = t beta beta_t^2 / 2``.
    """
    if beta_smooth <= 0 or sigma < 0 or D_tilde <= 0:
        raise ValueError("need beta > 0, sigma >= 0, D_tilde > 0")
    n_steps = r * T * X
    if n_steps <= 0:
        raise ValueError("r*T*X must be positive")
    if convex:
        cap = 1.0 / (2.0 * beta_smooth)
        if sigma == 0:
            step = cap
        else:
            step = min(cap, (D_tilde**2 / (beta_smooth**2 * sigma**2 * n_steps**3)) ** 0.25)
        return AcceleratedParams(
            alpha=_two_over,
            beta=lambda t: step,
            lam=lambda t: t * beta_smooth * step * step / 2.0,
            D_tilde=D_tilde,
            beta_smooth=beta_smooth,
            sigma=sigma,
            check_lambda=False,
        )
    cap = 8.0 / (21.0 * beta_smooth)
    step = cap if sigma == 0 else min(cap, D_tilde / (sigma * math.sqrt(n_steps)))
    return AcceleratedParams(
        alpha=_two_over,
        beta=lambda t: step,
        lam=lambda t: step,
        D_tilde=D_tilde,
        beta_smooth=beta_smooth,
        sigma=sigma,
    )


def compute_md_point(state: OptimizerState, params: AcceleratedParams) -> OptimizerState:
    """Phase one: place the middle iterate where the gradient must be taken."""
    a = params.alpha(state.t)
    if a == 1.0:
        w_md = state.w.copy()
    else:
        w_md = (1.0 - a) * state.w_ag + a * state.w
    return replace(state, w_md=w_md)


def nesterov_step(state: OptimizerState, grad_at_md, params: AcceleratedParams) -> OptimizerState:
    """Phase two: apply the gradient evaluated at ``state.w_md``."""
    g = np.asarray(grad_at_md, dtype=np.float64)
    _finite_or_raise(g)
    t = state.t
    a, b, lam = params.alpha(t), params.beta(t), params.lam(t)
    if params.check_lambda and not (b <= lam <= (1.0 + a / 4.0) * b):
        raise ConfigError(f"lambda_t={lam} outside [{b}, {(1.0 + a / 4.0) * b}] at step {t}")
    with np.errstate(over="ignore", invalid="ignore"):
        w = state.w - lam * g
        w_ag = state.w_md - b * g
    _finite_or_raise(w, "weights")
    return replace(state, w=w, w_ag=w_ag, t=t + 1)
