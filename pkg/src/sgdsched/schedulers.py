"""Stage-based batch-size / learning-rate schedules.

A schedule is a value object: transitions return new states, never mutate.
The two adaptive kinds advance their stage when the monitored full-gradient
norm drops to or below the stage threshold; each stage m then uses

* ``adaptive_linear``:      b_m = b0 + m*increment, lr constant,
                            eps_m = eps0 / sqrt(1+m);
* ``adaptive_exponential``: b_m = b0 * batch_factor^m (rounded, capped),
                            lr_m = lr0 * lr_factor^m,
                            eps_m = eps0 / sqrt(batch_factor^m),

with ``lr_factor^2 < batch_factor`` required so the variance contribution
keeps shrinking stage over stage. Three step-driven baselines are included:
constant, cosine-annealed learning rate, and fixed-interval growth using the
same factors as the adaptive kinds so comparisons isolate the trigger.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from enum import Enum

from .errors import ConfigurationError, DomainError

ADAPTIVE_KINDS = ("adaptive_linear", "adaptive_exponential")


class SchedulerKind(str, Enum):
    CONSTANT = "constant"
    ADAPTIVE_LINEAR = "adaptive_linear"
    ADAPTIVE_EXPONENTIAL = "adaptive_exponential"
    COSINE_LR = "cosine_lr"
    FIXED_INTERVAL = "fixed_interval"


@dataclass(frozen=True)
class SchedulerState:
    """Immutable schedule state: static parameters plus current stage values.

    ``batch``, ``lr`` and ``eps`` are the values in force for the next step;
    ``cap_bound`` records whether the batch cap has ever clipped a stage.
    """

    kind: SchedulerKind
    batch0: int
    lr0: float
    stages: int = 1
    eps0: float | None = None
    batch_increment: int | None = None  # per-stage additive growth
    batch_factor: float | None = None  # per-stage multiplicative growth
    lr_factor: float | None = None
    interval: int | None = None  # steps between fixed-interval updates
    t_max: int | None = None  # cosine annealing horizon
    lr_min: float = 0.0
    n_cap: int | None = None  # dataset size; batches never exceed it
    stage: int = 0
    batch: int = 0
    lr: float = 0.0
    eps: float = math.inf
    cap_bound: bool = False


def _require(condition: bool, name: str, message: str) -> None:
    if not condition:
        raise ConfigurationError(f"{name}: {message}")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _exponential_batch(state: SchedulerState, m: int) -> tuple[int, bool]:
    """Rounded b0 * factor^m, forced strictly increasing, capped at n_cap."""
    b = min(state.batch0, state.n_cap) if state.n_cap else state.batch0
    capped = state.n_cap is not None and state.batch0 > state.n_cap
    for k in range(1, m + 1):
        raw = max(_round_half_up(state.batch0 * state.batch_factor**k), b + 1)
        if state.n_cap is not None and raw > state.n_cap:
            b = state.n_cap
            capped = True
        else:
            b = raw
    return b, capped


def stage_params(state: SchedulerState, m: int) -> tuple[int, float, float]:
    """(batch, lr, eps) at stage m; stage-driven kinds only vary by m.

    For the step-driven kinds this is the stage's starting value: the cosine
    schedule then moves ``lr`` per step via :func:`on_step`.
    """
    if not 0 <= m < state.stages:
        raise DomainError(f"stage {m} out of range [0, {state.stages})")
    kind = state.kind
    if kind == SchedulerKind.ADAPTIVE_LINEAR:
        b = state.batch0 + m * state.batch_increment
        if state.n_cap is not None:
            b = min(b, state.n_cap)
        return b, state.lr0, state.eps0 / math.sqrt(1.0 + m)
    if kind == SchedulerKind.ADAPTIVE_EXPONENTIAL:
        b, _ = _exponential_batch(state, m)
        lr = state.lr0 * state.lr_factor**m
        eps = state.eps0 / math.sqrt(state.batch_factor**m)
        return b, lr, eps
    if kind == SchedulerKind.FIXED_INTERVAL:
        if state.batch_factor is not None:
            b, _ = _exponential_batch(state, m)
            lr = state.lr0 * (state.lr_factor or 1.0) ** m
        else:
            b = state.batch0 + m * state.batch_increment
            if state.n_cap is not None:
                b = min(b, state.n_cap)
            lr = state.lr0
        return b, lr, math.inf
    # constant and cosine_lr
    b = min(state.batch0, state.n_cap) if state.n_cap else state.batch0
    eps = state.eps0 if state.eps0 is not None else math.inf
    return b, state.lr0, eps


def validate(state: SchedulerState, lipschitz: float | None = None) -> SchedulerState:
    """Check kind-relevant parameters and return the state at its stage.

    Raises :class:`ConfigurationError` naming the offending field. When the
    smoothness constant is supplied and the projected final learning rate
    reaches 2/lipschitz, only a warning is emitted: the run may still be
    worth executing even though the convergence guarantee no longer applies.
    """
    kind = state.kind
    _require(state.stages >= 1, "stages", "must be at least 1")
    _require(state.batch0 >= 1, "batch0", "must be a positive integer")
    _require(state.lr0 > 0, "lr0", "must be positive")
    _require(state.n_cap is None or state.n_cap >= 1, "n_cap", "must be positive")

    if kind.value in ADAPTIVE_KINDS:
        _require(state.eps0 is not None, "eps0", "is required for adaptive kinds")
        _require(state.eps0 > 0, "eps0", "must be positive")
    if kind == SchedulerKind.ADAPTIVE_LINEAR:
        _require(
            state.batch_increment is not None,
            "batch_increment",
            "is required for adaptive_linear",
        )
        _require(state.batch_increment >= 1, "batch_increment", "must be positive")
    exponential_growth = kind == SchedulerKind.ADAPTIVE_EXPONENTIAL or (
        kind == SchedulerKind.FIXED_INTERVAL and state.batch_factor is not None
    )
    if kind == SchedulerKind.ADAPTIVE_EXPONENTIAL:
        _require(
            state.batch_factor is not None,
            "batch_factor",
            "is required for adaptive_exponential",
        )
        _require(
            state.lr_factor is not None,
            "lr_factor",
            "is required for adaptive_exponential",
        )
    if exponential_growth:
        _require(state.batch_factor > 1.0, "batch_factor", "must exceed 1")
        if state.lr_factor is not None:
            _require(state.lr_factor > 1.0, "lr_factor", "must exceed 1")
            _require(
                state.lr_factor**2 < state.batch_factor,
                "lr_factor",
                f"requires lr_factor^2 < batch_factor "
                f"({state.lr_factor}^2 >= {state.batch_factor})",
            )
    if kind == SchedulerKind.FIXED_INTERVAL:
        _require(
            state.interval is not None and state.interval >= 1,
            "interval",
            "must be a positive integer",
        )
        _require(
            state.batch_factor is not None or state.batch_increment is not None,
            "batch_increment",
            "fixed_interval needs batch_increment or batch_factor",
        )
    if kind == SchedulerKind.COSINE_LR:
        _require(
            state.t_max is not None and state.t_max >= 1,
            "t_max",
            "must be a positive integer",
        )
        _require(0.0 <= state.lr_min < state.lr0, "lr_min", "must be in [0, lr0)")

    if lipschitz is not None and state.lr_factor is not None and state.lr_factor > 1:
        final_lr = state.lr0 * state.lr_factor ** (state.stages - 1)
        if final_lr >= 2.0 / lipschitz:
            warnings.warn(
                f"projected final lr {final_lr:.6g} reaches 2/lipschitz "
                f"{2.0 / lipschitz:.6g}; the convergence guarantee does not "
                f"cover the last stages",
                stacklevel=2,
            )
    elif lipschitz is not None and state.lr0 >= 2.0 / lipschitz:
        warnings.warn(
            f"lr0 {state.lr0:.6g} reaches 2/lipschitz {2.0 / lipschitz:.6g}; "
            f"the convergence guarantee does not apply",
            stacklevel=2,
        )

    b, lr, eps = stage_params(state, state.stage)
    return replace(state, batch=b, lr=lr, eps=eps)


def make_scheduler(kind: str | SchedulerKind, **params) -> SchedulerState:
    """Build and validate a scheduler state from keyword parameters."""
    try:
        kind = SchedulerKind(kind)
    except ValueError:
        raise ConfigurationError(
            f"kind: unknown scheduler kind {kind!r}; expected one of "
            f"{[k.value for k in SchedulerKind]}"
        ) from None
    lipschitz = params.pop("lipschitz", None)
    try:
        state = SchedulerState(kind=kind, **params)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from None
    return validate(state, lipschitz=lipschitz)


def on_grad_norm(
    state: SchedulerState, grad_norm: float
) -> tuple[SchedulerState, bool]:
    """Advance one stage when the monitored norm reaches the threshold.

    The comparison is inclusive and at most one stage is taken per call,
    even when the norm undercuts several thresholds at once. Non-adaptive
    kinds and states already at the last stage are returned unchanged.
    """
    if state.kind.value not in ADAPTIVE_KINDS:
        return state, False
    if grad_norm <= state.eps and state.stage < state.stages - 1:
        m = state.stage + 1
        b, lr, eps = stage_params(state, m)
        raw_uncapped = (
            state.batch0 + m * state.batch_increment
            if state.kind == SchedulerKind.ADAPTIVE_LINEAR
            else state.batch0 * state.batch_factor**m
        )
        capped = state.n_cap is not None and raw_uncapped > state.n_cap
        return (
            replace(
                state,
                stage=m,
                batch=b,
                lr=lr,
                eps=eps,
                cap_bound=state.cap_bound or capped,
            ),
            True,
        )
    return state, False


def on_step(state: SchedulerState, t: int) -> SchedulerState:
    """Apply step-count-driven updates; adaptive kinds are unaffected.

    The cosine schedule sets lr(t) = lr_min + (lr0-lr_min)(1+cos(pi t/t_max))/2
    for t in [0, t_max] and stays at lr_min afterwards. Fixed-interval states
    jump to stage floor(t / interval), clipped to the last stage.
    """
    if state.kind == SchedulerKind.COSINE_LR:
        frac = min(t, state.t_max) / state.t_max
        lr = state.lr_min + 0.5 * (state.lr0 - state.lr_min) * (
            1.0 + math.cos(math.pi * frac)
        )
        return replace(state, lr=lr)
    if state.kind == SchedulerKind.FIXED_INTERVAL:
        m = min(t // state.interval, state.stages - 1)
        if m != state.stage:
            b, lr, eps = stage_params(state, m)
            return replace(state, stage=m, batch=b, lr=lr, eps=eps)
    return state
