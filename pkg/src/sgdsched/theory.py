"""Closed-form convergence bounds and sample-complexity curves.

For learning rates eta_t in (0, 2/L) the minimum expected full-gradient norm
over the first T iterates is bounded by sqrt(bias + variance) with

    bias     = 2 (f(theta_0) - f_min) / (2 - L eta_max) / sum_t eta_t,
    variance = L sigma^2 / (2 - L eta_max) * sum_t (eta_t^2 / b_t) / sum_t eta_t.

With a constant step and batch these reduce to bias_coeff/T and
variance_coeff/b, and requiring the bound to reach a precision eps yields the
step count T(b) = bias_coeff * b / (eps^2 b - variance_coeff), the per-sample
oracle cost N(b) = b T(b), and its unique minimizer, the critical batch size
b* = 2 * variance_coeff / eps^2. :func:`empirical_cbs` measures the same
curve by direct experiment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .engine import RunConfig, run_many
from .errors import ConfigurationError, DomainError, PrecisionUnreachableError
from .problems import FiniteSumProblem, TheoryConstants, estimate_constants
from .schedulers import make_scheduler


def _check_lrs(constants: TheoryConstants, lrs: list) -> float:
    if not lrs:
        raise DomainError("learning-rate list is empty")
    lr_max = max(lrs)
    if min(lrs) <= 0:
        raise DomainError("learning rates must be positive")
    if lr_max >= 2.0 / constants.lipschitz:
        raise DomainError(
            f"max learning rate {lr_max} violates lr < 2/lipschitz "
            f"({2.0 / constants.lipschitz})"
        )
    return lr_max


def bound_bias_term(constants: TheoryConstants, lrs) -> float:
    """Initial-gap contribution 2*(f0 - fmin) / ((2 - L*lr_max) * sum lrs)."""
    lrs = list(lrs)
    lr_max = _check_lrs(constants, lrs)
    gap = max(constants.initial_loss - constants.min_loss, 0.0)
    return 2.0 * gap / ((2.0 - constants.lipschitz * lr_max) * sum(lrs))


def bound_variance_term(constants: TheoryConstants, lrs, batch_sizes) -> float:
    """Sampling-noise contribution of the squared-norm bound."""
    lrs = list(lrs)
    batch_sizes = list(batch_sizes)
    if len(lrs) != len(batch_sizes):
        raise DomainError(
            f"got {len(lrs)} learning rates but {len(batch_sizes)} batch sizes"
        )
    lr_max = _check_lrs(constants, lrs)
    if min(batch_sizes) < 1:
        raise DomainError("batch sizes must be positive")
    weighted = sum(lr * lr / b for lr, b in zip(lrs, batch_sizes))
    prefactor = constants.lipschitz * constants.grad_variance / (
        2.0 - constants.lipschitz * lr_max
    )
    return prefactor * weighted / sum(lrs)


def combined_bound(constants: TheoryConstants, lrs, batch_sizes) -> float:
    """sqrt(bias + variance): bounds the min expected gradient norm."""
    lrs = list(lrs)
    batch_sizes = list(batch_sizes)
    return math.sqrt(
        bound_bias_term(constants, lrs)
        + bound_variance_term(constants, lrs, batch_sizes)
    )


def variance_floor(constants: TheoryConstants, eps: float) -> float:
    """Batch sizes at or below variance_coeff/eps^2 can never certify eps."""
    if eps <= 0:
        raise DomainError("eps must be positive")
    return constants.variance_coeff / (eps * eps)


def min_feasible_batch(constants: TheoryConstants, eps: float) -> int:
    """Smallest integer batch the closed forms accept: ceil(floor)+1.

    One above the pole keeps the expressions away from the singularity.
    """
    return math.ceil(variance_floor(constants, eps)) + 1


def _check_batch(constants: TheoryConstants, eps: float, b: int) -> None:
    if b < min_feasible_batch(constants, eps):
        raise DomainError(
            f"batch {b} below variance floor: need b >= "
            f"{min_feasible_batch(constants, eps)} for eps={eps}"
        )


def steps_to_precision(constants: TheoryConstants, eps: float, b: int) -> float:
    """Steps after which the constant-schedule bound reaches eps."""
    _check_batch(constants, eps, b)
    return constants.bias_coeff * b / (eps * eps * b - constants.variance_coeff)


def sfo_complexity(constants: TheoryConstants, eps: float, b: int) -> float:
    """Per-sample gradient evaluations to certify eps: N(b) = b * T(b)."""
    _check_batch(constants, eps, b)
    return constants.bias_coeff * b * b / (eps * eps * b - constants.variance_coeff)


def critical_batch_size(constants: TheoryConstants, eps: float) -> float:
    """The batch size minimizing N(b): 2*variance_coeff/eps^2.

    Zero gradient variance gives 0; callers treat values below 1 as "any
    batch works".
    """
    if eps <= 0:
        raise DomainError("eps must be positive")
    return 2.0 * constants.variance_coeff / (eps * eps)


@dataclass(frozen=True)
class SfoPoint:
    """Measured cost of reaching the precision target at one batch size."""

    b: int
    sfo_mean: float
    sfo_min: float
    sfo_max: float
    censored: bool  # some seed exhausted its budget; mean is a lower bound


@dataclass(frozen=True)
class SfoCurve:
    eps: float
    constants: TheoryConstants
    samples: tuple[tuple[int, float], ...]  # analytic (b, N(b)) where defined
    points: tuple[SfoPoint, ...]  # measured, one per grid batch size
    b_star_analytic: float
    b_star_empirical: int | None


def empirical_cbs(
    problem: FiniteSumProblem,
    theta0,
    lr: float,
    eps: float,
    batch_grid,
    seeds,
    max_steps: int,
    constants: TheoryConstants | None = None,
    max_workers: int | None = None,
) -> SfoCurve:
    """Measure first-hit oracle cost versus batch size.

    For every batch size in the grid, constant-(b, lr) runs are executed for
    each seed with the full gradient norm checked every step; the cost of a
    hit at step t is b*t (the samples consumed producing the hitting
    iterate). Runs that never hit are censored at b*max_steps, kept in the
    curve as lower bounds, and excluded from the argmin.
    """
    batch_grid = sorted(set(int(b) for b in batch_grid))
    seeds = list(seeds)
    if not batch_grid:
        raise ConfigurationError("batch grid is empty")
    if not seeds:
        raise ConfigurationError("seed list is empty")
    if eps <= 0:
        raise ConfigurationError("eps must be positive")
    if batch_grid[0] < 1:
        raise ConfigurationError("batch sizes must be positive")
    if batch_grid[-1] > problem.n:
        raise ConfigurationError(
            f"batch grid entry {batch_grid[-1]} exceeds dataset size {problem.n}"
        )
    if constants is None:
        constants = estimate_constants(problem, theta0, lr, seed=seeds[0])

    tasks = []
    for b in batch_grid:
        sched = make_scheduler("constant", batch0=b, lr0=lr, n_cap=problem.n)
        for seed in seeds:
            tasks.append(
                (
                    theta0,
                    sched,
                    RunConfig(max_steps=max_steps, seed=seed, stop_eps=eps),
                )
            )
    traces = run_many(problem, tasks, max_workers=max_workers)

    points = []
    for i, b in enumerate(batch_grid):
        costs = []
        censored = False
        for j in range(len(seeds)):
            trace = traces[i * len(seeds) + j]
            if trace.hit_step is None:
                censored = True
                costs.append(float(b * max_steps))
            else:
                costs.append(float(b * trace.hit_step))
        points.append(
            SfoPoint(
                b=b,
                sfo_mean=sum(costs) / len(costs),
                sfo_min=min(costs),
                sfo_max=max(costs),
                censored=censored,
            )
        )

    usable = [p for p in points if not p.censored]
    if not usable:
        raise PrecisionUnreachableError(
            f"no batch size reached grad-norm {eps} within {max_steps} steps; "
            f"increase max_steps or relax eps"
        )
    b_star_empirical = min(usable, key=lambda p: (p.sfo_mean, p.b)).b

    feasible = min_feasible_batch(constants, eps)
    samples = tuple(
        (b, sfo_complexity(constants, eps, b)) for b in batch_grid if b >= feasible
    )
    return SfoCurve(
        eps=eps,
        constants=constants,
        samples=samples,
        points=tuple(points),
        b_star_analytic=critical_batch_size(constants, eps),
        b_star_empirical=b_star_empirical,
    )


SFO_CSV_HEADER = ("b", "sfo_mean", "sfo_min", "sfo_max", "censored")


def write_sfo_csv(curve: SfoCurve, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SFO_CSV_HEADER)
        for p in curve.points:
            writer.writerow(
                [
                    p.b,
                    repr(p.sfo_mean),
                    repr(p.sfo_min),
                    repr(p.sfo_max),
                    "true" if p.censored else "false",
                ]
            )


def curve_summary(curve: SfoCurve) -> dict:
    """JSON-shaped summary of a sweep."""
    return {
        "eps": curve.eps,
        "b_star_analytic": curve.b_star_analytic,
        "b_star_empirical": curve.b_star_empirical,
        "variance_floor": variance_floor(curve.constants, curve.eps),
        "lipschitz": curve.constants.lipschitz,
        "grad_variance": curve.constants.grad_variance,
        "bias_coeff": curve.constants.bias_coeff,
        "variance_coeff": curve.constants.variance_coeff,
        "batch_grid": [p.b for p in curve.points],
        "censored": [p.censored for p in curve.points],
        "sfo_mean": [p.sfo_mean for p in curve.points],
        "analytic_curve": [[b, value] for b, value in curve.samples],
    }
