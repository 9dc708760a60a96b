"""Mini-batch SGD execution with exact sample-complexity accounting.

One run is a strictly sequential loop. At the top of step t the engine
knows the iterate theta_t produced by the previous update; on check steps
it evaluates the full gradient norm there, feeds it to the scheduler (which
may advance a stage for the step about to be taken) and tests the early-stop
threshold. It then samples a batch i.i.d. with replacement, applies

    theta_{t+1} = theta_t - lr_t * mean of per-sample gradients over the batch,

and appends a record. Records[t] therefore carries f(theta_t) and, on check
steps, ||grad f(theta_t)||, so the minimum recorded norm over the first T
records is exactly the quantity the constant-step bound controls. Gradient
evaluations spent on monitoring (n per full-gradient check) are metered
separately from the per-sample oracle count and never mixed into it.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DivergenceError
from .problems import FiniteSumProblem
from .rand import make_rng
from .schedulers import SchedulerState, on_grad_norm, on_step

Array = np.ndarray

#: Losses above this abort the run as divergent; a learning rate near the
#: stability limit can oscillate, and we prefer failing loudly.
LOSS_CAP = 1e12

TRACE_CSV_HEADER = ("t", "loss", "grad_norm", "batch_size", "lr", "stage", "sfo_cumulative")


@dataclass(frozen=True)
class RunConfig:
    max_steps: int
    seed: int
    check_interval: int = 1
    stop_eps: float | None = None

    def __post_init__(self):
        if self.max_steps < 1:
            raise ConfigurationError("max_steps must be at least 1")
        if self.check_interval < 1:
            raise ConfigurationError("check_interval must be at least 1")
        if self.stop_eps is not None and self.stop_eps < 0:
            raise ConfigurationError("stop_eps must be nonnegative")


@dataclass(frozen=True)
class StepRecord:
    t: int
    loss: float
    grad_norm: float | None  # only on check steps
    batch_size: int
    lr: float
    stage: int
    sfo_cumulative: int


@dataclass(frozen=True)
class RunTrace:
    records: tuple[StepRecord, ...]
    terminal_theta: Array
    hit_step: int | None  # first check step whose norm reached stop_eps
    monitor_sample_evals: int  # gradient evaluations spent on norm checks
    batch_cap_applied: bool  # a scheduled batch was clipped to n

    @property
    def final_stage(self) -> int:
        return self.records[-1].stage if self.records else 0

    @property
    def total_sfo(self) -> int:
        return self.records[-1].sfo_cumulative if self.records else 0

    def min_grad_norm(self) -> float:
        norms = [r.grad_norm for r in self.records if r.grad_norm is not None]
        if not norms:
            raise ValueError("trace contains no check steps")
        return min(norms)


def sample_batch(problem: FiniteSumProblem, b: int, rng: np.random.Generator) -> Array:
    """Draw b indices i.i.d. uniformly with replacement from [0, n)."""
    if b < 1:
        raise ConfigurationError("batch size must be at least 1")
    return rng.integers(0, problem.n, size=b)


def minibatch_grad(problem: FiniteSumProblem, theta, batch) -> Array:
    """Mean per-sample gradient over the batch (counting multiplicity)."""
    return problem.batch_grad(theta, batch)


def run(
    problem: FiniteSumProblem,
    theta0,
    scheduler: SchedulerState,
    config: RunConfig,
) -> RunTrace:
    """Execute mini-batch SGD under the given (validated) schedule.

    Deterministic: identical inputs, including the seed, reproduce the trace
    bit for bit. Exactly one batch of indices is drawn per step, so a
    scheduler-free reference loop with the same stream matches exactly.
    Raises :class:`DivergenceError`, carrying the partial trace, when a loss,
    gradient, or iterate stops being finite or the loss exceeds LOSS_CAP.
    """
    theta = np.array(theta0, dtype=np.float64)
    if theta.shape != (problem.d,):
        raise ConfigurationError(
            f"theta0 has shape {theta.shape}, expected ({problem.d},)"
        )
    state = scheduler
    rng = make_rng(config.seed)
    records: list[StepRecord] = []
    sfo = 0
    monitor_evals = 0
    cap_applied = False
    hit_step = None

    def diverged(reason: str) -> DivergenceError:
        partial = RunTrace(
            records=tuple(records),
            terminal_theta=theta,
            hit_step=None,
            monitor_sample_evals=monitor_evals,
            batch_cap_applied=cap_applied or state.cap_bound,
        )
        return DivergenceError(f"run diverged at step {len(records)}: {reason}", partial)

    for t in range(config.max_steps):
        state = on_step(state, t)
        loss = problem.loss(theta)
        if not np.isfinite(loss) or loss > LOSS_CAP:
            raise diverged(f"loss {loss!r}")

        grad_norm = None
        stop_now = False
        if t % config.check_interval == 0:
            full = problem.full_grad(theta)
            monitor_evals += problem.n
            if not np.isfinite(full).all():
                raise diverged("non-finite full gradient")
            grad_norm = float(np.linalg.norm(full))
            state, _ = on_grad_norm(state, grad_norm)
            stop_now = config.stop_eps is not None and grad_norm <= config.stop_eps

        b = state.batch
        if b > problem.n:
            b = problem.n
            cap_applied = True
        batch = sample_batch(problem, b, rng)
        theta = theta - state.lr * minibatch_grad(problem, theta, batch)
        if not np.isfinite(theta).all():
            raise diverged("non-finite iterate")
        sfo += b
        records.append(
            StepRecord(
                t=t,
                loss=loss,
                grad_norm=grad_norm,
                batch_size=b,
                lr=state.lr,
                stage=state.stage,
                sfo_cumulative=sfo,
            )
        )
        if stop_now:
            hit_step = t
            break

    return RunTrace(
        records=tuple(records),
        terminal_theta=theta,
        hit_step=hit_step,
        monitor_sample_evals=monitor_evals,
        batch_cap_applied=cap_applied or state.cap_bound,
    )


def run_many(
    problem: FiniteSumProblem,
    tasks,
    max_workers: int | None = None,
) -> list[RunTrace]:
    """Run independent (theta0, scheduler, config) tasks concurrently.

    Results are ordered by input index regardless of completion order. The
    tasks share the immutable problem and nothing else.
    """
    tasks = list(tasks)
    if max_workers is not None and max_workers <= 1:
        return [run(problem, *task) for task in tasks]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(lambda task: run(problem, *task), tasks))


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_trace_csv(trace: RunTrace, path, all_steps: bool = False) -> None:
    """Serialize a trace; by default only check-step rows are emitted.

    With ``all_steps`` every step appears and the grad_norm cell is empty on
    non-check steps. Output is byte-stable for identical traces.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_CSV_HEADER)
        for rec in trace.records:
            if rec.grad_norm is None and not all_steps:
                continue
            writer.writerow(
                [
                    rec.t,
                    _format_cell(rec.loss),
                    _format_cell(rec.grad_norm),
                    rec.batch_size,
                    _format_cell(rec.lr),
                    rec.stage,
                    rec.sfo_cumulative,
                ]
            )


def read_trace_csv(path) -> list[dict]:
    """Parse a trace CSV back into a list of row dicts (strings preserved)."""
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
