"""Mini-batch SGD with gradient-norm-triggered batch-size/LR schedules.

The package pairs an execution engine for finite-sum objectives with the
closed-form sample-complexity theory of constant-schedule SGD, so schedule
claims can be checked against exact oracles on desk-scale problems.
"""

from .engine import (
    RunConfig,
    RunTrace,
    StepRecord,
    minibatch_grad,
    run,
    run_many,
    sample_batch,
    write_trace_csv,
)
from .errors import (
    ConfigurationError,
    DivergenceError,
    DomainError,
    PrecisionUnreachableError,
)
from .problems import (
    FiniteSumProblem,
    QuadraticLeastSquares,
    RidgeLogistic,
    TheoryConstants,
    TinyMlp,
    estimate_constants,
    gradient_variance,
    make_problem,
)
from .rand import make_rng
from .schedulers import (
    SchedulerKind,
    SchedulerState,
    make_scheduler,
    on_grad_norm,
    on_step,
    stage_params,
    validate,
)
from .theory import (
    SfoCurve,
    SfoPoint,
    bound_bias_term,
    bound_variance_term,
    combined_bound,
    critical_batch_size,
    empirical_cbs,
    min_feasible_batch,
    sfo_complexity,
    steps_to_precision,
    variance_floor,
    write_sfo_csv,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "DivergenceError",
    "DomainError",
    "FiniteSumProblem",
    "PrecisionUnreachableError",
    "QuadraticLeastSquares",
    "RidgeLogistic",
    "RunConfig",
    "RunTrace",
    "SchedulerKind",
    "SchedulerState",
    "SfoCurve",
    "SfoPoint",
    "StepRecord",
    "TheoryConstants",
    "TinyMlp",
    "bound_bias_term",
    "bound_variance_term",
    "combined_bound",
    "critical_batch_size",
    "empirical_cbs",
    "estimate_constants",
    "gradient_variance",
    "make_problem",
    "make_rng",
    "make_scheduler",
    "min_feasible_batch",
    "minibatch_grad",
    "on_grad_norm",
    "on_step",
    "run",
    "run_many",
    "sample_batch",
    "sfo_complexity",
    "stage_params",
    "steps_to_precision",
    "validate",
    "variance_floor",
    "write_sfo_csv",
    "write_trace_csv",
]
