"""Experiment configuration files.

A config is a single YAML document with four blocks (problem, scheduler,
run, output) plus an optional sweep block; annotated examples live in the
repository's ``configs/`` directory. Parsing validates every key against
the owning module before any computation starts, and serialization round
trips: parse(serialize(parse(text))) == parse(text).
"""

from __future__ import annotations

import types as _types
import typing
from dataclasses import asdict, dataclass, field

import yaml

from .errors import ConfigurationError
from .problems import PROBLEM_KINDS, FiniteSumProblem, make_problem
from .schedulers import SchedulerState, make_scheduler


@dataclass(frozen=True)
class ProblemSpec:
    kind: str
    n: int
    d: int
    seed: int = 0
    noise: float = 0.5
    ridge: float = 0.1  # logistic only
    hidden: int = 4  # tiny_mlp only
    signal: float = 1.0  # planted-teacher scale
    isotropic: bool = False  # quadratic only: orthonormalized features


@dataclass(frozen=True)
class SchedulerSpec:
    kind: str
    batch0: int
    lr0: float
    stages: int = 1
    eps0: float | None = None
    batch_increment: int | None = None
    batch_factor: float | None = None
    lr_factor: float | None = None
    interval: int | None = None
    t_max: int | None = None
    lr_min: float = 0.0


@dataclass(frozen=True)
class RunSpec:
    max_steps: int
    seeds: tuple[int, ...]
    check_interval: int = 1
    stop_eps: float | None = None


@dataclass(frozen=True)
class OutputSpec:
    directory: str = "out"
    emit_all_steps: bool = False


@dataclass(frozen=True)
class SweepSpec:
    batches: tuple[int, ...] = ()


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemSpec
    scheduler: SchedulerSpec
    run: RunSpec
    output: OutputSpec = field(default_factory=OutputSpec)
    sweep: SweepSpec = field(default_factory=SweepSpec)


def _coerce_scalar(section: str, key: str, value, annotation):
    """Check a scalar config value against the field's annotation.

    Integers are accepted for float fields, and strings that parse as
    floats are too (YAML reads dot-less scientific notation such as
    ``1e-10`` as a string). Everything else must match exactly.
    """
    if typing.get_origin(annotation) in (typing.Union, _types.UnionType):
        allowed = typing.get_args(annotation)
    else:
        allowed = (annotation,)
    if value is None:
        if type(None) in allowed:
            return None
        raise ConfigurationError(f"{section}.{key}: must not be null")
    concrete = [a for a in allowed if a is not type(None)]
    if any(typing.get_origin(a) is tuple for a in concrete):
        return value  # sequence fields are normalized by the caller
    if float in concrete:
        if isinstance(value, bool):
            raise ConfigurationError(f"{section}.{key}: expected a number")
        if isinstance(value, (int, float)):
            return float(value)
        if isinstance(value, str):
            try:
                return float(value)
            except ValueError:
                pass
        raise ConfigurationError(f"{section}.{key}: expected a number, got {value!r}")
    if bool in concrete:
        if not isinstance(value, bool):
            raise ConfigurationError(f"{section}.{key}: expected true/false")
        return value
    if int in concrete:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(
                f"{section}.{key}: expected an integer, got {value!r}"
            )
        return value
    if str in concrete and not isinstance(value, str):
        raise ConfigurationError(f"{section}.{key}: expected a string, got {value!r}")
    return value


def _build_section(cls, name: str, data) -> object:
    if not isinstance(data, dict):
        raise ConfigurationError(f"{name}: expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    unknown = set(data) - set(hints)
    if unknown:
        raise ConfigurationError(f"{name}: unknown keys {sorted(unknown)}")
    cleaned = {
        key: _coerce_scalar(name, key, value, hints[key])
        for key, value in data.items()
    }
    try:
        return cls(**cleaned)
    except TypeError as exc:
        raise ConfigurationError(f"{name}: {exc}") from None


def parse_config(data: dict) -> ExperimentConfig:
    """Build an ExperimentConfig from a parsed YAML mapping and validate it."""
    if not isinstance(data, dict):
        raise ConfigurationError("config root must be a mapping")
    unknown = set(data) - {"problem", "scheduler", "run", "output", "sweep"}
    if unknown:
        raise ConfigurationError(f"unknown top-level sections {sorted(unknown)}")
    for required in ("problem", "scheduler", "run"):
        if required not in data:
            raise ConfigurationError(f"missing required section {required!r}")

    problem = _build_section(ProblemSpec, "problem", data["problem"])
    scheduler = _build_section(SchedulerSpec, "scheduler", data["scheduler"])

    run_data = dict(data["run"]) if isinstance(data["run"], dict) else data["run"]
    if isinstance(run_data, dict) and "seeds" in run_data:
        seeds = run_data["seeds"]
        if not isinstance(seeds, (list, tuple)) or not seeds:
            raise ConfigurationError("run.seeds must be a nonempty list of integers")
        if not all(isinstance(s, int) for s in seeds):
            raise ConfigurationError("run.seeds must be integers")
        run_data["seeds"] = tuple(seeds)
    run = _build_section(RunSpec, "run", run_data)

    output = (
        _build_section(OutputSpec, "output", data["output"])
        if "output" in data
        else OutputSpec()
    )
    sweep_data = data.get("sweep", {})
    if isinstance(sweep_data, dict) and "batches" in sweep_data:
        sweep_data = dict(sweep_data)
        sweep_data["batches"] = tuple(int(b) for b in sweep_data["batches"])
    sweep = _build_section(SweepSpec, "sweep", sweep_data)

    config = ExperimentConfig(
        problem=problem, scheduler=scheduler, run=run, output=output, sweep=sweep
    )
    validate_config(config)
    return config


def validate_config(config: ExperimentConfig) -> None:
    """Check each block against its owning module's constraints."""
    p = config.problem
    if p.kind not in PROBLEM_KINDS:
        raise ConfigurationError(
            f"problem.kind: {p.kind!r} not one of {PROBLEM_KINDS}"
        )
    if p.n < 1 or p.d < 1:
        raise ConfigurationError("problem.n and problem.d must be positive")
    if p.noise < 0 or p.signal < 0:
        raise ConfigurationError("problem.noise and problem.signal must be nonnegative")
    if p.isotropic and p.kind != "quadratic":
        raise ConfigurationError("problem.isotropic applies to the quadratic kind only")
    if p.isotropic and p.n < p.d:
        raise ConfigurationError("problem.isotropic needs n >= d")
    # scheduler parameters are checked by the scheduler module itself
    build_scheduler(config)
    r = config.run
    if r.max_steps < 1:
        raise ConfigurationError("run.max_steps must be at least 1")
    if r.check_interval < 1:
        raise ConfigurationError("run.check_interval must be at least 1")
    if r.stop_eps is not None and r.stop_eps < 0:
        raise ConfigurationError("run.stop_eps must be nonnegative")
    if not r.seeds:
        raise ConfigurationError("run.seeds must be a nonempty list")


def loads_config(text: str) -> ExperimentConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"config is not valid YAML: {exc}") from None
    return parse_config(data)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    return loads_config(text)


def _clean(value):
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items() if v is not None}
    if isinstance(value, tuple):
        return [_clean(v) for v in value]
    return value


def serialize_config(config: ExperimentConfig) -> str:
    """YAML text whose parse is semantically equal to the input config."""
    data = _clean(asdict(config))
    if not data.get("sweep", {}).get("batches"):
        data.pop("sweep", None)
    return yaml.safe_dump(data, sort_keys=True)


def build_problem(config: ExperimentConfig) -> FiniteSumProblem:
    p = config.problem
    return make_problem(
        kind=p.kind,
        n=p.n,
        d=p.d,
        seed=p.seed,
        noise=p.noise,
        ridge=p.ridge,
        hidden=p.hidden,
        signal=p.signal,
        isotropic=p.isotropic,
    )


def build_scheduler(
    config: ExperimentConfig,
    n_cap: int | None = None,
    lipschitz: float | None = None,
) -> SchedulerState:
    s = config.scheduler
    params = {k: v for k, v in asdict(s).items() if k != "kind" and v is not None}
    if s.kind not in ("cosine_lr",):
        params.pop("lr_min", None)
    return make_scheduler(s.kind, n_cap=n_cap, lipschitz=lipschitz, **params)
