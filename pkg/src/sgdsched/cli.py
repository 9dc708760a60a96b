"""Experiment driver.

Three subcommands, each reading a YAML config:

* ``run <config>``      - execute one schedule over the config's seed list,
                          writing one trace CSV per seed plus summary.json;
* ``sweep <config>``    - measure first-hit oracle cost over a batch grid
                          (``--batches`` or the config's sweep block);
* ``compare <config>...`` - run several schedules on one shared problem and
                          rank them by steps and samples to the target norm.

Exit codes: 0 success, 2 configuration error, 3 divergence (partial traces
are flushed first), 4 precision unreachable.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .config import (
    ExperimentConfig,
    build_problem,
    build_scheduler,
    load_config,
    serialize_config,
)
from .engine import RunConfig, RunTrace, run, write_trace_csv
from .errors import ConfigurationError, DivergenceError, PrecisionUnreachableError
from .theory import curve_summary, empirical_cbs, write_sfo_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_UNREACHABLE = 4


def _apply_overrides(config: ExperimentConfig, args) -> ExperimentConfig:
    run_spec = config.run
    if args.seeds is not None:
        run_spec = replace(run_spec, seeds=tuple(args.seeds))
    if args.check_interval is not None:
        run_spec = replace(run_spec, check_interval=args.check_interval)
    output = config.output
    if args.out is not None:
        output = replace(output, directory=args.out)
    return replace(config, run=run_spec, output=output)


def _out_dir(config: ExperimentConfig) -> Path:
    path = Path(config.output.directory)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _trace_summary(trace: RunTrace, seed: int) -> dict:
    return {
        "seed": seed,
        "final_loss": trace.records[-1].loss,
        "min_grad_norm": trace.min_grad_norm(),
        "total_sfo": trace.total_sfo,
        "monitor_sample_evals": trace.monitor_sample_evals,
        "stages_completed": trace.final_stage + 1,
        "stage_batches": _stage_batches(trace),
        "hit_step": trace.hit_step,
        "batch_cap_applied": trace.batch_cap_applied,
    }


def _stage_batches(trace: RunTrace) -> list[int]:
    # first batch size seen in each visited stage; skipped stages are absent
    seen: dict[int, int] = {}
    for rec in trace.records:
        seen.setdefault(rec.stage, rec.batch_size)
    return [seen[stage] for stage in sorted(seen)]


def cmd_run(config: ExperimentConfig) -> int:
    problem = build_problem(config)
    scheduler = build_scheduler(
        config, n_cap=problem.n, lipschitz=problem.analytic_lipschitz
    )
    theta0 = problem.default_theta0()
    out = _out_dir(config)
    summaries = []
    for seed in config.run.seeds:
        run_config = RunConfig(
            max_steps=config.run.max_steps,
            seed=seed,
            check_interval=config.run.check_interval,
            stop_eps=config.run.stop_eps,
        )
        try:
            trace = run(problem, theta0, scheduler, run_config)
        except DivergenceError as exc:
            if exc.trace is not None and exc.trace.records:
                write_trace_csv(
                    exc.trace,
                    out / f"trace_seed{seed}_partial.csv",
                    all_steps=config.output.emit_all_steps,
                )
            print(f"error: seed {seed}: {exc}", file=sys.stderr)
            _write_json(out / "summary.json", {"status": "diverged", "runs": summaries})
            return EXIT_DIVERGED
        write_trace_csv(
            trace,
            out / f"trace_seed{seed}.csv",
            all_steps=config.output.emit_all_steps,
        )
        summaries.append(_trace_summary(trace, seed))
    _write_json(out / "summary.json", {"status": "ok", "runs": summaries})
    (out / "config.yaml").write_text(serialize_config(config))
    return EXIT_OK


def cmd_sweep(config: ExperimentConfig, batches=None) -> int:
    problem = build_problem(config)
    theta0 = problem.default_theta0()
    grid = tuple(batches) if batches else config.sweep.batches
    if not grid:
        raise ConfigurationError(
            "sweep needs a batch grid (--batches or sweep.batches in the config)"
        )
    if config.run.stop_eps is None:
        raise ConfigurationError("sweep needs run.stop_eps as the precision target")
    if config.scheduler.kind != "constant":
        raise ConfigurationError("sweep uses a constant schedule per batch size")
    out = _out_dir(config)
    curve = empirical_cbs(
        problem=problem,
        theta0=theta0,
        lr=config.scheduler.lr0,
        eps=config.run.stop_eps,
        batch_grid=grid,
        seeds=config.run.seeds,
        max_steps=config.run.max_steps,
    )
    write_sfo_csv(curve, out / "sfo_curve.csv")
    _write_json(out / "sfo_summary.json", curve_summary(curve))
    (out / "config.yaml").write_text(serialize_config(config))
    return EXIT_OK


def _median(values) -> float:
    ordered = sorted(values)
    k = len(ordered)
    mid = k // 2
    if k % 2:
        return float(ordered[mid])
    return 0.5 * (ordered[mid - 1] + ordered[mid])


def cmd_compare(configs: list[ExperimentConfig]) -> int:
    if len(configs) < 2:
        raise ConfigurationError("compare needs at least two configs")
    head = configs[0]
    for other in configs[1:]:
        if other.problem != head.problem:
            raise ConfigurationError("compare configs must share one problem")
        if other.run.seeds != head.run.seeds:
            raise ConfigurationError("compare configs must share the seed list")
        if other.run.stop_eps != head.run.stop_eps:
            raise ConfigurationError("compare configs must share run.stop_eps")
    if head.run.stop_eps is None:
        raise ConfigurationError("compare needs run.stop_eps as the shared target")

    problem = build_problem(head)
    theta0 = problem.default_theta0()
    out = _out_dir(head)
    labels = []
    for i, config in enumerate(configs):
        label = config.scheduler.kind
        if label in labels:
            label = f"{label}_{i}"
        labels.append(label)

    rows = []
    stats = []
    for label, config in zip(labels, configs):
        scheduler = build_scheduler(
            config, n_cap=problem.n, lipschitz=problem.analytic_lipschitz
        )
        steps_list, sfo_list = [], []
        for seed in config.run.seeds:
            run_config = RunConfig(
                max_steps=config.run.max_steps,
                seed=seed,
                check_interval=config.run.check_interval,
                stop_eps=config.run.stop_eps,
            )
            trace = run(problem, theta0, scheduler, run_config)
            write_trace_csv(
                trace,
                out / f"trace_{label}_seed{seed}.csv",
                all_steps=config.output.emit_all_steps,
            )
            censored = trace.hit_step is None
            steps = trace.hit_step if not censored else config.run.max_steps
            sfo = (
                trace.records[trace.hit_step].sfo_cumulative
                - trace.records[trace.hit_step].batch_size
                if not censored
                else trace.total_sfo
            )
            steps_list.append(steps)
            sfo_list.append(sfo)
            rows.append((label, seed, steps, sfo, censored))
        stats.append((label, _median(steps_list), _median(sfo_list)))

    with open(out / "comparison.csv", "w", newline="") as fh:
        fh.write("scheduler,seed,steps_to_eps,sfo_to_eps,censored\n")
        for label, seed, steps, sfo, censored in rows:
            fh.write(f"{label},{seed},{steps},{sfo},{'true' if censored else 'false'}\n")

    by_steps = sorted(stats, key=lambda s: (s[1], s[0]))
    by_sfo = sorted(stats, key=lambda s: (s[2], s[0]))
    ranking = {
        "target_eps": head.run.stop_eps,
        "schedulers": [
            {
                "label": label,
                "median_steps_to_eps": med_steps,
                "median_sfo_to_eps": med_sfo,
                "rank_by_steps": next(i for i, s in enumerate(by_steps) if s[0] == label) + 1,
                "rank_by_sfo": next(i for i, s in enumerate(by_sfo) if s[0] == label) + 1,
            }
            for label, med_steps, med_sfo in stats
        ],
    }
    _write_json(out / "ranking.json", ranking)
    return EXIT_OK


def _parse_int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigurationError(f"expected a list of integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sgdsched",
        description="Mini-batch SGD experiments with gradient-norm-triggered schedules",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--seeds", help="override the seed list, e.g. 0,1,2")
        p.add_argument(
            "--check-interval", type=int, help="steps between full-gradient checks"
        )

    p_run = sub.add_parser("run", help="execute one schedule over the seed list")
    p_run.add_argument("config")
    add_common(p_run)

    p_sweep = sub.add_parser("sweep", help="first-hit oracle cost over a batch grid")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--batches", help="batch grid, e.g. 2,4,8,16")
    add_common(p_sweep)

    p_cmp = sub.add_parser("compare", help="rank schedules on a shared problem")
    p_cmp.add_argument("configs", nargs="+")
    add_common(p_cmp)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.seeds is not None:
            args.seeds = _parse_int_list(args.seeds)
        if args.command == "run":
            config = _apply_overrides(load_config(args.config), args)
            return cmd_run(config)
        if args.command == "sweep":
            config = _apply_overrides(load_config(args.config), args)
            batches = _parse_int_list(args.batches) if args.batches else None
            return cmd_sweep(config, batches=batches)
        configs = [_apply_overrides(load_config(path), args) for path in args.configs]
        return cmd_compare(configs)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except PrecisionUnreachableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNREACHABLE


if __name__ == "__main__":
    sys.exit(main())
