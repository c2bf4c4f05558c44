"""Command-line interface: ``microsplit {analyze,sweep,simulate,verify}``.

Exit codes: 0 success, 1 theorem check failure, 2 usage or feasibility error.
When ``--output`` is given, a JSON manifest is written next to the output as
``<output>.manifest.json``.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import sys
import warnings
from typing import Any, Sequence

from . import __version__
from .decomposition import (
    Best,
    ComparisonResult,
    InfeasibleGridPoint,
    InvalidN,
    SweepTable,
    Worst,
    analyze,
    build_chain,
    check_theorems,
    custom_chain,
    lambda_max,
    sweep,
    verify_improvement,
)
from .des import InvalidConfig, SimConfig, SimEstimate, simulate_chain
from .queueing import Discipline, UnstableQueue

EXIT_OK = 0
EXIT_PROPERTY_FAILURE = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


def fmt(x: float) -> str:
    """Shortest round-trip representation of a float."""
    return repr(float(x))


def _rate_list(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated rates, got {text!r}") from None


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return value


def _case(args: argparse.Namespace):
    if args.case == "worst":
        if args.epsilon is None:
            raise UsageError("--epsilon is required for --case worst")
        return Worst(args.epsilon)
    if args.epsilon is not None:
        raise UsageError("--epsilon only applies to --case worst")
    return Best()


def _chain(args: argparse.Namespace):
    discipline = Discipline.parse(args.discipline)
    if args.case == "custom":
        if args.stage_rates is None or args.monolith_rate is None:
            raise UsageError("--case custom needs --stage-rates and --monolith-rate")
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            spec = custom_chain(args.lam, args.stage_rates, args.monolith_rate, discipline)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        return spec
    if args.n is None or args.mu is None:
        raise UsageError(f"--case {args.case} needs --n and --mu")
    return build_chain(_case(args), args.n, args.lam, args.mu, discipline)


def _add_scenario(p: argparse.ArgumentParser, custom: bool = False, with_lambda: bool = True):
    cases = ["worst", "best"] + (["custom"] if custom else [])
    p.add_argument("--case", choices=cases, required=True)
    p.add_argument("--discipline", choices=[d.value for d in Discipline], required=True)
    p.add_argument("--n", type=int)
    if with_lambda:
        p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--mu", type=float)
    p.add_argument("--epsilon", type=float)
    if custom:
        p.add_argument("--stage-rates", type=_rate_list, help="comma-separated stage service rates")
        p.add_argument("--monolith-rate", type=float)


def _add_output(p: argparse.ArgumentParser):
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--output", help="write to this file instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="microsplit",
        description="Queueing analysis of splitting a service into n microservices.",
        allow_abbrev=False,
        fromfile_prefix_chars="@",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="compare a split chain with its monolith", allow_abbrev=False)
    _add_scenario(p, custom=True)
    _add_output(p)

    p = sub.add_parser("sweep", help="tabulate the comparison over a lambda grid", allow_abbrev=False)
    _add_scenario(p, with_lambda=False)
    p.add_argument("--lambda-min", type=float)
    p.add_argument("--lambda-max", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--lenient", action="store_true", help="skip infeasible grid points")
    _add_output(p)

    p = sub.add_parser("simulate", help="simulate the split chain", allow_abbrev=False)
    _add_scenario(p, custom=True)
    p.add_argument("--feed", choices=["independent", "tandem"], default="independent")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--jobs", type=int, default=SimConfig.jobs_per_replication)
    p.add_argument("--reps", type=int, default=SimConfig.replications)
    p.add_argument("--warmup", type=float, default=SimConfig.warmup_fraction)
    p.add_argument("--workers", type=int, default=1, help="replications run concurrently")
    p.add_argument("--trace", help="write a per-job CSV trace of replication 0")
    _add_output(p)

    p = sub.add_parser("verify", help="randomized check of the improvement theorems", allow_abbrev=False)
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--report", dest="output", help="write the per-cell report here")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    return parser


# --- rendering -------------------------------------------------------------

def _csv_text(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _json_text(payload: Any) -> str:
    return json.dumps(payload, indent=2) + "\n"


def _scenario_fields(spec) -> dict:
    eps = getattr(spec.case, "epsilon", None)
    return {
        "case": spec.case.label,
        "discipline": spec.discipline.value,
        "n": spec.n,
        "lambda": spec.lam,
        "mu": spec.mu,
        "epsilon": eps,
        "monolith_rate": spec.monolith_rate,
    }


def _opt(x) -> str:
    return "" if x is None else fmt(x) if isinstance(x, float) else str(x)


def render_analysis(spec, result: ComparisonResult, form: str) -> str:
    scenario = _scenario_fields(spec)
    if form == "json":
        payload = dict(scenario)
        payload["stages"] = [
            {
                "stage": i + 1,
                "rate": rate,
                "rho": m.rho,
                "wait_time": m.wait_time,
                "sojourn_time": m.sojourn_time,
            }
            for i, (rate, m) in enumerate(zip(spec.stage_rates, result.per_stage))
        ]
        payload.update(
            micro_total=result.micro_total_time,
            monolith=result.monolith_time,
            absolute_improvement=result.absolute_improvement,
            speedup=result.speedup,
            improved=verify_improvement(result),
            near_saturation=result.near_saturation,
        )
        return _json_text(payload)
    header = list(scenario) + [f"stage_{i + 1}" for i in range(spec.n)]
    header += ["micro_total", "monolith", "absolute_improvement", "speedup"]
    row = [_opt(v) for v in scenario.values()]
    row += [fmt(m.sojourn_time) for m in result.per_stage]
    row += [fmt(result.micro_total_time), fmt(result.monolith_time),
            fmt(result.absolute_improvement), fmt(result.speedup)]
    return _csv_text(header, [row])


def render_sweep(table: SweepTable, form: str) -> str:
    if form == "json":
        payload = {
            "case": table.case.label,
            "discipline": table.discipline.value,
            "n": table.n,
            "mu": table.mu,
            "epsilon": getattr(table.case, "epsilon", None),
            "skipped": list(table.skipped),
            "rows": [
                {
                    "lambda": r.lam,
                    "stages": [{"stage": i + 1, "sojourn_time": t} for i, t in enumerate(r.stage_times)],
                    "micro_total": r.micro_total,
                    "monolith": r.monolith,
                }
                for r in table.rows
            ],
        }
        return _json_text(payload)
    header = ["lambda"] + [f"stage_{i + 1}" for i in range(table.n)] + ["micro_total", "monolith"]
    rows = [
        [fmt(r.lam)] + [fmt(t) for t in r.stage_times] + [fmt(r.micro_total), fmt(r.monolith)]
        for r in table.rows
    ]
    return _csv_text(header, rows)


def render_simulation(spec, config: SimConfig, est: SimEstimate, analytic: float, form: str) -> str:
    scenario = _scenario_fields(spec)
    settings = {
        "feed": config.feed_mode.value,
        "seed": config.seed,
        "jobs": config.jobs_per_replication,
        "reps": config.replications,
        "warmup": config.warmup_fraction,
    }
    rel_err = (est.mean_sojourn - analytic) / analytic
    if form == "json":
        payload = {**scenario, **settings}
        payload.update(
            mean_sojourn=est.mean_sojourn,
            std_error=est.std_error,
            ci95_half_width=est.ci95_half_width,
            samples=est.samples,
            analytic=analytic,
            relative_error=rel_err,
            stages=[{"stage": i + 1, "mean_sojourn": m} for i, m in enumerate(est.per_stage_means)],
        )
        return _json_text(payload)
    header = list(scenario) + list(settings)
    header += ["mean_sojourn", "std_error", "ci95_half_width", "samples", "analytic", "relative_error"]
    header += [f"stage_{i + 1}" for i in range(spec.n)]
    row = [_opt(v) for v in scenario.values()] + [_opt(v) for v in settings.values()]
    row += [fmt(est.mean_sojourn), fmt(est.std_error), fmt(est.ci95_half_width), str(est.samples),
            fmt(analytic), fmt(rel_err)]
    row += [fmt(m) for m in est.per_stage_means]
    return _csv_text(header, [row])


# --- commands ----------------------------------------------------------------

def cmd_analyze(args) -> tuple[int, str]:
    spec = _chain(args)
    result = analyze(spec)
    if result.near_saturation:
        print("warning: utilization above 0.99 in at least one queue", file=sys.stderr)
    return EXIT_OK, render_analysis(spec, result, args.format)


def cmd_sweep(args) -> tuple[int, str]:
    case = _case(args)
    if args.n is None or args.mu is None:
        raise UsageError("sweep needs --n and --mu")
    explicit = (args.lambda_min, args.lambda_max, args.steps)
    if all(v is None for v in explicit):
        grid = None
    else:
        top = lambda_max(case, args.n, args.mu)
        lo = 0.02 * top if args.lambda_min is None else args.lambda_min
        hi = 0.95 * top if args.lambda_max is None else args.lambda_max
        steps = 64 if args.steps is None else args.steps
        if steps < 1:
            raise UsageError("--steps must be positive")
        if steps > 1 and hi <= lo:
            raise UsageError("--lambda-max must exceed --lambda-min")
        grid = [lo] if steps == 1 else [lo + (hi - lo) * i / (steps - 1) for i in range(steps)]
    table = sweep(case, args.n, args.mu, args.discipline, grid, strict=not args.lenient)
    if table.skipped:
        print(f"warning: skipped {len(table.skipped)} infeasible grid point(s)", file=sys.stderr)
    return EXIT_OK, render_sweep(table, args.format)


def cmd_simulate(args) -> tuple[int, str]:
    spec = _chain(args)
    config = SimConfig(
        seed=args.seed,
        jobs_per_replication=args.jobs,
        warmup_fraction=args.warmup,
        replications=args.reps,
        feed_mode=args.feed,
        workers=args.workers,
    )
    analytic = analyze(spec).micro_total_time
    if args.trace:
        with open(args.trace, "w", newline="") as handle:
            est = simulate_chain(spec, config, trace=handle)
    else:
        est = simulate_chain(spec, config)
    return EXIT_OK, render_simulation(spec, config, est, analytic, args.format)


def cmd_verify(args) -> tuple[int, str]:
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    reports = check_theorems(args.trials, args.seed, check=_theorem_check)
    code = EXIT_OK
    for rep in reports:
        if rep.counterexample is not None:
            d = rep.counterexample
            print(
                f"counterexample in {rep.case}/{rep.discipline.value}: "
                f"n={d.n} lambda={d.lam!r} mu={d.mu!r} "
                f"epsilon={getattr(d.case, 'epsilon', None)!r} rho={d.rho!r}",
                file=sys.stderr,
            )
            code = EXIT_PROPERTY_FAILURE
            break
    if args.format == "json":
        text = _json_text(
            [
                {"case": r.case, "discipline": r.discipline.value, "trials": r.trials,
                 "passed": r.passed, "failed": r.failed}
                for r in reports
            ]
        )
    else:
        text = _csv_text(
            ["case", "discipline", "trials", "passed", "failed"],
            [[r.case, r.discipline.value, r.trials, r.passed, r.failed] for r in reports],
        )
    return code, text


# Indirection so tests can inject a faulty check into ``verify``.
_theorem_check = verify_improvement

COMMANDS = {
    "analyze": cmd_analyze,
    "sweep": cmd_sweep,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
}


def _manifest(argv: Sequence[str], args: argparse.Namespace) -> dict:
    params = {k: v for k, v in vars(args).items()}
    return {
        "command": ["microsplit", *argv],
        "parameters": params,
        "version": __version__,
        "seed": params.get("seed"),
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        code, text = COMMANDS[args.command](args)
    except (UnstableQueue, InvalidN, InvalidConfig, InfeasibleGridPoint, UsageError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE

    if args.output:
        with open(args.output, "w", newline="") as handle:
            handle.write(text)
        with open(f"{args.output}.manifest.json", "w") as handle:
            json.dump(_manifest(argv, args), handle, indent=2)
            handle.write("\n")
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
