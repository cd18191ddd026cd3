"""Command-line front end.

Four subcommands: `simulate` runs a scenario file and writes the trace
plus a metrics report; `savings` prices a workload population and
attributes the discount; `estimate-joint` bounds total savings from
partial eligibility constraints; `price` quotes one VM configuration.

Reports are YAML by default (`--format structured`) so they re-parse
under the schemas in this package; `--format csv` flattens to rows for
plotting. `WI_LOG` picks the log level (debug|info|warning|error).
Exit codes: 0 ok, 1 runtime error, 2 validation error, 3 infeasible.
"""

from __future__ import annotations

import argparse
import logging
import os
import pathlib
import sys
from typing import Any

import yaml

from .accounting import (
    DEFAULT_PRICE_BOOK,
    InfeasibleError,
    VmUsage,
    carbon_report,
    estimate_joint,
    savings_breakdown,
    vm_price,
)
from .hints import HintValidationError
from .ids import OptimizationId
from .population import from_document as population_from_document
from .population import survey_population
from .sim import ScenarioValidationError, load_scenario, run

log = logging.getLogger("hintfabric")


def _setup_logging() -> None:
    level = os.environ.get("WI_LOG", "warning").upper()
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )


def _dump(doc: Any) -> str:
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=False)


def _write(out_dir: str | None, name: str, text: str) -> None:
    if out_dir is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
        return
    path = pathlib.Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    (path / name).write_text(text, encoding="utf-8")
    log.info("wrote %s", path / name)


# ---------------------------------------------------------------------------
# simulate


def _notice_violations(trace, floor_ms: int) -> int:
    violations = 0
    for _, _, event, detail in trace:
        if event != "preempt_notice":
            continue
        fields = dict(part.split("=", 1) for part in detail.split())
        if fields.get("emergency") == "0" and int(fields["notice_ms"]) < floor_ms:
            violations += 1
    return violations


def _metrics_csv(doc: dict[str, Any]) -> str:
    cols = (
        "workload_id", "evictions_full_notice", "evictions_emergency",
        "evictions_high", "scale_outs", "scale_ins", "throttle_seconds",
        "work_done", "makespan_ms", "slowdown",
    )
    lines = [",".join(cols)]
    for wid, wm in doc["workloads"].items():
        row = [wid] + [
            "" if wm[c] is None else str(wm[c]) for c in cols[1:]
        ]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def cmd_simulate(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario, seed=args.seed)
    log.info("running scenario %s (seed %d)", scenario.name, scenario.seed)
    result = run(scenario)
    metrics = result.metrics
    doc = metrics.to_document()
    violations = _notice_violations(result.trace, scenario.notice_ms)
    evictions = sum(
        wm.evictions_full_notice + wm.evictions_emergency
        for wm in metrics.workloads.values()
    )
    emergencies = sum(wm.evictions_emergency for wm in metrics.workloads.values())
    summary = (
        f"scenario={scenario.name} seed={scenario.seed} "
        f"total_cost={metrics.total_cost:.6f} "
        f"baseline_cost={metrics.baseline_cost:.6f} "
        f"savings_pct={metrics.savings_pct:.4f} "
        f"evictions={evictions} emergency={emergencies} "
        f"notice_violations={violations}"
    )
    _write(args.out, "trace.csv", result.trace_csv())
    if args.format == "csv":
        _write(args.out, "metrics.csv", _metrics_csv(doc))
    else:
        _write(args.out, "metrics.yaml", _dump(doc))
    _write(args.out, "summary.txt", summary + "\n")
    if args.out is not None:
        print(summary)
    return 0


# ---------------------------------------------------------------------------
# savings


def _load_population(args: argparse.Namespace):
    if args.survey_defaults:
        log.info("generating survey population n=%d seed=%d", args.n, args.seed or 0)
        return survey_population(args.n, seed=args.seed or 0)
    if args.population is None:
        raise ScenarioValidationError(
            [("population", "a population file or --survey-defaults is required")]
        )
    with open(args.population, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    return population_from_document(doc or [])


def _breakdown_csv(report, carbon) -> str:
    lines = ["optimization,contribution_pp"]
    lines.extend(
        f"{opt.value},{pp:.4f}" for opt, pp in report.contributions_pp.items()
    )
    lines.append(f"total,{report.total_savings_pct:.4f}")
    lines.append(f"carbon_reduction,{carbon.reduction_pct:.4f}")
    return "\n".join(lines) + "\n"


def cmd_savings(args: argparse.Namespace) -> int:
    population = _load_population(args)
    report = savings_breakdown(population)
    carbon = carbon_report(population)
    doc = {
        "workloads": len(population),
        "total_savings_pct": round(report.total_savings_pct, 4),
        "regular_cost": round(report.regular_cost, 4),
        "discounted_cost": round(report.discounted_cost, 4),
        "contributions_pp": {
            opt.value: round(pp, 4) for opt, pp in report.contributions_pp.items()
        },
        "carbon": {
            "reduction_pct": round(carbon.reduction_pct, 4),
            "migration_reduction_pct": round(carbon.migration_reduction_pct, 4),
            "target_region_id": carbon.target_region_id,
            "by_optimization_pp": {
                opt.value: round(pp, 4) for opt, pp in carbon.by_optimization_pp.items()
            },
        },
    }
    if args.format == "csv":
        _write(args.out, "savings.csv", _breakdown_csv(report, carbon))
    else:
        _write(args.out, "savings.yaml", _dump(doc))
        if args.out is not None:
            # the plot-ready breakdown always accompanies a report directory
            _write(args.out, "savings.csv", _breakdown_csv(report, carbon))
    return 0


# ---------------------------------------------------------------------------
# estimate-joint


def _parse_constraints(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh) or {}
    if not isinstance(doc, dict) or "marginals" not in doc:
        raise ScenarioValidationError([("marginals", "required mapping is missing")])
    marginals = {
        OptimizationId(str(k)): float(v) for k, v in (doc["marginals"] or {}).items()
    }
    pairwise = {}
    for i, row in enumerate(doc.get("pairwise") or []):
        opts = row.get("opts", [])
        if len(opts) != 2:
            raise ScenarioValidationError(
                [(f"pairwise[{i}].opts", "expected exactly two optimizations")]
            )
        key = (OptimizationId(str(opts[0])), OptimizationId(str(opts[1])))
        pairwise[key] = float(row["fraction"])
    scenarios = {}
    for i, row in enumerate(doc.get("scenarios") or []):
        opts = frozenset(OptimizationId(str(o)) for o in row.get("opts", []))
        if not opts:
            raise ScenarioValidationError(
                [(f"scenarios[{i}].opts", "need at least one optimization")]
            )
        scenarios[opts] = float(row["fraction"])
    return marginals, pairwise or None, scenarios or None


def cmd_estimate_joint(args: argparse.Namespace) -> int:
    marginals, pairwise, scenarios = _parse_constraints(args.constraints)
    estimate = estimate_joint(marginals, pairwise, scenarios)
    doc = {
        "feasible": True,
        "opts": [o.value for o in estimate.opts],
        "min_savings_pct": round(estimate.min_savings_pct, 4),
        "max_savings_pct": round(estimate.max_savings_pct, 4),
        "independence_savings_pct": round(estimate.independence_savings_pct, 4),
    }
    if args.format == "csv":
        lines = ["quantity,value"]
        for key in ("min_savings_pct", "max_savings_pct", "independence_savings_pct"):
            lines.append(f"{key},{doc[key]}")
        _write(args.out, "estimate.csv", "\n".join(lines) + "\n")
    else:
        _write(args.out, "estimate.yaml", _dump(doc))
    return 0


# ---------------------------------------------------------------------------
# price


def cmd_price(args: argparse.Namespace) -> int:
    applied = frozenset(OptimizationId(o) for o in args.opt)
    usage = VmUsage(cores=args.cores, vm_hours=args.vm_hours, region_id=args.region)
    price = vm_price(usage, applied, DEFAULT_PRICE_BOOK)
    regular = vm_price(usage, frozenset(), DEFAULT_PRICE_BOOK)
    doc = {
        "cores": args.cores,
        "vm_hours": args.vm_hours,
        "region_id": args.region,
        "optimizations": sorted(o.value for o in applied),
        "price": round(price, 6),
        "regular_price": round(regular, 6),
        "discount_pct": round(100.0 * (1.0 - price / regular), 4) if regular else 0.0,
    }
    if args.format == "csv":
        lines = ["field,value"]
        lines.extend(f"{k},{v}" for k, v in doc.items() if k != "optimizations")
        lines.append("optimizations," + "+".join(doc["optimizations"]))
        _write(args.out, "price.csv", "\n".join(lines) + "\n")
    else:
        _write(args.out, "price.yaml", _dump(doc))
    return 0


# ---------------------------------------------------------------------------
# wiring


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hintfabric",
        description="Hint-driven platform simulator and savings accounting.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--seed", type=int, default=None, help="override the input seed")
        p.add_argument("--out", default=None, help="write reports into this directory")
        p.add_argument(
            "--format", choices=("csv", "structured"), default="structured",
            help="report format (default: structured YAML)",
        )

    p = sub.add_parser("simulate", help="run one scenario file")
    p.add_argument("scenario", help="scenario YAML file")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("savings", help="price a workload population")
    p.add_argument("population", nargs="?", default=None, help="population YAML file")
    p.add_argument(
        "--survey-defaults", action="store_true",
        help="generate the population from the built-in survey marginals",
    )
    p.add_argument("--n", type=int, default=10_000, help="survey population size")
    common(p)
    p.set_defaults(func=cmd_savings)

    p = sub.add_parser("estimate-joint", help="bound savings from partial constraints")
    p.add_argument("constraints", help="constraints YAML file")
    common(p)
    p.set_defaults(func=cmd_estimate_joint)

    p = sub.add_parser("price", help="quote one VM configuration")
    p.add_argument("--cores", type=int, required=True)
    p.add_argument("--vm-hours", type=float, default=1.0)
    p.add_argument("--region", default="east-1")
    p.add_argument(
        "--opt", action="append", default=[],
        help="applied optimization id (repeatable)",
    )
    common(p)
    p.set_defaults(func=cmd_price)
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 3
    except (ScenarioValidationError, HintValidationError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, yaml.YAMLError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
