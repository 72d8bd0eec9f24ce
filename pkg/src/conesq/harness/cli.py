"""Command-line entry point: run suites, write reports, exit by verdict.

Exit codes: 0 when every requested check passes, 1 when any check fails,
2 on configuration or construction errors (diagnostics on stderr).
reports.jsonl lands in the output directory on every run that executes
checks; ladder-shaped experiments also get a CSV summary.
"""

import argparse
import dataclasses
import sys
from pathlib import Path

from .reports import write_csv, write_jsonl
from .scenario import ScenarioError, load_scenario
from .scenarios import builtin_scenario
from .suites import SUITE_ORDER, run_suites

MODULE_COMMANDS = {
    "nets": "nets",
    "lattice": "lattice",
    "whitney": "whitney",
    "czd": "czdecomp",
    "sqfn": "operator",
    "suppress": "suppression",
}
EXPERIMENTS = ("tb", "stopping-sets", "good-lambda", "weak-type")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", metavar="PATH",
                        help="scenario JSON file (default: the built-in "
                        "uniform-segment configuration)")
    common.add_argument("--seed", type=int, metavar="U64",
                        help="override the scenario seed")
    common.add_argument("--budget", type=int, metavar="SAMPLES",
                        help="override the quadrature samples per shell")
    common.add_argument("--out", metavar="DIR", default=".",
                        help="directory for report files (default: .)")

    parser = argparse.ArgumentParser(
        prog="conesq",
        description="verification suites and experiments for conical "
        "square functions on atomic scenarios")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd, suite in MODULE_COMMANDS.items():
        sub.add_parser(cmd, parents=[common],
                       help=f"run the {suite} suite")
    verify = sub.add_parser("verify", parents=[common],
                            help="run named suites (default: the "
                            "scenario's list, else all)")
    verify.add_argument("suite", nargs="*",
                        help="suite names, in " + ", ".join(SUITE_ORDER))
    experiment = sub.add_parser("experiment", parents=[common],
                                help="run one experiment pipeline")
    experiment.add_argument("name", choices=EXPERIMENTS)
    return parser


def _load(args):
    if args.scenario is None:
        scenario = builtin_scenario("uniform-segment")
    else:
        scenario = load_scenario(args.scenario)
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.budget is not None:
        updates["budget"] = args.budget
    if updates:
        scenario = dataclasses.replace(scenario, **updates)
        problems = scenario.params.problems()
        if args.seed is not None and not 0 <= scenario.seed < 2 ** 64:
            problems.append(("seed", "must be in [0, 2^64)"))
        if args.budget is not None and not 2 <= scenario.budget <= 65536:
            problems.append(("budget", "must be in [2, 65536]"))
        if problems:
            raise ScenarioError(problems)
    return scenario


def _grid_rows(records, experiment):
    """Flatten ladder experiments into CSV rows."""
    rows = []
    if experiment == "good-lambda":
        for rec in records:
            for entry in rec["measured"].get("per_lambda") or []:
                rows.append({
                    "check": rec["check"],
                    "lam": entry["lam"],
                    "left": entry["left"],
                    "right": entry["right"],
                    "ratio": entry.get("ratio", ""),
                    "saturated": entry["saturated"],
                    "passed": entry["passed"],
                })
    elif experiment == "weak-type":
        for rec in records:
            lams = rec["measured"].get("lambdas") or []
            ratios = rec["measured"].get("weak_ratios") or []
            for lam, ratio in zip(lams, ratios):
                rows.append({"check": rec["check"], "lam": lam,
                             "ratio": ratio})
    return rows


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        scenario = _load(args)
    except ScenarioError as exc:
        for field, msg in exc.problems:
            print(f"error: {field}: {msg}", file=sys.stderr)
        return 2

    if args.command == "verify":
        suites = args.suite if args.suite else None
    elif args.command == "experiment":
        suites = [args.name]
    else:
        suites = [MODULE_COMMANDS[args.command]]

    try:
        records, passed = run_suites(scenario, suites)
    except ScenarioError as exc:
        for field, msg in exc.problems:
            print(f"error: {field}: {msg}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_jsonl(records, out / "reports.jsonl")
    written = [str(out / "reports.jsonl")]
    if args.command == "experiment":
        rows = _grid_rows(records, args.name)
        if rows:
            csv_path = out / f"{args.name}-grid.csv"
            write_csv(rows, csv_path)
            written.append(str(csv_path))

    for rec in records:
        verdict = "PASS" if rec["passed"] else "FAIL"
        print(f"{verdict} {rec.get('suite', '-')}/{rec['check']}")
    failed = sum(1 for r in records if not r["passed"])
    print(f"{scenario.name}: {len(records)} checks, {failed} failed; "
          + "wrote " + ", ".join(written))
    return 0 if passed else 1


if __name__ == "__main__":
    sys.exit(main())
