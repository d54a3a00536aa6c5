"""Command-line interface: ``fuzz``, ``report``, ``difftest``, ``refc``.

Configuration comes from a JSON config file plus flag overrides; the
``GRAMDIFF_OUT`` environment variable supplies the default output directory.
Exit codes: 0 success / agreement, 2 invalid configuration or input,
3 compiler spawn failure, 10 difftest found a defect.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from gramdiff.campaign import (
    ALGORITHMS,
    CampaignConfig,
    CampaignConfigError,
    ReportError,
    config_from_dict,
    generate_report,
    load_config_file,
    resolve_compiler,
    run_campaign,
)
from gramdiff.difftest import differential_test
from gramdiff.evolution import DISTANCE_KINDS
from gramdiff.refc.__main__ import main as refc_main

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SPAWN = 3
EXIT_DEFECT = 10


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gramdiff", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    fuzz = sub.add_parser("fuzz", help="run a fuzzing campaign")
    fuzz.add_argument("--config", help="JSON campaign config file")
    fuzz.add_argument("--algo", choices=ALGORITHMS)
    fuzz.add_argument("--budget", type=float, help="time budget in seconds")
    fuzz.add_argument("--max-programs", type=int, help="stop rs after this many programs")
    fuzz.add_argument("--max-generations", type=int, help="stop a GA after this many generations")
    fuzz.add_argument("--bias", type=float, help="simplicity bias p_b")
    fuzz.add_argument("--distance", choices=DISTANCE_KINDS)
    fuzz.add_argument("--pop", type=int, help="population size")
    fuzz.add_argument("--tournament", type=int, help="tournament size")
    fuzz.add_argument("--snapshot-interval", type=float)
    fuzz.add_argument("--compiler-a")
    fuzz.add_argument("--compiler-b")
    fuzz.add_argument("--seed", type=int)
    fuzz.add_argument("--out", help="output directory (default: $GRAMDIFF_OUT or ./runs)")
    fuzz.add_argument("--run-id")
    fuzz.add_argument("--workers", type=int)
    fuzz.add_argument("--fragment-budget", type=int)

    report = sub.add_parser("report", help="summarize a finished run directory")
    report.add_argument("run_dir")

    diff = sub.add_parser("difftest", help="differential-test one file")
    diff.add_argument("file")
    diff.add_argument("--config", help="JSON campaign config file for compiler specs")
    diff.add_argument("--compiler-a", default="refc-ok")
    diff.add_argument("--compiler-b", default="refc-bug:all")

    refc = sub.add_parser("refc", help="run the built-in reference checker")
    refc.add_argument("file")
    refc.add_argument("--profile", default="none")

    return parser


def _fuzz_config(args: argparse.Namespace) -> CampaignConfig:
    if args.config:
        data = load_config_file(args.config).to_dict()
    else:
        data = {"algorithm": args.algo or "rs"}
        if args.budget is None and args.max_programs is None and args.max_generations is None:
            data["budget_seconds"] = 60.0
        data["sampler"] = {}
        data["ga"] = {}
    if args.algo:
        data["algorithm"] = args.algo
    if args.budget is not None:
        data["budget_seconds"] = args.budget
    if args.max_programs is not None:
        data["max_programs"] = args.max_programs
    if args.max_generations is not None:
        data["max_generations"] = args.max_generations
    if args.bias is not None:
        data["sampler"]["simplicity_bias"] = args.bias
    if args.seed is not None:
        data["sampler"]["rng_seed"] = args.seed
    if args.fragment_budget is not None:
        data["sampler"]["fragment_budget"] = args.fragment_budget
    if args.distance:
        data["ga"]["distance"] = args.distance
    if args.pop is not None:
        data["ga"]["population_size"] = args.pop
    if args.tournament is not None:
        data["ga"]["tournament_size"] = args.tournament
    if args.snapshot_interval is not None:
        data["snapshot_interval"] = args.snapshot_interval
    if args.compiler_a:
        data["compiler_a"] = args.compiler_a
    if args.compiler_b:
        data["compiler_b"] = args.compiler_b
    if args.run_id:
        data["run_id"] = args.run_id
    if args.workers is not None:
        data["workers"] = args.workers
    out = args.out or os.environ.get("GRAMDIFF_OUT") or "runs"
    data["out_dir"] = out
    return config_from_dict(data)


def cmd_fuzz(args: argparse.Namespace) -> int:
    try:
        config = _fuzz_config(args)
        config.compiler_specs()
    except (CampaignConfigError, ValueError) as exc:
        print(f"gramdiff: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        summary = run_campaign(config)
    except CampaignConfigError as exc:
        print(f"gramdiff: compiler failure: {exc}", file=sys.stderr)
        return EXIT_SPAWN
    print(f"run directory: {summary.run_dir}")
    print(f"programs: {summary.programs}")
    print(f"unique defects: {summary.unique_defects()}")
    for category, count in sorted(summary.registry.by_category().items()):
        print(f"  {category}: {count}")
    print(f"bugs-over-time AUC: {summary.auc:.4f}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    try:
        report_dir = generate_report(Path(args.run_dir))
    except (ReportError, OSError, json.JSONDecodeError) as exc:
        print(f"gramdiff: cannot report on {args.run_dir}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"report written to {report_dir}")
    print((report_dir / "summary.txt").read_text(encoding="utf-8"), end="")
    return EXIT_OK


def cmd_difftest(args: argparse.Namespace) -> int:
    path = Path(args.file)
    if not path.is_file():
        print(f"gramdiff: no such file: {path}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.config:
            config = load_config_file(args.config)
            spec_a, spec_b = config.compiler_specs()
        else:
            spec_a = resolve_compiler("A", args.compiler_a)
            spec_b = resolve_compiler("B", args.compiler_b)
        result = differential_test(str(path), spec_a, spec_b)
    except CampaignConfigError as exc:
        print(f"gramdiff: {exc}", file=sys.stderr)
        return EXIT_SPAWN
    print(f"classification: {result.classification}")
    for label, outcome in (("A", result.outcome_a), ("B", result.outcome_b)):
        print(f"{label}: verdict={outcome.verdict} exit={outcome.exit_code}")
        for line in outcome.diagnostics:
            print(f"{label}> {line}")
    return EXIT_DEFECT if result.defect else EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "fuzz":
        return cmd_fuzz(args)
    if args.command == "report":
        return cmd_report(args)
    if args.command == "difftest":
        return cmd_difftest(args)
    if args.command == "refc":
        return refc_main([args.file, "--profile", args.profile])
    raise AssertionError(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
