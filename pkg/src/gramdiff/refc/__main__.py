"""Command-line entry for the mini-language checkers.

Usage: ``refc <file> [--profile none|D1|D2|D3|all]``

Exit codes: 0 = accepted, 1 = rejected, 42 = simulated out-of-memory crash,
2 = configuration error (unreadable input, bad arguments).  Diagnostics go
to stderr, one per line, as ``ERROR <code>: <message> @ line <n>``.
"""

from __future__ import annotations

import argparse
import sys

from gramdiff.refc.checker import BUG_PROFILES, SimulatedOutOfMemory, check_program

EXIT_ACCEPT = 0
EXIT_REJECT = 1
EXIT_CONFIG = 2
EXIT_OOM = 42


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="refc", description="mini-language reference checker")
    parser.add_argument("file", help="program file to check")
    parser.add_argument("--profile", choices=BUG_PROFILES, default="none",
                        help="seeded-bug profile (default: none = correct checker)")
    args = parser.parse_args(argv)

    try:
        with open(args.file, "r", encoding="utf-8") as handle:
            source = handle.read()
    except OSError as exc:
        print(f"refc: cannot read {args.file}: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        verdict = check_program(source, args.profile)
    except SimulatedOutOfMemory as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_OOM

    for diag in verdict.diagnostics:
        print(diag.render(), file=sys.stderr)
    return EXIT_ACCEPT if verdict.accepted else EXIT_REJECT


if __name__ == "__main__":
    sys.exit(main())
