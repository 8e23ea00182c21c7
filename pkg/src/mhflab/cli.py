"""Command-line entry point: mhflab <suite> --config <path> [--out DIR] [--workers N]."""

from __future__ import annotations

import argparse
import os
import sys

from .experiments import SUITES, ConfigError, load_config, run_suite


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="mhflab",
        description="Verification suites for magnetic Schrodinger / Hartree-Fock dynamics")
    parser.add_argument("suite", choices=SUITES, help="suite to run (must match the config)")
    parser.add_argument("--config", required=True, help="path to a JSON experiment config")
    parser.add_argument("--out", default=None, help="output directory (overrides config)")
    parser.add_argument("--workers", type=int, default=None,
                        help="worker pool size (default: MHFLAB_WORKERS or 1)")
    args = parser.parse_args(argv)

    workers = args.workers
    if workers is None:
        workers = int(os.environ.get("MHFLAB_WORKERS", "1"))

    try:
        config = load_config(args.config)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print("invalid config:", file=sys.stderr)
        for err in exc.errors:
            print(f"  - {err}", file=sys.stderr)
        return 2

    if config.suite != args.suite:
        print(f"error: config declares suite {config.suite!r} but {args.suite!r} was requested",
              file=sys.stderr)
        return 2

    code, records = run_suite(config, out_dir=args.out, workers=workers)
    n_fail = sum(r.verdict == "fail" for r in records)
    n_pass = sum(r.verdict == "pass" for r in records)
    print(f"{config.suite}: {n_pass} pass, {n_fail} fail -> exit {code}")
    return code


if __name__ == "__main__":
    raise SystemExit(main())
