"""Command-line entry point: run experiment configs, validate them, or print
the special-function constants.

Exit codes: 0 = success with passing verdict, 2 = computation finished but
the verdict failed, 1 = configuration or runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import harness, specfun


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="frac-hardy",
        description="Desk-scale experiments for fractional Hardy-type operators",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute an experiment config")
    run_p.add_argument("config", help="TOML experiment file")
    run_p.add_argument("--out", default=".", help="output directory")
    run_p.add_argument("--format", default="json",
                       help="comma list of json,csv,svg")
    run_p.add_argument("--workers", type=int, default=1)
    run_p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")

    val_p = sub.add_parser("validate", help="parse a config without running it")
    val_p.add_argument("config")

    con_p = sub.add_parser("constants", help="print C(N,s), kappa_s, gamma_H")
    con_p.add_argument("--N", type=int, required=True)
    con_p.add_argument("--s", type=float, required=True)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)

    if args.command == "constants":
        try:
            p = specfun.params(args.N, args.s)
        except ValueError as e:
            print(f"error: {e}", file=sys.stderr)
            return 1
        print(json.dumps({"N": p.N, "s": p.s, "C": p.c_ns,
                          "kappa_s": p.kappa_s, "gamma_H": p.gamma_hardy},
                         indent=2))
        return 0

    if args.command == "validate":
        try:
            cfg = harness.load_config(args.config)
        except (OSError, harness.ConfigError) as e:
            print(f"error: {e}", file=sys.stderr)
            return 1
        print(f"ok: experiment '{cfg.experiment}', seed {cfg.seed}")
        return 0

    # run
    try:
        cfg = harness.load_config(args.config, seed_override=args.seed)
    except (OSError, harness.ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    formats = [f.strip() for f in args.format.split(",") if f.strip()]
    for f in formats:
        if f not in ("json", "csv", "svg"):
            print(f"error: unknown format '{f}'", file=sys.stderr)
            return 1
    try:
        record = harness.run(cfg, workers=args.workers)
    except Exception as e:  # noqa: BLE001 - experiment context then fail
        print(f"error in experiment '{cfg.experiment}': {e}", file=sys.stderr)
        return 1
    try:
        paths = [harness.emit(record, f, args.out) for f in formats]
    except OSError as e:
        print(f"error writing output: {e}", file=sys.stderr)
        return 1
    status = "PASS" if record.verdict else "FAIL"
    print(f"{record.experiment}: {status} - {record.verdict_detail}")
    for path in paths:
        print(f"wrote {path}")
    return 0 if record.verdict else 2


if __name__ == "__main__":
    raise SystemExit(main())
