"""Command-line entry point: ``sacv generate | run | report``.

Exit codes: 0 on success, 2 when some experiment cells failed, 1 on
configuration or input errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .dataset import SyntheticSpec, generate_synthetic, save_csv
from .errors import ParameterError, SacvError
from .experiment import (PRESET_FAULT_COUNTS, ExperimentConfig, ExperimentReport, emit_report,
                         filter_records, load_report, make_benchmarks, run_experiment)

log = logging.getLogger("sacv")

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sacv", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    g = sub.add_parser("generate", help="sample a synthetic benchmark into CSV files")
    src = g.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", type=Path, help="SyntheticSpec JSON document")
    src.add_argument("--preset", choices=sorted(PRESET_FAULT_COUNTS))
    g.add_argument("--seed", type=_u64, help="override the spec seed")
    g.add_argument("--out", type=Path, required=True)

    r = sub.add_parser("run", help="run an experiment sweep and write its report")
    r.add_argument("--config", type=Path, required=True)
    r.add_argument("--seed", type=_u64, help="override the master seed in the config")
    r.add_argument("--out", type=Path, help="output directory (default: output_dir from config)")
    r.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")

    e = sub.add_parser("report", help="re-emit a report, optionally filtered")
    e.add_argument("report", type=Path, help="report.json or the directory holding it")
    e.add_argument("--out", type=Path, required=True)
    e.add_argument("--where", action="append", default=[], metavar="COLUMN=VALUE",
                   help="keep records whose column equals VALUE (repeatable)")
    return p


def cmd_generate(args) -> int:
    if args.preset:
        spec = make_benchmarks(args.seed or 0)[args.preset]
    else:
        try:
            spec = SyntheticSpec.from_json(args.config.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ParameterError(f"cannot read spec {args.config}: {exc}") from None
        if args.seed is not None:
            spec = dataclasses.replace(spec, seed=args.seed)
    part = generate_synthetic(spec)
    args.out.mkdir(parents=True, exist_ok=True)
    for name in ("dev", "test_id", "test_ood"):
        save_csv(getattr(part, name), args.out / f"{name}.csv")
    (args.out / "spec.json").write_text(spec.to_json() + "\n", encoding="utf-8")
    log.info("wrote %s (held out %s)", args.out, part.held_out_stratum)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "seed": args.seed}, cfg.base_dir)
    if args.jobs < 1:
        raise ParameterError("--jobs must be >= 1")
    out = args.out or Path(cfg.base_dir) / cfg.output_dir
    report = run_experiment(cfg, jobs=args.jobs)
    emit_report(report, out)
    n_err = report.n_errors
    log.info("%d records, %d failed, written to %s", len(report.records), n_err, out)
    if n_err:
        first = next(r for r in report.records if r["status"] == "error")
        print(f"sacv: {n_err} of {len(report.records)} cells failed; first: {first['error']}",
              file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_report(args) -> int:
    path = args.report / "report.json" if args.report.is_dir() else args.report
    try:
        report = load_report(path)
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise ParameterError(f"cannot read report {path}: {exc}") from None
    where = {}
    for item in args.where:
        key, sep, value = item.partition("=")
        if not sep:
            raise ParameterError(f"--where expects COLUMN=VALUE, got {item!r}")
        where[key] = value
    kept = ExperimentReport(report.config, report.fingerprint,
                            filter_records(report.records, where), report.jobs)
    emit_report(kept, args.out)
    log.info("kept %d of %d records", len(kept.records), len(report.records))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    handler = {"generate": cmd_generate, "run": cmd_run, "report": cmd_report}[args.verb]
    try:
        return handler(args)
    except (SacvError, ValueError, OSError) as exc:
        print(f"sacv: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
