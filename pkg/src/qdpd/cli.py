"""Command-line entry point: ``qdpd sequence``, ``qdpd sweep`` and ``qdpd config``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

import numpy as np

from .errors import QdpdError
from .experiment import (ARMS, ExperimentConfig, emit_reports, emit_sequence_reports,
                         load_config, run_power_sweep, run_sequence_experiment, save_config,
                         seed_for_pattern)

log = logging.getLogger("qdpd")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qdpd", description=__doc__)
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI experiment file (defaults if omitted)")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--repetitions", type=int, help="override n_repetitions")
    arms = common.add_mutually_exclusive_group()
    arms.add_argument("--raw-only", action="store_true", help="skip the predistorted arm")
    arms.add_argument("--dpd-only", action="store_true", help="skip the raw arm")

    seq = sub.add_parser("sequence", parents=[common],
                         help="one power level with per-sequence fidelity and trajectories")
    seq.add_argument("--level", type=float, help="power level in dB (default: highest)")
    seq.add_argument("--exemplary", action="store_true",
                     help="search for a seed whose qubit 0 runs (idle, Y, -X, idle)")

    sw = sub.add_parser("sweep", parents=[common], help="full power sweep")
    sw.add_argument("--levels", type=float, nargs="+", help="override the power grid (dB)")

    cfg = sub.add_parser("config", help="write the default configuration file")
    cfg.add_argument("path")
    return ap


def _config(args) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    kw = {}
    if args.seed is not None:
        kw["rng_seed"] = args.seed
    if args.repetitions is not None:
        kw["n_repetitions"] = args.repetitions
    if getattr(args, "levels", None):
        kw["power_levels_db"] = tuple(sorted(args.levels))
    return replace(config, **kw) if kw else config


def _arms(args):
    if args.raw_only:
        return ("raw",)
    if args.dpd_only:
        return ("dpd",)
    return ARMS


def _print_table(report, arms):
    levels = sorted({r.power_db for r in report.rows})
    print("power_db " + " ".join(f"{a}_q{q}" for a in arms
                                 for q in range(report.config.n_qubits)))
    for p in levels:
        vals = [report.row(q, p, a).mean_infidelity for a in arms
                for q in range(report.config.n_qubits)]
        print(f"{p:8g} " + " ".join(f"{v:.3e}" for v in vals))


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "config":
            save_config(ExperimentConfig(), args.path)
            return 0
        config = _config(args)
        arms = _arms(args)
        if args.command == "sequence":
            if args.exemplary:
                seed, block = seed_for_pattern(config)
                log.warning("exemplary pattern at seed %d, sequence %d", seed, block)
                config = replace(config, rng_seed=seed)
            result = run_sequence_experiment(config, args.level, arms)
            files = emit_sequence_reports(result, config, args.out)
            for arm in arms:
                f = [row[3] for row in result.fidelity_rows if row[2] == arm]
                print(f"{arm}: mean F = {np.mean(f):.6f} over {len(f)} sequences")
        else:
            report = run_power_sweep(config, arms)
            files = emit_reports(report, args.out)
            _print_table(report, arms)
    except (QdpdError, OSError) as exc:
        print(f"qdpd: error: {exc}", file=sys.stderr)
        return 1
    for f in files:
        log.info("wrote %s", f)
    return 0
