"""Command-line entry point: ``tsinfo run | verify | demo``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .analysis import information_ratio
from .belief import Posterior
from .environments import STRUCTURES
from .errors import TsInfoError
from .harness import (STRUCTURE_ALIASES, ConfigError, ExperimentConfig, builtin_family, emit_report,
                      load_config, run_experiment)
from .verification import verify

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("tsinfo")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # exit code 2 with usage, without SystemExit leaking
        self.print_usage(sys.stderr)
        raise ConfigError(f"{self.prog}: error: {message}")


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_u64, help="master seed (unsigned 64-bit)")
    common.add_argument("--horizon", type=_positive)
    common.add_argument("--reps", type=_positive, help="replications (run/demo) or episodes per instance (verify)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--structure", choices=sorted(STRUCTURE_ALIASES))
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="tsinfo", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    run = sub.add_parser("run", parents=[common], help="run an experiment config")
    run.add_argument("--config", help="experiment config (JSON)")
    sub.add_parser("verify", parents=[common], help="certify every bound on random instances")
    sub.add_parser("demo", parents=[common], help="worked symmetric two-arm example")
    return parser


def _cmd_run(args) -> int:
    if args.config:
        config = load_config(args.config)
    elif args.structure:
        config = ExperimentConfig(family=builtin_family(args.structure).to_dict())
    else:
        raise ConfigError("run needs --config or --structure")
    if args.seed is not None:
        config.master_seed = args.seed
    if args.horizon is not None:
        config.horizon = args.horizon
    if args.reps is not None:
        config.replications = args.reps
    if args.out is not None:
        config.output_path = args.out
    result = run_experiment(config)
    csv_path, json_path = emit_report(result.summary, result.trajectories, config.output_path)
    s = result.summary
    print(f"replications={s['replications']} structure={s['structure']} "
          f"mean_regret(T)={s['curves']['mean_cumulative_regret'][-1]:.6g} "
          f"prop1_bound(T)={s['curves']['prop1_bound'][-1]:.6g} "
          f"max_gamma={s['max_gamma']:.6g} violations={s['bound_violation_count']}")
    print(f"wrote {csv_path} and {json_path}")
    if result.violation_count:
        print(json.dumps(s["violations"][0], indent=2), file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


def _cmd_verify(args) -> int:
    structures = [STRUCTURE_ALIASES[args.structure]] if args.structure else list(STRUCTURES)
    result = verify(seed=args.seed or 0, structures=structures,
                    episodes=args.reps or 3, horizon=args.horizon or 25)
    print(result.table())
    print(f"total violations: {result.violation_count}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "verify.json").write_text(json.dumps(result.to_dict(), indent=2) + "\n")
    return EXIT_VIOLATION if result.violation_count else EXIT_OK


def _cmd_demo(args) -> int:
    family = builtin_family(args.structure or "bandit")
    config = ExperimentConfig(family=family.to_dict(), horizon=args.horizon or 10,
                              replications=args.reps or 1, master_seed=args.seed or 0,
                              output_path=args.out or "tsinfo_demo")
    result = run_experiment(config)
    rep = information_ratio(Posterior.from_prior(family), family)
    print(f"prior: regret={rep.expected_instant_regret:.6f} gain={rep.info_gain:.6f} nats "
          f"ratio={rep.ratio_or_zero:.6f} bound={rep.structural_bound}")
    print(f"{'t':>3} {'action':>6} {'outcome':>7} {'regret':>8} {'E regret':>9} {'gain':>9} {'gamma':>8} {'prop1':>8}")
    for row in result.trajectories[0].rows:
        r = row.report
        gamma = "undef" if r.ratio is None else f"{r.ratio:.5f}"
        print(f"{row.t:>3} {row.action:>6} {row.outcome:>7} {row.instant_regret:>8.3f} "
              f"{r.expected_instant_regret:>9.5f} {r.info_gain:>9.5f} {gamma:>8} {row.prop1_bound:>8.4f}")
    emit_report(result.summary, result.trajectories, config.output_path)
    return EXIT_VIOLATION if result.violation_count else EXIT_OK


def cli_main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    handler = {"run": _cmd_run, "verify": _cmd_verify, "demo": _cmd_demo}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TsInfoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VIOLATION


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
