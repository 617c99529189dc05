"""Command line: ``le2 train | evaluate | export``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from le2.config import ConfigError, load_config, parse_goal_subset
from le2.orchestrator import RunAborted, evaluate, export, train

EXIT_OK, EXIT_CONFIG, EXIT_ABORT = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="le2", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run the training loop")
    t.add_argument("--config", help="TOML run configuration (defaults when omitted)")
    t.add_argument("--seed", type=int)
    t.add_argument("--workers", type=int)
    t.add_argument("--episodes", type=int, help="override total_episodes")
    t.add_argument("--output-dir")
    t.add_argument("--use-oracle-reward", action="store_true")
    t.add_argument("--goal-subset", help='catalog ids, e.g. "0..8" or "0,3,12"')
    t.add_argument("--resume", metavar="CHECKPOINT")

    e = sub.add_parser("evaluate", help="oracle success rates of a checkpoint on all catalog goals")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--episodes-per-goal", type=int, default=1)

    x = sub.add_parser("export", help="write plot-ready CSVs for a run directory")
    x.add_argument("--run", required=True)
    x.add_argument("--out")
    return parser


def _train(args) -> int:
    try:
        config = load_config(args.config)
        changes = {}
        if args.seed is not None:
            changes["seed"] = args.seed
        if args.workers is not None:
            changes["worker_count"] = args.workers
        if args.episodes is not None:
            changes["total_episodes"] = args.episodes
        if args.output_dir is not None:
            changes["output_dir"] = args.output_dir
        if args.use_oracle_reward:
            changes["use_oracle_reward"] = True
        if args.goal_subset is not None:
            changes["goal_subset"] = parse_goal_subset(args.goal_subset)
        config = config.replace(**changes)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        report = train(config, resume_from=args.resume)
    except RunAborted as exc:
        print(f"{exc} (checkpoint: {exc.checkpoint})", file=sys.stderr)
        return EXIT_ABORT
    print(json.dumps(report, indent=2))
    return EXIT_OK


def _evaluate(args) -> int:
    if args.episodes_per_goal < 0:
        print("config error: --episodes-per-goal must be >= 0", file=sys.stderr)
        return EXIT_CONFIG
    try:
        table = evaluate(args.checkpoint, args.episodes_per_goal)
    except (FileNotFoundError, ValueError) as exc:
        print(f"cannot load checkpoint: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps({"mean": table.mean, "subset_mean": table.subset_mean,
                      "per_goal": {str(k): v for k, v in table.per_goal.items()}}, indent=2))
    return EXIT_OK


def _export(args) -> int:
    try:
        counts = export(args.run, args.out)
    except FileNotFoundError as exc:
        print(f"export error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(counts, indent=2))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    return {"train": _train, "evaluate": _evaluate, "export": _export}[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
