"""Command-line interface: train, eval, sweep, baseline, selftest."""

from __future__ import annotations

import argparse
import sys

from aoisim.config import ConfigError, ExperimentConfig, load_config
from aoisim.harness import (HarnessError, cmd_baseline, cmd_eval, cmd_selftest,
                            cmd_sweep, cmd_train)
from aoisim.mappo import DigestMismatchError

_DIGEST_EXIT_CODE = 6


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="YAML config path; "
                        "omit for all defaults")
    parser.add_argument("--seed", default=None,
                        help="comma-separated seed list, overrides the config")
    parser.add_argument("--out", default=None, help="output directory override")
    parser.add_argument("--force", action="store_true",
                        help="overwrite existing output files")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aoisim",
        description="AoI-aware V2V status updates: training, evaluation, "
                    "sweeps, baselines, self-tests.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train the learned policy per seed")
    _add_common(p_train)
    p_train.add_argument("--verbose", action="store_true")

    p_eval = sub.add_parser("eval", help="evaluate a trained checkpoint")
    _add_common(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--episodes", type=int, default=None,
                        help="evaluation episodes per seed")
    p_eval.add_argument("--deterministic", action="store_true",
                        help="argmax drop decision and mean power")

    p_sweep = sub.add_parser("sweep", help="evaluate across a sweep axis")
    _add_common(p_sweep)
    p_sweep.add_argument("--checkpoint", default=None,
                         help="trained checkpoint (needed for mappo sweeps "
                              "over packet_bits / arrival_prob)")
    p_sweep.add_argument("--axis", default=None,
                         choices=["packet_bits", "arrival_prob", "num_links"])
    p_sweep.add_argument("--policy", default=None,
                         help="policy to sweep (default from config)")
    p_sweep.add_argument("--verbose", action="store_true")

    p_base = sub.add_parser("baseline", help="evaluate a non-learning baseline")
    _add_common(p_base)
    p_base.add_argument("--policy", required=True,
                        choices=["wmmse", "itlinq", "random", "threshold"])

    p_self = sub.add_parser("selftest", help="run the built-in oracle suites")
    p_self.add_argument("--fast", action="store_true",
                        help="reduced problem sizes")
    return parser


def _resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None):
        try:
            seeds = tuple(int(s) for s in str(args.seed).split(","))
        except ValueError as exc:
            raise ConfigError(f"bad --seed value: {args.seed}") from exc
        cfg.seeds = seeds
    if getattr(args, "out", None):
        cfg.out_dir = args.out
    if getattr(args, "episodes", None):
        cfg.eval_episodes = args.episodes
    if getattr(args, "axis", None):
        cfg.sweep_axis = args.axis
    if getattr(args, "policy", None) and args.command == "sweep":
        cfg.policy = args.policy
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "selftest":
            return 0 if cmd_selftest(fast=args.fast) else 1
        cfg = _resolve_config(args)
        if args.command == "train":
            out = cmd_train(cfg, force=args.force, verbose=args.verbose)
            print(f"wrote {out['mean_curve']} and "
                  f"{len(out['checkpoints'])} checkpoint(s)")
        elif args.command == "eval":
            out = cmd_eval(cfg, args.checkpoint, force=args.force,
                           deterministic=args.deterministic)
            print(f"wrote {out['metrics']}")
        elif args.command == "sweep":
            out = cmd_sweep(cfg, checkpoint=args.checkpoint, force=args.force,
                            verbose=args.verbose)
            print(f"wrote {out['summary']}")
        elif args.command == "baseline":
            out = cmd_baseline(cfg, args.policy, force=args.force)
            print(f"wrote {out['metrics']}")
        return 0
    except DigestMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _DIGEST_EXIT_CODE
    except (ConfigError, HarnessError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
