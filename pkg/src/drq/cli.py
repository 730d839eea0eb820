"""Command-line entry point: ``drq train | eval | oracle``."""

from __future__ import annotations

import argparse
import json
import sys

import torch

from . import oracles
from .config import ABLATIONS, AgentConfig, load_config, with_ablation
from .envs import ENV_SPECS
from .errors import ConfigError, StateError
from .trainer import evaluate, train


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="drq")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one seeded run")
    t.add_argument("--env", required=True, choices=sorted(ENV_SPECS))
    t.add_argument("--steps", type=int, required=True)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--config", help="YAML file of config overrides")
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--ablation", choices=ABLATIONS)
    t.add_argument("--float64", action="store_true", help="train in double precision")

    e = sub.add_parser("eval", help="greedy evaluation of a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--episodes", type=int, default=10)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--env", choices=sorted(ENV_SPECS))

    o = sub.add_parser("oracle", help="run a numerical verification suite")
    o.add_argument("--suite", required=True, choices=sorted(oracles.SUITES))
    o.add_argument("--seed", type=int, default=0)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    torch.set_num_threads(1)
    try:
        if args.command == "train":
            cfg = load_config(args.config) if args.config else AgentConfig()
            cfg = cfg.replace(env=args.env, total_steps=args.steps, seed=args.seed)
            if args.ablation:
                cfg = with_ablation(cfg, args.ablation)
            _, summary = train(cfg, args.out, torch.float64 if args.float64 else torch.float32)
            print(json.dumps(summary, indent=2))
            return 0
        if args.command == "eval":
            result = evaluate(args.checkpoint, args.episodes, args.seed, args.env)
            print(json.dumps(result, indent=2))
            return 0
        report = oracles.run_suite(args.suite, seed=args.seed)
        print(json.dumps(report, indent=2))
        return 0 if report["passed"] else 1
    except (ConfigError, StateError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
