"""Seeded learning runs on the toy tasks, full or reduced network width.

    python scripts/learning_run.py --env PointMass2D --steps 30000 --seeds 0 1 2 --width 128
"""

import argparse
import json
from pathlib import Path

import torch

from drq.config import AgentConfig, desk_scale, load_config
from drq.trainer import train


def width_scaled(cfg: AgentConfig, width: int | None) -> AgentConfig:
    if width is None:
        return cfg
    return cfg.replace(zs_dim=width, za_dim=width // 2, zsa_dim=width, enc_hidden_dim=width,
                       actor_hidden_dim=width, critic_hidden_dim=width)


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--env", default="PointMass2D")
    p.add_argument("--steps", type=int, default=30_000)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--width", type=int, help="shrink every hidden/latent width to this value")
    p.add_argument("--config")
    p.add_argument("--ablation")
    p.add_argument("--eval-every", type=int, default=5_000)
    p.add_argument("--out", default="runs")
    args = p.parse_args()
    torch.set_num_threads(1)

    base = load_config(args.config) if args.config else desk_scale(AgentConfig())
    base = width_scaled(base, args.width)
    tag = f"{args.env}-w{args.width or 'full'}" + (f"-{args.ablation}" if args.ablation else "")
    results = {}
    for seed in args.seeds:
        cfg = base.replace(env=args.env, total_steps=args.steps, seed=seed, eval_every=args.eval_every)
        if args.ablation:
            from drq.config import with_ablation

            cfg = with_ablation(cfg, args.ablation)
        _, summary = train(cfg, Path(args.out) / tag / f"seed{seed}")
        results[seed] = {k: summary[k] for k in ("final_eval_return_mean", "final_eval_return_ci",
                                                  "final_eval_success_rate", "best_eval_return_mean",
                                                  "wall_seconds")}
        print(seed, json.dumps(results[seed]), flush=True)
    (Path(args.out) / tag / "results.json").write_text(json.dumps(results, indent=2))


if __name__ == "__main__":
    main()
