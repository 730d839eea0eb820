"""Full agent vs. one ablation variant on the same seeds; prints mean success rate and return.

    python scripts/ablation.py --env SparseGoal2D --variant mrq_baseline --steps 50000 --width 64
"""

import argparse
import json
from pathlib import Path

import numpy as np
import torch

from drq.config import ABLATIONS, AgentConfig, desk_scale, with_ablation
from drq.trainer import train

from learning_run import width_scaled


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--env", default="SparseGoal2D")
    p.add_argument("--variant", default="mrq_baseline", choices=ABLATIONS)
    p.add_argument("--steps", type=int, default=50_000)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--width", type=int)
    p.add_argument("--out", default="runs/ablation")
    args = p.parse_args()
    torch.set_num_threads(1)

    base = width_scaled(desk_scale(AgentConfig()), args.width).replace(env=args.env, total_steps=args.steps,
                                                                       eval_every=min(5_000, args.steps))
    table = {}
    for name in ("full", args.variant):
        rows = []
        for seed in args.seeds:
            cfg = base.replace(seed=seed)
            if name != "full":
                cfg = with_ablation(cfg, name)
            _, s = train(cfg, Path(args.out) / args.env / name / f"seed{seed}")
            rows.append((s["final_eval_success_rate"], s["final_eval_return_mean"]))
            print(name, seed, rows[-1], flush=True)
        table[name] = {"success_rate": float(np.mean([r[0] for r in rows])),
                       "return": float(np.mean([r[1] for r in rows])), "per_seed": rows}
    print(json.dumps(table, indent=2))
    (Path(args.out) / args.env / f"full_vs_{args.variant}.json").write_text(json.dumps(table, indent=2))


if __name__ == "__main__":
    main()
