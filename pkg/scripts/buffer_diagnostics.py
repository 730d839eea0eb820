"""Fill a faded replay buffer with random priorities, dump the exact law to CSV and compare
sampler frequencies against it.

    python scripts/buffer_diagnostics.py --size 100000 --eps 1e-4 --draws 1000000 --csv buffer.csv
"""

import argparse
import math

import numpy as np

from drq.replay import FadedBuffer


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--size", type=int, default=1000)
    p.add_argument("--eps", type=float, default=1e-4)
    p.add_argument("--eps-low", type=float, default=0.1)
    p.add_argument("--alpha", type=float, default=0.4)
    p.add_argument("--draws", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv")
    args = p.parse_args()

    rng = np.random.default_rng(args.seed)
    buf = FadedBuffer(args.size, 1, 1, eps=args.eps, eps_low=args.eps_low)
    for _ in range(args.size):
        buf.push([0.0], [0.0], 0.0, [0.0], False)
    buf.update_priorities(np.arange(args.size), rng.exponential(5.0, args.size), args.alpha)
    if args.csv:
        buf.dump_csv(args.csv)
    ids, probs = buf.exact_distribution()
    counts = np.bincount(buf.sample_ids(args.draws, rng) - ids[0], minlength=len(ids))
    tv = 0.5 * np.abs(counts / args.draws - probs).sum()
    # expected TV of an exact sampler (normal approximation to each multinomial cell)
    noise = 0.5 * math.sqrt(2 / (math.pi * args.draws)) * np.sqrt(probs * (1 - probs)).sum()
    chi2 = ((counts - args.draws * probs) ** 2 / (args.draws * probs)).sum()
    print(f"entries={len(ids)} floored={int(buf.floored.sum())} draws={args.draws}")
    print(f"TV={tv:.5f}  expected TV of an exact sampler={noise:.5f}  ratio={tv / noise:.3f}")
    print(f"chi2={chi2:.1f} on {len(ids) - 1} dof (z={(chi2 - len(ids) + 1) / math.sqrt(2 * (len(ids) - 1)):.2f})")


if __name__ == "__main__":
    main()
