"""Closed-loop equal-distortion allocation vs a static equal split.

For each seed the Sports-profile statmux scenario is run GOP by GOP; the
metric is the mean over GOPs of the worst per-service distortion c/R.
"""

import argparse

import numpy as np

from tsmux import fixtures
from tsmux.statmux import Profile, distortion_comparison


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--duration", type=float, default=60.0)
    ap.add_argument("--profile", default="Sports", choices=[p.value for p in Profile])
    ap.add_argument("--services", type=int, default=5)
    args = ap.parse_args()

    gains = []
    for seed in range(args.seeds):
        cfg = fixtures.statmux_config(seed, n_services=args.services, profile=Profile(args.profile))
        closed, static = distortion_comparison(cfg, args.duration)
        gains.append(1 - closed.mean() / static.mean())
        print(f"seed {seed:>2}: closed {closed.mean():.3e}  static {static.mean():.3e}  "
              f"reduction {gains[-1]:.1%}")
    print(f"min {min(gains):.1%}  median {np.median(gains):.1%}  max {max(gains):.1%}")


if __name__ == "__main__":
    main()
