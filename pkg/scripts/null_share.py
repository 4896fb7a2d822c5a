"""Null-packet share of three 38 Mbps CBR multiplexes with known stuffing rates."""

import argparse
import time

from tsmux import fixtures
from tsmux.analyzer import measure
from tsmux.statmux import generate_stream


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--duration", type=float, default=60.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print(f"{'Transponder':<14}{'null Mbps':>10}{'measured %':>12}{'analyze s':>11}")
    for name, mbps in fixtures.NULL_RATES.items():
        data = generate_stream(fixtures.null_share_config(mbps * 1e6, seed=args.seed), args.duration)
        t = time.perf_counter()
        rep = measure(data)
        dt = time.perf_counter() - t
        print(f"{name:<14}{mbps:>10.1f}{rep.null_fraction * 100:>12.3f}{dt:>11.2f}")


if __name__ == "__main__":
    main()
