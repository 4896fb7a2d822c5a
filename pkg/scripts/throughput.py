"""Wall-clock speed of analyze and insert on a 38 Mbps stream, in multiples of real time."""

import argparse
import os
import time

from tsmux import fixtures
from tsmux.analyzer import measure
from tsmux.inserter import InsertionConfig, insert
from tsmux.statmux import generate_stream


def timed(fn, *args):
    t = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - t


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--duration", type=float, default=60.0)
    ap.add_argument("--null-mbps", type=float, default=1.8)
    args = ap.parse_args()

    cfg = fixtures.null_share_config(args.null_mbps * 1e6)
    data, t_gen = timed(generate_stream, cfg, args.duration)
    _, t_an = timed(measure, data)
    ins_cfg = InsertionConfig(0xFF00, 0x1FF0, 0x1FF1, repeat=True)
    (_, rep), t_ins = timed(insert, data, ins_cfg, os.urandom(2_000_000))
    for name, t in (("generate", t_gen), ("analyze", t_an), ("insert", t_ins)):
        print(f"{name:<9}{t:7.2f} s  {args.duration / t:7.1f}x real time")
    print(f"inserted {rep.achieved_data_rate / 1e6:.3f} Mbps of data")


if __name__ == "__main__":
    main()
