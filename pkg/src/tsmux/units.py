"""Rate parsing/formatting with k/M/G suffixes (integer bits per second)."""

from __future__ import annotations

import re

_RATE = re.compile(r"^\s*([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*([kKmMgG]?)(?:bps|b/s)?\s*$")
_SCALE = {"": 1, "k": 1_000, "m": 1_000_000, "g": 1_000_000_000}


def parse_rate(value) -> int:
    """``"38M"`` -> 38000000.  Plain numbers pass through (rounded to int)."""
    if isinstance(value, (int, float)):
        return int(round(value))
    m = _RATE.match(str(value))
    if not m:
        raise ValueError(f"bad rate: {value!r}")
    return int(round(float(m.group(1)) * _SCALE[m.group(2).lower()]))


def format_rate(bps: float) -> str:
    for suffix, scale in (("G", 1e9), ("M", 1e6), ("k", 1e3)):
        if abs(bps) >= scale:
            return f"{bps / scale:.3f}{suffix}"
    return f"{bps:.0f}"


def parse_pid(value) -> int:
    pid = int(value, 0) if isinstance(value, str) else int(value)
    if not 0 <= pid <= 0x1FFF:
        raise ValueError(f"PID out of range: {value!r}")
    return pid
