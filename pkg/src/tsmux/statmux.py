"""Synthetic statistical multiplexer.

Encoders in four rate modes, an equal-distortion bandwidth allocator
under the hyperbolic model ``D = c / R``, and a packet-exact generator
that multiplexes everything at a fixed channel rate with null stuffing.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Optional, Sequence

import numpy as np

from . import psi
from .ts import (NULL_PACKET_BYTES, NULL_PID, PACKET_BITS, PACKET_SIZE, PAT_PID, PCR_HZ,
                 serialize_packet)
from .units import parse_pid, parse_rate


class Infeasible(ValueError):
    pass


class Mode(str, enum.Enum):
    VBR = "VBR"
    CAPPED_VBR = "CappedVBR"
    ABR = "ABR"
    CBR = "CBR"


class Profile(str, enum.Enum):
    SIMPLE = "Simple"
    MODERATE = "Moderate"
    COMPLEX = "Complex"
    SPORTS = "Sports"


# (mean complexity, per-GOP log volatility)
PROFILE_PARAMS = {
    Profile.SIMPLE: (1.0, 0.04),
    Profile.MODERATE: (2.0, 0.10),
    Profile.COMPLEX: (3.0, 0.18),
    Profile.SPORTS: (4.0, 0.30),
}

# mean reversion of the log-complexity walk
REVERSION = 0.9


def gen_complexity(seed, gops: int, profile=Profile.MODERATE, *, mean: Optional[float] = None,
                   volatility: Optional[float] = None) -> np.ndarray:
    """Mean-reverting lognormal random walk of per-GOP complexity.

    ``mean`` and ``volatility`` override the profile defaults; zero
    volatility gives a constant trace equal to ``mean``.
    """
    if gops < 1:
        raise ValueError("gops must be >= 1")
    p_mean, p_vol = PROFILE_PARAMS[Profile(profile)]
    mean = p_mean if mean is None else mean
    vol = p_vol if volatility is None else volatility
    if vol == 0:
        return np.full(gops, float(mean))
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal(gops)
    stat_sd = vol / math.sqrt(1 - REVERSION ** 2)
    x = np.empty(gops)
    x[0] = stat_sd * eps[0]
    for t in range(1, gops):
        x[t] = REVERSION * x[t - 1] + vol * eps[t]
    # lognormal mean correction so E[c] = mean
    return mean * np.exp(x - stat_sd ** 2 / 2)


@dataclass(frozen=True)
class AllocationResult:
    rates: tuple
    distortions: tuple
    residual: float
    budget: float
    clipped: tuple  # per service: "min", "max" or None

    @property
    def total(self) -> float:
        return math.fsum(self.rates)


def allocate_equal_distortion(complexities: Sequence[float], budget: float,
                              min_rates: Optional[Sequence[float]] = None,
                              max_rates: Optional[Sequence[float]] = None) -> AllocationResult:
    """Equalize ``c_i / R_i`` across services subject to per-service bounds.

    Iterative clipping: the proportional share ``B' c_i / sum(c)`` is
    computed over the unfixed services; whichever side (under-min or
    over-max) carries the larger total violation is pinned at its bound,
    and the rest re-share what is left until nothing violates.
    """
    c = np.asarray(complexities, dtype=float)
    n = c.size
    lo = np.zeros(n) if min_rates is None else np.asarray(min_rates, dtype=float)
    hi = np.full(n, np.inf) if max_rates is None else np.asarray(max_rates, dtype=float)
    if np.any(c <= 0):
        raise ValueError("complexities must be > 0")
    if np.any(lo > hi):
        raise ValueError("min rate above max rate")
    if math.fsum(lo) > budget:
        raise Infeasible(f"sum of minimum rates {math.fsum(lo):.0f} exceeds budget {budget:.0f}")

    rates = np.zeros(n)
    clipped = [None] * n
    if math.fsum(hi) <= budget:
        rates[:] = hi
        clipped = ["max"] * n
    else:
        free = np.ones(n, dtype=bool)
        while True:
            idx = np.flatnonzero(free)
            remaining = budget - math.fsum(rates[~free])
            lam = remaining / math.fsum(c[idx])
            share = lam * c[idx]
            under = share < lo[idx]
            over = share > hi[idx]
            if not under.any() and not over.any():
                # float guard so the sum never exceeds the budget
                while math.fsum(share) + math.fsum(rates[~free]) > budget:
                    lam = np.nextafter(lam, 0.0)
                    share = lam * c[idx]
                rates[idx] = share
                break
            deficit = math.fsum(lo[idx][under] - share[under])
            excess = math.fsum(share[over] - hi[idx][over])
            if deficit >= excess:
                pin, bound, tag = idx[under], lo, "min"
            else:
                pin, bound, tag = idx[over], hi, "max"
            rates[pin] = bound[pin]
            free[pin] = False
            for i in pin:
                clipped[i] = tag
            if not free.any():
                break
    total = math.fsum(rates)
    return AllocationResult(
        rates=tuple(float(r) for r in rates),
        distortions=tuple(float(ci / r) if r > 0 else math.inf for ci, r in zip(c, rates)),
        residual=float(budget - total),
        budget=float(budget),
        clipped=tuple(clipped),
    )


def equal_split(complexities: Sequence[float], budget: float,
                min_rates: Optional[Sequence[float]] = None,
                max_rates: Optional[Sequence[float]] = None) -> AllocationResult:
    """Open-loop baseline: every service gets ``budget / n`` clipped to its bounds."""
    c = np.asarray(complexities, dtype=float)
    n = c.size
    lo = np.zeros(n) if min_rates is None else np.asarray(min_rates, dtype=float)
    hi = np.full(n, np.inf) if max_rates is None else np.asarray(max_rates, dtype=float)
    raw = np.full(n, budget / n)
    rates = np.clip(raw, lo, hi)
    clipped = tuple("min" if r < l else "max" if r > h else None for r, l, h in zip(raw, lo, hi))
    return AllocationResult(
        rates=tuple(float(r) for r in rates),
        distortions=tuple(float(ci / r) if r > 0 else math.inf for ci, r in zip(c, rates)),
        residual=float(budget - math.fsum(rates)),
        budget=float(budget),
        clipped=clipped,
    )


@dataclass(frozen=True)
class EncoderModel:
    service_id: int
    pid: int
    mode: Mode = Mode.ABR
    min_rate: float = 1_000_000
    max_rate: float = 10_000_000
    complexity_trace: tuple = ()
    profile: Profile = Profile.MODERATE
    mean_rate: Optional[float] = None
    pmt_pid: Optional[int] = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "profile", Profile(self.profile))
        object.__setattr__(self, "complexity_trace", tuple(float(x) for x in self.complexity_trace))
        if not 0 < self.min_rate <= self.max_rate:
            raise ValueError(f"service {self.service_id}: need 0 < min_rate <= max_rate")
        if self.mode is Mode.CBR and self.min_rate != self.max_rate:
            raise ValueError(f"service {self.service_id}: CBR requires min_rate == max_rate")
        if any(x <= 0 for x in self.complexity_trace):
            raise ValueError(f"service {self.service_id}: complexities must be > 0")

    @property
    def target_mean(self) -> float:
        if self.mean_rate is not None:
            return self.mean_rate
        return (self.min_rate + self.max_rate) / 2


def encoder_rate(model: EncoderModel, gop_index: int, allocated: Optional[float] = None,
                 trace: Optional[Sequence[float]] = None) -> float:
    """Rate this encoder produces for one GOP (bits/second)."""
    if model.mode is Mode.CBR:
        return float(model.max_rate)
    if model.mode is Mode.ABR:
        if allocated is None:
            raise ValueError("ABR encoder needs an allocated rate")
        return float(min(max(allocated, model.min_rate), model.max_rate))
    trace = model.complexity_trace if trace is None else trace
    c = trace[gop_index]
    rate = max(model.min_rate, model.target_mean * c / float(np.mean(trace)))
    if model.mode is Mode.CAPPED_VBR:
        rate = min(rate, model.max_rate)
    return float(rate)


@dataclass(frozen=True)
class MuxConfig:
    channel_rate: int
    services: tuple
    gop_duration: float = 0.5
    psi_interval: float = 0.1
    pcr_interval: float = 0.04
    seed: int = 0
    transport_stream_id: int = 1
    emit_sdt: bool = False

    def __post_init__(self):
        object.__setattr__(self, "channel_rate", int(self.channel_rate))
        object.__setattr__(self, "services", tuple(self.services))

    @classmethod
    def from_dict(cls, d: dict) -> "MuxConfig":
        services = []
        for s in d.get("services", []):
            s = dict(s)
            for key in ("min_rate", "max_rate", "mean_rate"):
                if s.get(key) is not None:
                    s[key] = parse_rate(s[key])
            for key in ("pid", "pmt_pid"):
                if s.get(key) is not None:
                    s[key] = parse_pid(s[key])
            if "complexity_trace" in s:
                s["complexity_trace"] = tuple(s["complexity_trace"])
            services.append(EncoderModel(**s))
        kw = {k: v for k, v in d.items() if k != "services"}
        kw["channel_rate"] = parse_rate(kw["channel_rate"])
        return cls(services=tuple(services), **kw)

    def pmt_pids(self) -> list:
        return [s.pmt_pid if s.pmt_pid is not None else 0x1000 + i
                for i, s in enumerate(self.services)]

    def psi_sections(self) -> list:
        """``(pid, section)`` pairs emitted at every PSI repetition."""
        pmt_pids = self.pmt_pids()
        pat = psi.Pat(self.transport_stream_id, 0,
                      tuple((s.service_id, p) for s, p in zip(self.services, pmt_pids)))
        out = [(PAT_PID, psi.serialize_pat(pat))]
        for s, p in zip(self.services, pmt_pids):
            pmt = psi.Pmt(s.service_id, s.pid, (psi.PmtStream(0x02, s.pid),))
            out.append((p, psi.serialize_pmt(pmt)))
        if self.emit_sdt:
            names = {s.service_id: s.name or f"Service {s.service_id}" for s in self.services}
            out.append((psi.SDT_PID, psi.build_sdt(self.transport_stream_id, names)))
        return out

    def psi_packets_per_repetition(self) -> int:
        return sum(psi.packets_needed(len(sec.to_bytes())) for _, sec in self.psi_sections())

    @property
    def psi_rate(self) -> float:
        return self.psi_packets_per_repetition() * PACKET_BITS / self.psi_interval

    def validate(self) -> None:
        if self.channel_rate <= 0 or self.gop_duration <= 0 or self.psi_interval <= 0:
            raise ValueError("channel_rate, gop_duration and psi_interval must be positive")
        if not self.services:
            raise ValueError("no services configured")
        pids = [s.pid for s in self.services]
        reserved = {PAT_PID, NULL_PID} | ({psi.SDT_PID} if self.emit_sdt else set())
        all_pids = pids + self.pmt_pids()
        if len(set(all_pids)) != len(all_pids):
            raise ValueError("service and PMT PIDs must be distinct")
        if reserved & set(all_pids):
            raise ValueError("service/PMT PIDs must avoid 0x0000, 0x1FFF (and 0x0011 with SDT)")
        sids = [s.service_id for s in self.services]
        if len(set(sids)) != len(sids) or 0 in sids:
            raise ValueError("service ids must be distinct and nonzero")
        pcr_floor = 2 * PACKET_BITS / self.pcr_interval
        for s in self.services:
            if s.min_rate < pcr_floor:
                raise ValueError(f"service {s.service_id}: min_rate below {pcr_floor:.0f} bps "
                                 f"cannot sustain the PCR interval")
        need = math.fsum(s.min_rate for s in self.services) + self.psi_rate
        if need >= self.channel_rate:
            raise Infeasible(f"PSI + minimum rates ({need:.0f} bps) exceed channel rate "
                             f"{self.channel_rate} bps")


@dataclass
class GopRecord:
    index: int
    first_slot: int
    slots: int
    psi_packets: int
    null_packets: int
    rates: dict        # service_id -> allocated/encoder rate (bps)
    packets: dict      # service_id -> packets emitted
    allocation: Optional[AllocationResult] = None
    data: bytes = field(default=b"", repr=False)


class StreamGenerator:
    """Packet-exact multiplexer producing one GOP of TS bytes at a time."""

    def __init__(self, config: MuxConfig, duration: float):
        config.validate()
        self.config = config
        self.duration = duration
        C = Fraction(config.channel_rate)
        self._slot_per_s = C / PACKET_BITS
        self.total_slots = math.floor(Fraction(str(duration)) * self._slot_per_s)
        gop = Fraction(str(config.gop_duration))
        self.n_gops = max(1, math.ceil(Fraction(self.total_slots) / (gop * self._slot_per_s)))
        self._gop = gop
        self.traces = {}
        for s in config.services:
            if s.complexity_trace:
                if len(s.complexity_trace) < self.n_gops:
                    raise ValueError(f"service {s.service_id}: complexity trace shorter than "
                                     f"{self.n_gops} GOPs")
                self.traces[s.service_id] = np.asarray(s.complexity_trace, dtype=float)
            else:
                self.traces[s.service_id] = gen_complexity(
                    [config.seed, s.service_id], self.n_gops, s.profile)
        self._psi = []
        for pid, sec in config.psi_sections():
            pkts = psi.sectionize(sec, pid)
            for p in pkts:
                self._psi.append((pid, np.frombuffer(serialize_packet(p), dtype=np.uint8)))
        self._psi_interval = Fraction(str(config.psi_interval))
        self._pcr_ticks = int(round(config.pcr_interval * PCR_HZ))
        self._rng = np.random.default_rng([config.seed, 0x5EED])
        self._cc = {}
        self._last_pcr_bucket = {s.pid: -1 for s in config.services}
        self._null_row = np.frombuffer(NULL_PACKET_BYTES, dtype=np.uint8)

    def _gop_bounds(self, g: int):
        start = math.floor(g * self._gop * self._slot_per_s)
        end = math.floor((g + 1) * self._gop * self._slot_per_s)
        return min(start, self.total_slots), min(end, self.total_slots)

    def _psi_slots(self, start: int, end: int) -> list:
        per = self._psi_interval * self._slot_per_s
        k = math.ceil(Fraction(start) / per)
        out = []
        while True:
            slot = math.floor(k * per)
            if slot >= end:
                return out
            if slot >= start:
                out.append(slot)
            k += 1

    def _rates(self, g: int, capacity: float):
        cfg = self.config
        rates = {}
        abr = []
        for s in cfg.services:
            trace = self.traces[s.service_id]
            if s.mode is Mode.ABR:
                abr.append(s)
            else:
                rates[s.service_id] = encoder_rate(s, g, trace=trace)
        alloc = None
        if abr:
            budget = capacity - math.fsum(rates.values())
            alloc = allocate_equal_distortion(
                [self.traces[s.service_id][g] for s in abr], budget,
                [s.min_rate for s in abr], [s.max_rate for s in abr])
            for s, r in zip(abr, alloc.rates):
                rates[s.service_id] = encoder_rate(s, g, allocated=r)
        return rates, alloc

    def gops(self) -> Iterator[GopRecord]:
        for g in range(self.n_gops):
            start, end = self._gop_bounds(g)
            if end <= start:
                break
            yield self._build_gop(g, start, end)

    def _build_gop(self, g: int, start: int, end: int) -> GopRecord:
        cfg = self.config
        S = end - start
        gop_s = S * PACKET_BITS / cfg.channel_rate
        psi_slots = self._psi_slots(start, end)
        n_psi = len(psi_slots) * len(self._psi)
        capacity = (S - n_psi) * PACKET_BITS / gop_s
        rates, alloc = self._rates(g, capacity)

        counts = {}
        floors = {}
        for s in cfg.services:
            r = rates[s.service_id]
            n = math.floor(r * gop_s / PACKET_BITS + 1e-9)
            lo = math.ceil(s.min_rate * gop_s / PACKET_BITS - 1e-9)
            hi = math.inf if s.mode is Mode.VBR else math.floor(s.max_rate * gop_s / PACKET_BITS + 1e-9)
            counts[s.service_id] = int(min(max(n, lo), hi))
            floors[s.service_id] = lo
        over = sum(counts.values()) - (S - n_psi)
        while over > 0:
            sid = max((k for k in counts if counts[k] > floors[k]), key=counts.get, default=None)
            if sid is None:
                raise Infeasible(f"GOP {g}: services need more packets than the channel has")
            counts[sid] -= 1
            over -= 1
        n_null = S - n_psi - sum(counts.values())
        if n_null < 0:
            raise Infeasible(f"GOP {g}: rate overflow")

        # ideal positions, then a stable sort fixes slot order
        pos, kind, ref = [], [], []
        for e, slot in enumerate(psi_slots):
            for j in range(len(self._psi)):
                pos.append(np.array([slot - start + j * 1e-3]))
                kind.append(np.array([0]))
                ref.append(np.array([e * len(self._psi) + j]))
        nsv = len(cfg.services)
        for i, s in enumerate(cfg.services):
            n = counts[s.service_id]
            if n:
                phase = (i + 1) / (nsv + 2)
                pos.append((np.arange(n) + phase) * (S / n))
                kind.append(np.full(n, 1 + i))
                ref.append(np.arange(n))
        if n_null:
            pos.append((np.arange(n_null) + 0.5) * (S / n_null))
            kind.append(np.full(n_null, nsv + 1))
            ref.append(np.arange(n_null))
        pos = np.concatenate(pos)
        kind = np.concatenate(kind)
        order = np.lexsort((kind, pos))
        kind = kind[order]

        out = np.empty((S, PACKET_SIZE), dtype=np.uint8)
        out[kind == nsv + 1] = self._null_row

        psi_rows = np.flatnonzero(kind == 0)
        for row, k in zip(psi_rows, range(len(psi_rows))):
            pid, tmpl = self._psi[k % len(self._psi)]
            out[row] = tmpl
            cc = self._cc.get(pid, 0)
            out[row, 3] = (tmpl[3] & 0xF0) | cc
            self._cc[pid] = (cc + 1) % 16

        svc_mask = (kind >= 1) & (kind <= nsv)
        n_svc = int(svc_mask.sum())
        if n_svc:
            out[svc_mask] = np.frombuffer(self._rng.bytes(n_svc * PACKET_SIZE),
                                          dtype=np.uint8).reshape(n_svc, PACKET_SIZE)
        for i, s in enumerate(cfg.services):
            rows = np.flatnonzero(kind == 1 + i)
            if not rows.size:
                continue
            cc0 = self._cc.get(s.pid, 0)
            cc = (cc0 + np.arange(rows.size)) % 16
            self._cc[s.pid] = int((cc0 + rows.size) % 16)
            out[rows, 0] = 0x47
            out[rows, 1] = s.pid >> 8
            out[rows, 2] = s.pid & 0xFF
            out[rows, 3] = 0x10 | cc
            ticks = (start + rows).astype(np.int64) * (PACKET_BITS * PCR_HZ) // cfg.channel_rate
            bucket = ticks // self._pcr_ticks
            prev = np.concatenate(([self._last_pcr_bucket[s.pid]], bucket[:-1]))
            self._last_pcr_bucket[s.pid] = int(bucket[-1])
            pr = rows[bucket != prev]
            if pr.size:
                t = ticks[bucket != prev]
                base = (t // 300) % (1 << 33)
                v = (base << 15) | (0x3F << 9) | (t % 300)
                out[pr, 3] = 0x30 | cc[bucket != prev]
                out[pr, 4] = 7
                out[pr, 5] = 0x10
                for b in range(6):
                    out[pr, 6 + b] = (v >> (8 * (5 - b))) & 0xFF

        return GopRecord(
            index=g, first_slot=start, slots=S, psi_packets=n_psi, null_packets=n_null,
            rates=rates, packets=counts, allocation=alloc, data=out.tobytes(),
        )


def iter_stream(config: MuxConfig, duration: float) -> Iterator[GopRecord]:
    return StreamGenerator(config, duration).gops()


def generate_stream(config: MuxConfig, duration: float) -> bytes:
    return b"".join(rec.data for rec in iter_stream(config, duration))


def distortion_comparison(config: MuxConfig, duration: float):
    """Per-GOP max distortion of the closed-loop allocator and of an equal split.

    Uses the same complexity traces the generator would; returns two arrays
    of length ``n_gops``.  Only ABR services take part.
    """
    gen = StreamGenerator(config, duration)
    abr = [s for s in config.services if s.mode is Mode.ABR]
    if not abr:
        raise ValueError("no ABR services to allocate")
    others = [s for s in config.services if s.mode is not Mode.ABR]
    lo = [s.min_rate for s in abr]
    hi = [s.max_rate for s in abr]
    closed, static = [], []
    for g in range(gen.n_gops):
        fixed = math.fsum(encoder_rate(s, g, trace=gen.traces[s.service_id]) for s in others)
        budget = config.channel_rate - config.psi_rate - fixed
        c = [gen.traces[s.service_id][g] for s in abr]
        closed.append(max(allocate_equal_distortion(c, budget, lo, hi).distortions))
        static.append(max(equal_split(c, budget, lo, hi).distortions))
    return np.array(closed), np.array(static)
