"""Multiplex analysis: per-PID windowed bitrates, null share, mux-mode verdict."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from . import psi
from .ts import (NULL_PID, PACKET_BITS, PACKET_SIZE, PAT_PID, PCR_HZ, TsPacket, check_sync_array,
                 packet_array, pcr_diff, pcr_rows, pids_array, serialize_packet, sync_scan)

DEFAULT_WINDOW = 0.5
DEFAULT_TAU = 0.10
MIN_WINDOWS = 10

STATIC = "Static"
STATISTICAL = "Statistical"
UNKNOWN = "Unknown"


class AnalyzerError(ValueError):
    pass


class EmptyStream(AnalyzerError):
    pass


class NoPcr(AnalyzerError):
    pass


@dataclass(frozen=True)
class ClockSource:
    """``mode`` is ``"pcr"`` (time from PCRs on ``reference_pid``, or on the
    first PID seen carrying one) or ``"nominal"`` (fixed ``bits_per_second``)."""

    mode: str = "pcr"
    reference_pid: Optional[int] = None
    bits_per_second: Optional[int] = None

    def __post_init__(self):
        if self.mode not in ("pcr", "nominal"):
            raise ValueError(f"unknown clock mode {self.mode!r}")
        if self.mode == "nominal" and not (self.bits_per_second and self.bits_per_second > 0):
            raise ValueError("nominal clock needs bits_per_second > 0")

    @classmethod
    def pcr(cls, reference_pid: Optional[int] = None) -> "ClockSource":
        return cls("pcr", reference_pid=reference_pid)

    @classmethod
    def nominal(cls, bits_per_second: int) -> "ClockSource":
        return cls("nominal", bits_per_second=int(bits_per_second))

    def describe(self) -> str:
        if self.mode == "nominal":
            return f"nominal:{self.bits_per_second}"
        return "pcr" if self.reference_pid is None else f"pcr:{self.reference_pid:#06x}"


@dataclass
class PidStats:
    pid: int
    packet_count: int
    byte_count: int
    series: list  # [(window_index, bits_per_second), ...]
    min: float
    max: float
    mean: float


@dataclass
class ProgramStats:
    program_number: int
    pmt_pid: int
    pids: list
    video_pid: Optional[int]
    series: list
    min: float
    max: float
    mean: float
    name: str = ""


@dataclass
class MuxReport:
    total_bitrate: float
    duration: float
    total_packets: int
    window_length: float
    averaging: bool
    window_starts: list
    window_durations: list
    total_series: list
    pids: list
    programs: list
    null_fraction: float
    verdict: str
    clock: str
    transport_stream_id: Optional[int] = None
    tau: float = DEFAULT_TAU

    def pid(self, pid: int) -> PidStats:
        for p in self.pids:
            if p.pid == pid:
                return p
        raise KeyError(pid)

    def program(self, number: int) -> ProgramStats:
        for p in self.programs:
            if p.program_number == number:
                return p
        raise KeyError(number)

    @property
    def n_windows(self) -> int:
        return len(self.window_starts)


# means use exact rational sums rounded once, so a constant series averages
# to itself and min <= mean <= max holds without float slop

def _stats(values):
    if not values:
        return 0.0, 0.0, 0.0
    mean = sum(map(Fraction, values)) / len(values)
    return float(min(values)), float(max(values)), float(mean)


def _running_mean(values):
    out, acc = [], Fraction(0)
    for k, v in enumerate(values, 1):
        acc += Fraction(v)
        out.append(float(acc / k))
    return out


def _cv(values) -> float:
    arr = np.asarray(values, dtype=float)
    m = arr.mean()
    return float(arr.std() / m) if m > 0 else 0.0


class Analyzer:
    """Single-pass accumulator.  ``feed`` 188-aligned chunks, then ``finish``."""

    def __init__(self, clock: Optional[ClockSource] = None, window: float = DEFAULT_WINDOW,
                 averaging: bool = False, tau: float = DEFAULT_TAU):
        if window <= 0:
            raise ValueError("window must be > 0")
        self.clock = clock or ClockSource.pcr()
        self.window = float(window)
        self.averaging = averaging
        self.tau = tau
        self._n = 0
        self._bins = {}           # (window, pid) -> packets
        self._pid_counts = {}
        self._ref = self.clock.reference_pid
        # PCR time base state
        self._pending_pids = []   # uint16 arrays not yet timed
        self._pending_start = 0   # global index of first pending packet
        self._points = []         # [(global index, unwrapped ticks)], first two and last kept
        self._last_raw = None
        self._t0 = None
        self._t_last = None
        self._pkt_seconds = None
        # PSI
        self._asm = {PAT_PID: psi.SectionAssembler(), psi.SDT_PID: psi.SectionAssembler()}
        self.pat: Optional[psi.Pat] = None
        self.pmts: dict = {}
        self.sdt_names: dict = {}

    @property
    def packet_count(self) -> int:
        return self._n

    @property
    def pid_counts(self) -> dict:
        return dict(self._pid_counts)

    # -- feeding ----------------------------------------------------------
    def feed(self, chunk) -> None:
        arr = chunk if isinstance(chunk, np.ndarray) else packet_array(chunk)
        if arr.size == 0:
            return
        check_sync_array(arr, self._n)
        pids = pids_array(arr)
        self._feed_psi(arr, pids)
        base = self._n
        self._n += len(arr)
        counts = np.bincount(pids, minlength=0)
        for pid in np.flatnonzero(counts):
            self._pid_counts[int(pid)] = self._pid_counts.get(int(pid), 0) + int(counts[pid])
        if self.clock.mode == "nominal":
            sec = PACKET_BITS / self.clock.bits_per_second
            t = (base + np.arange(len(arr))) * sec
            self._pkt_seconds = sec
            self._bin(pids, t)
            return
        self._feed_pcr(arr, pids, base)

    def _feed_psi(self, arr, pids):
        start = 0
        while start < len(pids):
            watch = list(self._asm)
            rows = np.flatnonzero(np.isin(pids[start:], watch)) + start
            start = len(pids)
            for r in rows:
                pid = int(pids[r])
                for raw in self._asm[pid].feed(bytes(arr[r])):
                    self._on_section(pid, raw)
                if len(self._asm) != len(watch):
                    # a PAT introduced new PMT PIDs; rescan the rest of the chunk
                    start = r + 1
                    break

    def _on_section(self, pid, raw):
        if not raw[1] & 0x80:
            return
        try:
            sec = psi.Section.from_bytes(raw, check_crc=False)
            if pid == PAT_PID and sec.table_id == psi.PAT_TABLE_ID:
                self.pat = psi.parse_pat(sec)
                for num, pmt_pid in self.pat.program_map().items():
                    self._asm.setdefault(pmt_pid, psi.SectionAssembler())
            elif sec.table_id == psi.PMT_TABLE_ID:
                pmt = psi.parse_pmt(sec)
                self.pmts[pmt.program_number] = pmt
            elif pid == psi.SDT_PID and sec.table_id == psi.SDT_TABLE_ID:
                self.sdt_names.update(psi.parse_sdt_names(sec))
        except psi.PsiError:
            pass

    def _feed_pcr(self, arr, pids, base):
        if self._ref is None:
            rows, _ = pcr_rows(arr)
            if rows.size:
                self._ref = int(pids[rows[0]])
        self._pending_pids.append(pids)
        if self._ref is None:
            return
        rows, ticks = pcr_rows(arr, pids == self._ref)
        for r, t in zip(rows.tolist(), ticks.tolist()):
            if self._last_raw is None:
                cum = t
            else:
                cum = self._points[-1][1] + pcr_diff(t, self._last_raw)
            self._last_raw = t
            self._points.append((base + r, cum))
        if len(self._points) >= 2:
            self._resolve(final=False)
            # first two PCRs (head extrapolation) and last two (tail) suffice from here on
            del self._points[2:-2]

    def _resolve(self, final: bool):
        pts = self._points
        pending = np.concatenate(self._pending_pids) if self._pending_pids else np.zeros(0, np.uint16)
        idx = self._pending_start + np.arange(pending.size)
        limit = pending.size if final else int(np.searchsorted(idx, pts[-1][0], side="right"))
        if limit == 0:
            self._pending_pids = [pending]
            return
        pi = np.array([p[0] for p in pts], dtype=np.float64)
        pt = np.array([p[1] for p in pts], dtype=np.float64)
        i = idx[:limit].astype(np.float64)
        t = np.interp(i, pi, pt)
        # linear extrapolation outside the known PCR span
        head_slope = (pt[1] - pt[0]) / (pi[1] - pi[0])
        tail_slope = (pt[-1] - pt[-2]) / (pi[-1] - pi[-2])
        lo = i < pi[0]
        hi = i > pi[-1]
        t[lo] = pt[0] + (i[lo] - pi[0]) * head_slope
        t[hi] = pt[-1] + (i[hi] - pi[-1]) * tail_slope
        self._pkt_seconds = tail_slope / PCR_HZ
        self._bin(pending[:limit], t / PCR_HZ)
        self._pending_pids = [pending[limit:]]
        self._pending_start += limit

    def _bin(self, pids, t):
        if self._t0 is None:
            self._t0 = float(t[0])
        self._t_last = float(t[-1])
        w = np.floor((t - self._t0) / self.window).astype(np.int64)
        np.maximum(w, 0, out=w)
        keys, counts = np.unique(w * 8192 + pids.astype(np.int64), return_counts=True)
        for k, c in zip(keys.tolist(), counts.tolist()):
            key = divmod(k, 8192)
            self._bins[key] = self._bins.get(key, 0) + c

    # -- reporting ----------------------------------------------------------
    def finish(self) -> MuxReport:
        if self._n == 0:
            raise EmptyStream("empty stream")
        if self.clock.mode == "pcr":
            if len(self._points) < 2:
                ref = "any PID" if self._ref is None else f"PID {self._ref:#06x}"
                raise NoPcr(f"fewer than 2 PCRs on {ref}")
            self._resolve(final=True)
        duration = float(self._t_last + self._pkt_seconds - self._t0)
        if duration <= 0:
            raise AnalyzerError("non-positive stream duration")
        n_win = max(w for w, _ in self._bins) + 1
        durations = [self.window] * n_win
        tail = duration - (n_win - 1) * self.window
        if tail < self.window - self._pkt_seconds:
            if n_win > 1:
                # partial trailing window: its bytes count, its rate would be noise
                n_win -= 1
                durations.pop()
            else:
                durations[-1] = tail
        counts = {}
        for (w, pid), c in self._bins.items():
            if w < n_win:
                counts.setdefault(pid, np.zeros(n_win))[w] += c
        raw = {pid: [float(x) for x in arr * PACKET_BITS / np.asarray(durations)]
               for pid, arr in counts.items()}
        total_raw = [float(x) for x in sum(counts.values()) * PACKET_BITS / np.asarray(durations)]
        programs_raw = self._programs(raw, n_win)
        zeros = [0.0] * n_win
        verdict = _classify([raw.get(p.video_pid, zeros) for p in programs_raw
                             if p.video_pid is not None], n_win, self.tau)

        shape = _running_mean if self.averaging else list
        pid_stats = []
        for pid in sorted(self._pid_counts):
            series = shape(raw.get(pid, [0.0] * n_win))
            lo, hi, mean = _stats(series)
            n = self._pid_counts[pid]
            pid_stats.append(PidStats(pid, n, n * PACKET_SIZE, list(enumerate(series)), lo, hi, mean))
        programs = []
        for p in programs_raw:
            series = shape([v for _, v in p.series])
            lo, hi, mean = _stats(series)
            programs.append(ProgramStats(p.program_number, p.pmt_pid, p.pids, p.video_pid,
                                         list(enumerate(series)), lo, hi, mean, p.name))
        return MuxReport(
            total_bitrate=self._n * PACKET_BITS / duration,
            duration=duration,
            total_packets=self._n,
            window_length=self.window,
            averaging=self.averaging,
            window_starts=[w * self.window for w in range(n_win)],
            window_durations=durations,
            total_series=list(enumerate(shape(total_raw))),
            pids=pid_stats,
            programs=programs,
            null_fraction=self._pid_counts.get(NULL_PID, 0) / self._n,
            verdict=verdict,
            clock=ClockSource(self.clock.mode, self._ref, self.clock.bits_per_second).describe(),
            transport_stream_id=self.pat.transport_stream_id if self.pat else None,
            tau=self.tau,
        )

    def _programs(self, raw, n_win):
        out = []
        if self.pat is None:
            return out
        for num, pmt_pid in self.pat.program_map().items():
            pmt = self.pmts.get(num)
            es = [s.elementary_pid for s in pmt.streams] if pmt else []
            zeros = [0.0] * n_win
            series = [math.fsum(v) for v in zip(*(raw.get(p, zeros) for p in es))] if es else zeros
            means = {p: math.fsum(raw.get(p, zeros)) for p in es}
            video = max(es, key=lambda p: means[p]) if es else None
            lo, hi, mean = _stats(series)
            out.append(ProgramStats(num, pmt_pid, es, video,
                                    list(enumerate(series)), lo, hi, mean,
                                    self.sdt_names.get(num, "")))
        return out



def _classify(video_series, n_windows: int, tau: float) -> str:
    if len(video_series) < 2 or n_windows < MIN_WINDOWS:
        return UNKNOWN
    above = sum(_cv(series) > tau for series in video_series)
    if above >= 2:
        return STATISTICAL
    if above == 0:
        return STATIC
    return UNKNOWN


def classify_multiplexing(report: MuxReport, tau: Optional[float] = None) -> str:
    """Static / Statistical / Unknown from the CV of each program's video PID.

    Needs a real-time (non-averaged) report; averaged reports give Unknown.
    """
    if report.averaging:
        return UNKNOWN
    tau = report.tau if tau is None else tau
    series = [[v for _, v in report.pid(p.video_pid).series]
              for p in report.programs if p.video_pid is not None]
    return _classify(series, report.n_windows, tau)


def _chunks(stream, chunk_packets: int = 20000):
    """Normalize bytes / packet lists / chunk iterables into 188-aligned chunks."""
    if isinstance(stream, (bytes, bytearray, memoryview)):
        data = memoryview(stream)
        if not len(data):
            return
        off = sync_scan(bytes(data[:PACKET_SIZE * 64]))
        step = chunk_packets * PACKET_SIZE
        for i in range(off, len(data), step):
            yield data[i:i + step]
        return
    batch = []
    for item in stream:
        if isinstance(item, TsPacket):
            batch.append(serialize_packet(item))
            if len(batch) >= chunk_packets:
                yield b"".join(batch)
                batch = []
        else:
            if batch:
                yield b"".join(batch)
                batch = []
            yield item
    if batch:
        yield b"".join(batch)


def measure(stream, clock: Optional[ClockSource] = None, window: float = DEFAULT_WINDOW,
            averaging: bool = False, tau: float = DEFAULT_TAU) -> MuxReport:
    """Analyze a whole stream.

    ``stream`` may be a bytes-like buffer (sync is acquired first), an
    iterable of 188-aligned byte chunks, or an iterable of ``TsPacket``.
    """
    an = Analyzer(clock, window, averaging, tau)
    for chunk in _chunks(stream):
        an.feed(chunk)
    return an.finish()


def null_fraction(stream) -> float:
    total = nulls = 0
    for chunk in _chunks(stream):
        pids = pids_array(packet_array(chunk))
        total += pids.size
        nulls += int(np.count_nonzero(pids == NULL_PID))
    if total == 0:
        raise EmptyStream("empty stream")
    return nulls / total


@dataclass
class CapacitySummary:
    rows: list  # [(label, max_bps, min_bps), ...]
    total_max: float
    total_min: float
    capacity: float

    @property
    def difference_at_max(self) -> float:
        return self.capacity - self.total_max

    @property
    def difference_at_min(self) -> float:
        return self.capacity - self.total_min

    def as_text(self) -> str:
        lines = [f"{'Service':<28}{'Max (Mbps)':>12}{'Min (Mbps)':>12}"]
        for label, hi, lo in self.rows:
            lines.append(f"{label:<28}{hi / 1e6:>12.2f}{lo / 1e6:>12.2f}")
        lines.append(f"{'Total':<28}{self.total_max / 1e6:>12.2f}{self.total_min / 1e6:>12.2f}")
        lines.append(f"{'Channel capacity':<28}{self.capacity / 1e6:>12.2f}{self.capacity / 1e6:>12.2f}")
        lines.append(f"{'Difference':<28}{self.difference_at_max / 1e6:>12.2f}"
                     f"{self.difference_at_min / 1e6:>12.2f}")
        return "\n".join(lines)


def capacity_summary(report: MuxReport, capacity: float, services=None) -> CapacitySummary:
    """Per-service windowed max/min video rate against the channel capacity.

    ``services`` selects programs: ``None`` for all, an iterable of program
    numbers, or a mapping ``program_number -> label``.
    """
    if services is None:
        chosen = [(p.program_number, p.name or f"Program {p.program_number}") for p in report.programs]
    elif isinstance(services, dict):
        chosen = list(services.items())
    else:
        chosen = [(n, report.program(n).name or f"Program {n}") for n in services]
    rows = []
    for number, label in chosen:
        prog = report.program(number)
        if prog.video_pid is None:
            continue
        stats = report.pid(prog.video_pid)
        rows.append((label, stats.max, stats.min))
    return CapacitySummary(rows, math.fsum(r[1] for r in rows), math.fsum(r[2] for r in rows),
                           float(capacity))
