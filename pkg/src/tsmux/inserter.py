"""Null-packet service inserter and its extractor client.

The inserter is a single-pass packet transform: every input packet yields
exactly one output packet at the same position.  PAT packets are rewritten
in place to announce one extra program, and null packets (subject to a
reserve ratio) carry the new service's PMT and a sequence of DataChunk
private sections.  Everything else is copied untouched.

DataChunk section layout (all integers big-endian)::

    table_id            8   0x80
    syntax/private/res  4   0b0111
    section_length     12   bytes following this field
    format_version      8   0x01
    message_id         32
    chunk_index        32
    chunk_count        32
    total_length       32   bytes in the whole message
    payload             n   n <= 1000
    CRC_32             32   CRC32/MPEG-2 over everything before it
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from . import psi
from .analyzer import MuxReport
from .ts import (NULL_PID, PACKET_BITS, PACKET_SIZE, PAT_PID, PCR_HZ, BadSync, TsError, TsPacket,
                 check_sync_array, make_packet, packet_array, parse_packet, pcr_diff, pcr_rows,
                 pids_array, serialize_packet)

DATA_TABLE_ID = 0x80
DATA_FORMAT_VERSION = 0x01
MAX_CHUNK_PAYLOAD = 1000
DATA_HEADER_SIZE = 3 + 1 + 16

DEFAULT_RESERVE = 0.2
DEFAULT_PMT_INTERVAL = 0.5
VERIFY_SPAN = 1.0
VERIFY_MAX_PACKETS = 100_000


class InsertionError(ValueError):
    pass


class NoCapacity(InsertionError):
    pass


class PidConflict(InsertionError):
    pass


class PatTooLarge(InsertionError):
    pass


class MultiSectionPat(InsertionError):
    pass


class MissingPat(InsertionError):
    pass


class NoData(InsertionError):
    pass


class Incomplete(InsertionError):
    def __init__(self, message, payload: bytes, report: "IntegrityReport"):
        super().__init__(message)
        self.payload = payload
        self.report = report


@dataclass(frozen=True)
class InsertionConfig:
    new_program_number: int
    data_pid: int
    pmt_pid: int
    reserve_fraction: float = DEFAULT_RESERVE
    service_label: str = ""
    pmt_interval: float = DEFAULT_PMT_INTERVAL
    repeat: bool = False
    nominal_rate: int = 38_000_000

    def __post_init__(self):
        if self.data_pid == self.pmt_pid:
            raise ValueError("data_pid and pmt_pid must differ")
        for name in ("data_pid", "pmt_pid"):
            pid = getattr(self, name)
            if not 0 < pid < NULL_PID:
                raise ValueError(f"{name} {pid:#x} must avoid 0x0000 and 0x1FFF")
        if not 0 < self.new_program_number <= 0xFFFF:
            raise ValueError("new_program_number must be in 1..65535")
        if not 0 <= self.reserve_fraction < 1:
            raise ValueError("reserve_fraction must be in [0, 1)")
        if self.pmt_interval <= 0 or self.pmt_interval > 1:
            raise ValueError("pmt_interval must be in (0, 1] seconds")


# -- wire format -------------------------------------------------------------

@dataclass(frozen=True)
class DataChunk:
    message_id: int
    chunk_index: int
    chunk_count: int
    total_length: int
    payload: bytes

    def to_section(self) -> bytes:
        if len(self.payload) > MAX_CHUNK_PAYLOAD:
            raise ValueError(f"chunk payload {len(self.payload)} > {MAX_CHUNK_PAYLOAD}")
        length = 1 + 16 + len(self.payload) + 4
        head = bytes((DATA_TABLE_ID, 0x70 | (length >> 8), length & 0xFF, DATA_FORMAT_VERSION))
        head += b"".join(v.to_bytes(4, "big") for v in
                         (self.message_id, self.chunk_index, self.chunk_count, self.total_length))
        head += self.payload
        return head + psi.crc32_mpeg(head).to_bytes(4, "big")

    @classmethod
    def from_section(cls, data: bytes) -> "DataChunk":
        if len(data) < DATA_HEADER_SIZE + 4 or data[0] != DATA_TABLE_ID:
            raise psi.MalformedBody("not a DataChunk section")
        length = ((data[1] & 0x0F) << 8) | data[2]
        if len(data) != 3 + length:
            raise psi.MalformedBody("DataChunk length mismatch")
        if psi.crc32_mpeg(data) != 0:
            raise psi.CrcMismatch("DataChunk CRC failure")
        if data[3] != DATA_FORMAT_VERSION:
            raise psi.MalformedBody(f"unknown DataChunk version {data[3]}")
        mid, idx, count, total = (int.from_bytes(data[4 + 4 * k:8 + 4 * k], "big") for k in range(4))
        chunk = cls(mid, idx, count, total, bytes(data[DATA_HEADER_SIZE:-4]))
        if idx >= count:
            raise psi.MalformedBody("chunk_index >= chunk_count")
        return chunk


def message_id_for(payload: bytes) -> int:
    return int.from_bytes(hashlib.sha256(payload).digest()[:4], "big")


def split_payload(payload: bytes, chunk_size: int = MAX_CHUNK_PAYLOAD) -> list:
    if not 0 < chunk_size <= MAX_CHUNK_PAYLOAD:
        raise ValueError("chunk_size out of range")
    mid = message_id_for(payload)
    pieces = [payload[i:i + chunk_size] for i in range(0, len(payload), chunk_size)] or [b""]
    return [DataChunk(mid, i, len(pieces), len(payload), p) for i, p in enumerate(pieces)]


# -- capacity planning ---------------------------------------------------------

def plan_insertion(report: MuxReport, reserve: float = DEFAULT_RESERVE,
                   pmt_interval: float = DEFAULT_PMT_INTERVAL) -> float:
    """Usable data rate (bits/s) left after the reserve and PMT repetition."""
    if not 0 <= reserve < 1:
        raise ValueError("reserve must be in [0, 1)")
    estimate = report.null_fraction * report.total_bitrate * (1 - reserve) - PACKET_BITS / pmt_interval
    if estimate <= 0:
        raise NoCapacity(f"no usable null capacity (estimate {estimate:.0f} bps)")
    return estimate


# -- inserter --------------------------------------------------------------------

@dataclass
class InsertionReport:
    input_packets: int = 0
    null_packets_seen: int = 0
    packets_substituted: int = 0
    pat_packets_rewritten: int = 0
    pmt_packets_sent: int = 0
    data_packets_sent: int = 0
    chunks_sent: int = 0
    chunks_total: int = 0
    payload_bytes_sent: int = 0
    payload_complete: bool = False
    achieved_data_rate: float = 0.0
    residual_null_fraction: float = 0.0
    duration: float = 0.0
    warnings: list = field(default_factory=list)


class Inserter:
    """Streaming null-packet substitution.

    ``feed`` accepts byte chunks of any size and returns the output bytes
    ready so far; the first second of input (by PCR) is held back while
    PIDs and PSI are checked for conflicts.  ``finish`` flushes the rest.
    """

    def __init__(self, config: InsertionConfig, payload: bytes):
        self.config = config
        self.report = InsertionReport()
        self._chunks = split_payload(bytes(payload))
        self.report.chunks_total = len(self._chunks)
        self._next_chunk = 0
        self._dbuf = np.empty((0, PACKET_SIZE), dtype=np.uint8)  # packetized chunks not yet sent
        self._dpos = 0
        self._dends = []          # [row end in _dbuf, payload bytes] per buffered chunk
        self._data_cc = 0
        self._pmt_cc = 0
        self._exhausted = False
        pmt = psi.Pmt(config.new_program_number, NULL_PID,
                      (psi.PmtStream(psi.STREAM_TYPE_PRIVATE_DATA, config.data_pid),))
        pmt_pkts = psi.sectionize(psi.serialize_pmt(pmt), config.pmt_pid)
        if len(pmt_pkts) != 1:
            raise InsertionError("service PMT must fit one packet")
        self._pmt_row = np.frombuffer(serialize_packet(pmt_pkts[0]), dtype=np.uint8)
        self._last_pmt = None
        # input state
        self._rem = b""
        self._index = 0
        self._verifying = True
        self._held = []
        self._held_packets = 0
        self._seen = np.zeros(NULL_PID + 1, dtype=bool)
        self._asm = {PAT_PID: psi.SectionAssembler()}
        self._pat: Optional[psi.Pat] = None
        self._pat_row_payload = None
        self._pmts = {}
        # time base from the first PID carrying PCR
        self._ref = None
        self._pcr_first = None    # (index, ticks)
        self._pcr_last = None     # (index, unwrapped ticks)
        self._pcr_raw = None
        self._prev_pcr_ticks = None

    # -- public -------------------------------------------------------------
    def feed(self, data) -> bytes:
        buf = self._rem + bytes(data)
        n = len(buf) // PACKET_SIZE
        self._rem = buf[n * PACKET_SIZE:]
        if n == 0:
            return b""
        arr = packet_array(buf[:n * PACKET_SIZE])
        check_sync_array(arr, self._index + self._held_packets)
        if self._verifying:
            self._observe(arr)
            self._held.append(arr)
            self._held_packets += len(arr)
            if self._verify_done():
                return self._release()
            return b""
        return self._process(arr)

    def finish(self) -> bytes:
        if self._rem:
            raise TsError(f"{len(self._rem)} trailing bytes do not form a packet")
        out = self._release() if self._verifying else b""
        r = self.report
        r.duration = float(self._duration())
        data_packets = r.data_packets_sent
        r.achieved_data_rate = data_packets * PACKET_BITS / r.duration if r.duration > 0 else 0.0
        nulls_out = r.null_packets_seen - r.packets_substituted
        r.residual_null_fraction = nulls_out / r.input_packets if r.input_packets else 0.0
        r.payload_complete = self._exhausted
        if r.null_packets_seen == 0:
            r.warnings.append("NoCapacity: input carries no null packets; "
                              "the new service PMT was never sent")
        elif r.pmt_packets_sent == 0:
            r.warnings.append("NoCapacity: no null packet could be substituted")
        if not self._exhausted:
            r.warnings.append(f"payload truncated: {r.chunks_sent} of {r.chunks_total} chunks sent")
        return out

    # -- verification span -------------------------------------------------
    def _observe(self, arr):
        pids = pids_array(arr)
        self._seen[np.unique(pids)] = True
        self._track_pcr(arr, pids, self._index + self._held_packets)
        self._track_psi(arr, pids, rewrite=False)

    def _verify_done(self) -> bool:
        if self._held_packets >= VERIFY_MAX_PACKETS:
            return True
        if self._pcr_first is None or self._pcr_last is None:
            return False
        return self._pcr_last[1] - self._pcr_first[1] >= VERIFY_SPAN * PCR_HZ and self._pat is not None

    def _release(self) -> bytes:
        self._verifying = False
        if self._pat is None:
            if self._held_packets == 0:
                return b""
            raise MissingPat("no PAT found in the verification span")
        self._check_conflicts()
        held, self._held = self._held, []
        self._held_packets = 0
        # replay the held packets through the normal transform with PAT and
        # PCR tracking restarted, so they are rewritten exactly as in streaming
        self._asm = {PAT_PID: psi.SectionAssembler()}
        self._pcr_first = self._pcr_last = self._pcr_raw = None
        self._prev_pcr_ticks = None
        return b"".join(self._process(a) for a in held)

    def _check_conflicts(self):
        cfg = self.config
        for pid in (cfg.data_pid, cfg.pmt_pid):
            if self._seen[pid]:
                raise PidConflict(f"PID {pid:#x} already carried by the input stream")
        self._check_psi_conflicts()

    def _check_psi_conflicts(self):
        cfg = self.config
        if self._pat is None:
            return
        ours = {cfg.data_pid, cfg.pmt_pid}
        if cfg.new_program_number in dict(self._pat.programs):
            raise PidConflict(f"program {cfg.new_program_number} already in the PAT")
        if ours & {pid for _, pid in self._pat.programs}:
            raise PidConflict("configured PID collides with a PMT/network PID in the PAT")
        for pmt in self._pmts.values():
            used = {s.elementary_pid for s in pmt.streams} | {pmt.pcr_pid}
            if ours & used:
                raise PidConflict(f"configured PID collides with program {pmt.program_number}")

    # -- PSI / PCR tracking ----------------------------------------------------
    def _track_psi(self, arr, pids, rewrite: bool, out=None):
        start = 0
        while start < len(pids):
            watch = list(self._asm)
            rows = np.flatnonzero(np.isin(pids[start:], watch)) + start
            start = len(pids)
            for r in rows.tolist():
                pid = int(pids[r])
                raw_pkt = arr[r].tobytes()
                for raw in self._asm[pid].feed(raw_pkt):
                    self._on_section(pid, raw)
                if rewrite and pid == PAT_PID:
                    self._rewrite_pat(out, r, raw_pkt)
                if len(self._asm) != len(watch):
                    start = r + 1
                    break

    def _on_section(self, pid, raw):
        if not raw[1] & 0x80:
            return
        sec = psi.Section.from_bytes(raw, check_crc=False)
        if pid == PAT_PID and sec.table_id == psi.PAT_TABLE_ID:
            if sec.last_section_number > 0:
                raise MultiSectionPat("input PAT spans several sections")
            pat = psi.parse_pat(sec)
            if pat != self._pat:
                self._pat = pat
                self._pat_row_payload = self._regenerate_pat(pat)
            for _, pmt_pid in pat.program_map().items():
                self._asm.setdefault(pmt_pid, psi.SectionAssembler())
            if not self._verifying:
                self._check_psi_conflicts()
        elif sec.table_id == psi.PMT_TABLE_ID:
            try:
                pmt = psi.parse_pmt(sec)
            except psi.PsiError:
                return
            self._pmts[pmt.program_number] = pmt
            if not self._verifying:
                self._check_psi_conflicts()

    def _regenerate_pat(self, pat: psi.Pat) -> bytes:
        cfg = self.config
        if cfg.new_program_number in dict(pat.programs):
            raise PidConflict(f"program {cfg.new_program_number} already in the PAT")
        section = psi.serialize_pat(pat.with_program(cfg.new_program_number, cfg.pmt_pid)).to_bytes()
        if len(section) + 1 > 184:
            raise PatTooLarge(f"regenerated PAT ({len(section)} bytes) does not fit one packet")
        return b"\x00" + section

    def _rewrite_pat(self, out, r, raw_pkt):
        if self._pat_row_payload is None or raw_pkt[1] & 0x80:
            return  # no PAT yet, or transport_error set: pass through
        orig = parse_packet(raw_pkt)
        pkt = make_packet(PAT_PID, self._pat_row_payload, cc=orig.continuity_counter, pusi=True,
                          pcr=orig.pcr, pad=True)
        out[r] = np.frombuffer(serialize_packet(pkt), dtype=np.uint8)
        self.report.pat_packets_rewritten += 1

    def _track_pcr(self, arr, pids, base):
        if self._ref is None:
            rows, _ = pcr_rows(arr)
            if not rows.size:
                return None, None
            self._ref = int(pids[rows[0]])
        rows, ticks = pcr_rows(arr, pids == self._ref)
        cum = np.empty(len(ticks), dtype=np.int64)
        for k, t in enumerate(ticks.tolist()):
            if self._pcr_raw is None:
                c = t
            else:
                c = self._pcr_last[1] + pcr_diff(t, self._pcr_raw)
            self._pcr_raw = t
            self._pcr_last = (base + rows[k], c)
            if self._pcr_first is None:
                self._pcr_first = self._pcr_last
            cum[k] = c
        return rows, cum

    def _duration(self) -> float:
        n = self.report.input_packets
        if self._pcr_first and self._pcr_last and self._pcr_last[0] > self._pcr_first[0]:
            per_packet = (self._pcr_last[1] - self._pcr_first[1]) / PCR_HZ / (
                self._pcr_last[0] - self._pcr_first[0])
            return n * per_packet
        return n * PACKET_BITS / self.config.nominal_rate

    # -- the transform -----------------------------------------------------------
    def _process(self, arr) -> bytes:
        base = self._index
        self._index += len(arr)
        self.report.input_packets += len(arr)
        pids = pids_array(arr)
        if np.any((pids == self.config.data_pid) | (pids == self.config.pmt_pid)):
            raise PidConflict("configured PID appeared in the input stream")
        out = arr.copy()
        pcr_idx, pcr_ticks = self._track_pcr(arr, pids, base)
        self._track_psi(arr, pids, rewrite=True, out=out)

        null_rows = np.flatnonzero((pids == NULL_PID) & ((arr[:, 1] & 0x80) == 0))
        if null_rows.size == 0:
            return out.tobytes()
        r = self.report
        keep = 1 - self.config.reserve_fraction
        seen0 = r.null_packets_seen
        r.null_packets_seen += null_rows.size
        if self._exhausted:
            return out.tobytes()
        # running-ratio throttle: while data remains, substitutions track
        # floor(keep * seen) exactly, so substitute where that floor steps up
        quota = np.floor(keep * (seen0 + np.arange(null_rows.size + 1)) + 1e-9).astype(np.int64)
        rows = null_rows[np.diff(quota) > 0]
        if rows.size == 0:
            return out.tobytes()
        # time of each row: latest reference PCR at or before it
        times = self._row_times(rows, base, pcr_idx, pcr_ticks)
        r.packets_substituted += self._fill(out, rows, times)
        return out.tobytes()

    def _row_times(self, rows, base, pcr_idx, pcr_ticks):
        nominal = (base + rows) * (PACKET_BITS / self.config.nominal_rate)
        if pcr_idx is None or self._pcr_first is None:
            return nominal
        prev = self._prev_pcr_ticks
        if pcr_idx.size:
            k = np.searchsorted(pcr_idx, rows, side="right") - 1
            t = np.where(k >= 0, pcr_ticks[np.maximum(k, 0)], -1 if prev is None else prev)
            self._prev_pcr_ticks = int(pcr_ticks[-1])
        else:
            t = np.full(rows.size, -1 if prev is None else prev)
        secs = (t - self._pcr_first[1]) / PCR_HZ
        return np.where(t < 0, nominal, secs)

    def _fill(self, out, rows, times) -> int:
        """Write PMT and data packets into ``out[rows]``; returns rows used."""
        cfg = self.config
        r = self.report
        j = 0
        while j < rows.size and not self._exhausted:
            last = self._last_pmt
            if last is None or times[j] - last >= cfg.pmt_interval or times[j] < last:
                self._last_pmt = float(times[j])
                row = self._pmt_row.copy()
                row[3] = (row[3] & 0xF0) | self._pmt_cc
                self._pmt_cc = (self._pmt_cc + 1) % 16
                out[rows[j]] = row
                r.pmt_packets_sent += 1
                j += 1
                continue
            due = (times[j:] - last >= cfg.pmt_interval) | (times[j:] < last)
            stop = j + int(np.argmax(due)) if due.any() else rows.size
            data = self._take_data(stop - j)
            n = len(data)
            out[rows[j:j + n]] = data
            j += n
        return j

    def _take_data(self, k: int):
        """Up to ``k`` data packet rows with continuity counters applied."""
        cfg = self.config
        while len(self._dbuf) - self._dpos < k:
            if self._next_chunk >= len(self._chunks):
                if not cfg.repeat:
                    break
                self._next_chunk = 0
            self._refill()
        end = min(self._dpos + k, len(self._dbuf))
        rows = self._dbuf[self._dpos:end].copy()
        rows[:, 3] = (rows[:, 3] & 0xF0) | ((self._data_cc + np.arange(len(rows))) % 16)
        self._data_cc = (self._data_cc + len(rows)) % 16
        self._dpos = end
        r = self.report
        r.data_packets_sent += len(rows)
        done = 0
        while done < len(self._dends) and self._dends[done][0] <= end:
            r.chunks_sent += 1
            r.payload_bytes_sent += self._dends[done][1]
            done += 1
        del self._dends[:done]
        if (self._dpos == len(self._dbuf) and self._next_chunk >= len(self._chunks)
                and not cfg.repeat):
            self._exhausted = True
        return rows

    def _refill(self, max_chunks: int = 256):
        # drop consumed rows, then packetize the next run of chunks
        self._dbuf = self._dbuf[self._dpos:]
        self._dends = [[e - self._dpos, n] for e, n in self._dends]
        self._dpos = 0
        stop = min(self._next_chunk + max_chunks, len(self._chunks))
        # each section: pointer_field 0, section bytes, 0xFF fill to whole packets
        bodies, firsts = [], []
        end = len(self._dbuf)
        for chunk in self._chunks[self._next_chunk:stop]:
            sec = b"\x00" + chunk.to_section()
            n = -(-len(sec) // 184)
            bodies.append(sec + b"\xff" * (n * 184 - len(sec)))
            firsts.append(end)
            end += n
            self._dends.append([end, len(chunk.payload)])
        self._next_chunk = stop
        body = np.frombuffer(b"".join(bodies), dtype=np.uint8).reshape(-1, 184)
        head = np.empty((len(body), 4), dtype=np.uint8)
        pid = self.config.data_pid
        head[:] = (0x47, pid >> 8, pid & 0xFF, 0x10)
        head[np.asarray(firsts) - len(self._dbuf), 1] |= 0x40
        parts = [self._dbuf, np.hstack((head, body))]
        self._dbuf = np.concatenate(parts)


def _input_chunks(stream, chunk_packets: int = 20000) -> Iterator[bytes]:
    if isinstance(stream, (bytes, bytearray, memoryview)):
        data = memoryview(stream)
        if len(data) and data[0] != 0x47:
            raise BadSync("input does not start on a packet boundary")
        step = chunk_packets * PACKET_SIZE
        for i in range(0, len(data), step):
            yield data[i:i + step]
        return
    for item in stream:
        yield serialize_packet(item) if isinstance(item, TsPacket) else item


def insert_stream(stream, config: InsertionConfig, payload: bytes):
    """Generator of output chunks; returns the InsertionReport via ``StopIteration.value``."""
    ins = Inserter(config, payload)
    for chunk in _input_chunks(stream):
        out = ins.feed(chunk)
        if out:
            yield out
    out = ins.finish()
    if out:
        yield out
    return ins.report


def insert(stream, config: InsertionConfig, payload: bytes):
    """Whole-stream convenience wrapper: ``(output bytes, InsertionReport)``."""
    ins = Inserter(config, payload)
    parts = [ins.feed(chunk) for chunk in _input_chunks(stream)]
    parts.append(ins.finish())
    return b"".join(parts), ins.report


# -- extractor client ------------------------------------------------------------

@dataclass
class IntegrityReport:
    message_id: Optional[int] = None
    chunk_count: Optional[int] = None
    total_length: Optional[int] = None
    received: int = 0
    missing: list = field(default_factory=list)
    crc_failures: int = 0
    malformed: int = 0
    duplicates: int = 0
    continuity_gaps: int = 0
    other_messages: list = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return self.chunk_count is not None and not self.missing


def extract(stream, data_pid: int):
    """Reassemble the DataChunk message carried on ``data_pid``.

    Returns ``(payload, IntegrityReport)``.  Raises ``NoData`` when the PID
    carries nothing, ``Incomplete`` (with the partial payload and report)
    when chunks are missing.
    """
    asm = psi.SectionAssembler(check_crc=False)
    rep = IntegrityReport()
    messages = {}   # message_id -> {index: chunk}
    order = []
    seen_packets = 0
    for chunk in _input_chunks(stream):
        arr = packet_array(chunk)
        rows = np.flatnonzero(pids_array(arr) == data_pid)
        seen_packets += rows.size
        for r in rows.tolist():
            for raw in asm.feed(arr[r].tobytes()):
                try:
                    dc = DataChunk.from_section(raw)
                except psi.CrcMismatch:
                    rep.crc_failures += 1
                    continue
                except psi.PsiError:
                    rep.malformed += 1
                    continue
                if dc.message_id not in messages:
                    messages[dc.message_id] = {}
                    order.append((dc.message_id, dc.chunk_count, dc.total_length))
                slot = messages[dc.message_id]
                if dc.chunk_index in slot:
                    rep.duplicates += 1
                else:
                    slot[dc.chunk_index] = dc
    rep.continuity_gaps = asm.continuity_gaps
    if not order:
        if seen_packets == 0:
            raise NoData(f"no packets on PID {data_pid:#x}")
        if rep.crc_failures or rep.malformed or rep.continuity_gaps:
            raise Incomplete("no intact DataChunk section", b"", rep)
        raise NoData(f"no DataChunk sections on PID {data_pid:#x}")
    mid, count, total = order[0]
    rep.message_id, rep.chunk_count, rep.total_length = mid, count, total
    rep.other_messages = [m for m, _, _ in order[1:]]
    got = messages[mid]
    rep.received = len(got)
    rep.missing = [i for i in range(count) if i not in got]
    payload = b"".join(got[i].payload for i in sorted(got))
    if rep.missing:
        raise Incomplete(f"{len(rep.missing)} of {count} chunks missing", payload, rep)
    if len(payload) != total:
        raise Incomplete(f"reassembled {len(payload)} bytes, expected {total}", payload, rep)
    return payload, rep
