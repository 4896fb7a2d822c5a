"""MPEG-2 transport packet codec.

Bit-exact parse/serialize of 188-byte packets, sync acquisition, null
packets and PCR handling.  The ``*_array`` helpers at the bottom work on
``(n, 188)`` uint8 arrays and are what the analyzer and inserter use on
their hot paths.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

PACKET_SIZE = 188
PACKET_BITS = PACKET_SIZE * 8
SYNC_BYTE = 0x47
NULL_PID = 0x1FFF
PAT_PID = 0x0000
MAX_PID = 0x1FFF

PCR_HZ = 27_000_000
PCR_WRAP = (1 << 33) * 300

SYNC_LOCK_COUNT = 5

AFC_PAYLOAD = 0b01
AFC_ADAPTATION = 0b10
AFC_BOTH = 0b11


class TsError(ValueError):
    pass


class BadSync(TsError):
    pass


class BadAdaptationLength(TsError):
    pass


class PacketOverflow(TsError):
    pass


class SyncNotFound(TsError, LookupError):
    pass


@dataclass(frozen=True)
class Pcr:
    base: int
    extension: int = 0

    def __post_init__(self):
        if not 0 <= self.base < (1 << 33):
            raise ValueError(f"PCR base out of range: {self.base}")
        if not 0 <= self.extension < 300:
            raise ValueError(f"PCR extension out of range: {self.extension}")

    @property
    def ticks(self) -> int:
        return self.base * 300 + self.extension

    @property
    def seconds(self) -> float:
        return self.ticks / PCR_HZ

    @classmethod
    def from_ticks(cls, ticks: int) -> "Pcr":
        ticks %= PCR_WRAP
        return cls(ticks // 300, ticks % 300)

    def to_bytes(self) -> bytes:
        # 33-bit base, 6 reserved bits (all ones), 9-bit extension
        v = (self.base << 15) | (0x3F << 9) | self.extension
        return v.to_bytes(6, "big")

    @classmethod
    def from_bytes(cls, b: bytes) -> "Pcr":
        v = int.from_bytes(b[:6], "big")
        return cls(v >> 15, v & 0x1FF)


def pcr_diff(a: int, b: int) -> int:
    """Signed tick difference ``a - b`` modulo the PCR wrap period."""
    d = (a - b) % PCR_WRAP
    if d >= PCR_WRAP // 2:
        d -= PCR_WRAP
    return d


def pcr_before(a: int, b: int) -> bool:
    return pcr_diff(a, b) < 0


@dataclass(frozen=True)
class AdaptationField:
    """Adaptation field.

    ``length`` is the declared adaptation_field_length (the length byte
    itself is not counted).  ``other_flags`` holds the low four flag bits
    (OPCR, splicing point, private data, extension) and ``extra`` the raw
    bytes of those optional fields; whatever follows is 0xFF stuffing.
    """

    length: int
    discontinuity: bool = False
    random_access: bool = False
    priority: bool = False
    pcr: Optional[Pcr] = None
    other_flags: int = 0
    extra: bytes = b""

    def __post_init__(self):
        if not 0 <= self.length <= 183:
            raise BadAdaptationLength(f"adaptation field length {self.length}")
        if self.length == 0 and (self.discontinuity or self.random_access or self.priority
                                 or self.pcr is not None or self.other_flags or self.extra):
            raise BadAdaptationLength("zero-length adaptation field cannot carry flags")
        if self.stuffing < 0:
            raise PacketOverflow("adaptation field contents exceed declared length")

    @property
    def stuffing(self) -> int:
        if self.length == 0:
            return 0
        return self.length - 1 - (6 if self.pcr is not None else 0) - len(self.extra)

    @classmethod
    def with_pcr(cls, pcr: Optional[Pcr], length: Optional[int] = None, **flags) -> "AdaptationField":
        need = 1 + (6 if pcr is not None else 0)
        return cls(length=need if length is None else length, pcr=pcr, **flags)

    def to_bytes(self) -> bytes:
        if self.length == 0:
            return b"\x00"
        flags = ((self.discontinuity << 7) | (self.random_access << 6) | (self.priority << 5)
                 | ((self.pcr is not None) << 4) | (self.other_flags & 0x0F))
        out = bytearray((self.length, flags))
        if self.pcr is not None:
            out += self.pcr.to_bytes()
        out += self.extra
        out += b"\xff" * self.stuffing
        return bytes(out)

    @classmethod
    def from_bytes(cls, b: bytes) -> "AdaptationField":
        length = b[0]
        if length == 0:
            return cls(0)
        flags = b[1]
        pos = 2
        pcr = None
        if flags & 0x10:
            if length < 7:
                raise BadAdaptationLength("PCR flag set but adaptation field too short")
            pcr = Pcr.from_bytes(b[pos:pos + 6])
            pos += 6
        extra = bytes(b[pos:1 + length]).rstrip(b"\xff")
        return cls(length, bool(flags & 0x80), bool(flags & 0x40), bool(flags & 0x20),
                   pcr, flags & 0x0F, extra)


@dataclass(frozen=True)
class TsPacket:
    pid: int
    payload_unit_start: bool = False
    transport_error: bool = False
    priority: bool = False
    scrambling: int = 0
    adaptation_field_control: int = AFC_PAYLOAD
    continuity_counter: int = 0
    adaptation: Optional[AdaptationField] = None
    payload: bytes = field(default=b"", repr=False)

    def __post_init__(self):
        if not 0 <= self.pid <= MAX_PID:
            raise ValueError(f"PID out of range: {self.pid:#x}")
        if not 0 <= self.continuity_counter < 16:
            raise ValueError(f"continuity counter out of range: {self.continuity_counter}")
        if not 0 <= self.scrambling < 4:
            raise ValueError("scrambling control is 2 bits")
        if self.adaptation_field_control not in (AFC_PAYLOAD, AFC_ADAPTATION, AFC_BOTH):
            raise ValueError("reserved adaptation_field_control 00")
        if (self.adaptation is not None) != bool(self.adaptation_field_control & 0b10):
            raise ValueError("adaptation field presence disagrees with adaptation_field_control")
        if self.payload and not self.adaptation_field_control & 0b01:
            raise ValueError("payload present but adaptation_field_control has no payload bit")

    @property
    def is_null(self) -> bool:
        return self.pid == NULL_PID

    @property
    def pcr(self) -> Optional[Pcr]:
        return self.adaptation.pcr if self.adaptation is not None else None


def parse_packet(data: bytes) -> TsPacket:
    if len(data) != PACKET_SIZE:
        raise TsError(f"packet must be {PACKET_SIZE} bytes, got {len(data)}")
    if data[0] != SYNC_BYTE:
        raise BadSync(f"sync byte {data[0]:#04x}")
    b1, b2, b3 = data[1], data[2], data[3]
    afc = (b3 >> 4) & 0x3
    if afc == 0:
        raise TsError("reserved adaptation_field_control 00")
    adaptation = None
    pos = 4
    if afc & 0b10:
        af_len = data[4]
        if af_len > 183:
            raise BadAdaptationLength(f"adaptation field length {af_len} > 183")
        if afc == AFC_ADAPTATION and af_len != 183:
            raise BadAdaptationLength("adaptation-only packet must have length 183")
        adaptation = AdaptationField.from_bytes(data[4:5 + af_len])
        pos = 5 + af_len
    payload = bytes(data[pos:]) if afc & 0b01 else b""
    return TsPacket(
        pid=((b1 & 0x1F) << 8) | b2,
        payload_unit_start=bool(b1 & 0x40),
        transport_error=bool(b1 & 0x80),
        priority=bool(b1 & 0x20),
        scrambling=b3 >> 6,
        adaptation_field_control=afc,
        continuity_counter=b3 & 0x0F,
        adaptation=adaptation,
        payload=payload,
    )


def serialize_packet(p: TsPacket) -> bytes:
    header = bytes((
        SYNC_BYTE,
        (p.transport_error << 7) | (p.payload_unit_start << 6) | (p.priority << 5) | (p.pid >> 8),
        p.pid & 0xFF,
        (p.scrambling << 6) | (p.adaptation_field_control << 4) | p.continuity_counter,
    ))
    af = p.adaptation.to_bytes() if p.adaptation is not None else b""
    size = 4 + len(af) + len(p.payload)
    if size > PACKET_SIZE:
        raise PacketOverflow(f"adaptation field + payload = {size - 4} bytes > 184")
    if size < PACKET_SIZE:
        raise BadAdaptationLength(f"adaptation field + payload = {size - 4} bytes < 184")
    return header + af + p.payload


def make_packet(pid: int, payload: bytes = b"", cc: int = 0, pusi: bool = False,
                pcr: Optional[Pcr] = None, pad: bool = False) -> TsPacket:
    """Build a packet, sizing the adaptation field so the result is exactly 188 bytes.

    With ``pad=True`` a short payload is padded with 0xFF (section style)
    instead of using adaptation-field stuffing.
    """
    if len(payload) > 184:
        raise PacketOverflow(f"payload of {len(payload)} bytes > 184")
    if pad:
        payload = payload + b"\xff" * (184 - len(payload) - (8 if pcr is not None else 0))
    room = 184 - len(payload)
    if pcr is None and room == 0:
        return TsPacket(pid, pusi, continuity_counter=cc, payload=payload)
    af_len = room - 1
    if af_len < (7 if pcr is not None else 0):
        raise PacketOverflow("no room for adaptation field")
    afc = AFC_BOTH if payload else AFC_ADAPTATION
    af = AdaptationField(af_len, pcr=pcr) if af_len > 0 else AdaptationField(0)
    return TsPacket(pid, pusi, adaptation_field_control=afc, continuity_counter=cc,
                    adaptation=af, payload=payload)


def make_null_packet(cc: int = 0) -> TsPacket:
    return TsPacket(NULL_PID, continuity_counter=cc, payload=b"\xff" * 184)


NULL_PACKET_BYTES = serialize_packet(make_null_packet())


def is_null(p: TsPacket) -> bool:
    return p.pid == NULL_PID


def pcr_of(p: TsPacket) -> Optional[Pcr]:
    return p.pcr


def sync_scan(data: bytes, count: int = SYNC_LOCK_COUNT) -> int:
    """Smallest offset with ``count`` sync bytes at 188-byte spacing."""
    n = len(data)
    span = PACKET_SIZE * (count - 1)
    start = data.find(SYNC_BYTE)
    while 0 <= start and start + span < n:
        if all(data[start + PACKET_SIZE * i] == SYNC_BYTE for i in range(1, count)):
            return start
        start = data.find(SYNC_BYTE, start + 1)
    raise SyncNotFound("no sync lock in buffer")


def iter_packets(data: bytes):
    """Yield parsed packets from a 188-aligned buffer."""
    for off in range(0, len(data) - PACKET_SIZE + 1, PACKET_SIZE):
        yield parse_packet(data[off:off + PACKET_SIZE])


# -- vectorized helpers -----------------------------------------------------

def packet_array(data) -> np.ndarray:
    """View a 188-aligned buffer as an ``(n, 188)`` uint8 array (trailing bytes dropped)."""
    arr = np.frombuffer(data, dtype=np.uint8)
    n = arr.size // PACKET_SIZE
    return arr[:n * PACKET_SIZE].reshape(n, PACKET_SIZE)


def pids_array(arr: np.ndarray) -> np.ndarray:
    return ((arr[:, 1].astype(np.uint16) & 0x1F) << 8) | arr[:, 2]


def check_sync_array(arr: np.ndarray, first_index: int = 0) -> None:
    bad = np.flatnonzero(arr[:, 0] != SYNC_BYTE)
    if bad.size:
        raise BadSync(f"lost sync at packet {first_index + int(bad[0])}")


def pcr_rows(arr: np.ndarray, mask: Optional[np.ndarray] = None):
    """Return ``(row_indices, ticks)`` for packets carrying a PCR.

    ``mask`` restricts the search (e.g. to one PID).
    """
    has = ((arr[:, 3] & 0x20) != 0) & (arr[:, 4] >= 7) & ((arr[:, 5] & 0x10) != 0)
    if mask is not None:
        has &= mask
    rows = np.flatnonzero(has)
    if rows.size == 0:
        return rows, np.zeros(0, dtype=np.int64)
    b = arr[rows, 6:12].astype(np.int64)
    base = (b[:, 0] << 25) | (b[:, 1] << 17) | (b[:, 2] << 9) | (b[:, 3] << 1) | (b[:, 4] >> 7)
    ext = ((b[:, 4] & 1) << 8) | b[:, 5]
    return rows, base * 300 + ext
