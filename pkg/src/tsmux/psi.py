"""PSI sections: CRC32/MPEG-2, PAT/PMT codecs, section assembly and packetization."""

from __future__ import annotations

import zlib

from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

from .ts import TsPacket, make_packet, parse_packet

MAX_PSI_SECTION_LENGTH = 1021
MAX_PRIVATE_SECTION_LENGTH = 4093

PAT_TABLE_ID = 0x00
PMT_TABLE_ID = 0x02
SDT_TABLE_ID = 0x42
SDT_PID = 0x0011

STREAM_TYPE_PRIVATE_DATA = 0x06


class PsiError(ValueError):
    pass


class WrongTableId(PsiError):
    pass


class MalformedBody(PsiError):
    pass


class CrcMismatch(PsiError):
    pass


# CRC-32/MPEG-2 is zlib's CRC-32 with input and register bit order flipped
# and no final XOR, so the C implementation can do the heavy lifting.
_REVERSE_BITS = bytes(int(f"{i:08b}"[::-1], 2) for i in range(256))


def _reflect32(x: int) -> int:
    return int(f"{x:032b}"[::-1], 2)


def crc32_mpeg(data: bytes, crc: int = 0xFFFFFFFF) -> int:
    """CRC-32/MPEG-2 (poly 0x04C11DB7, init 0xFFFFFFFF, MSB first, no final XOR).

    ``crc`` continues a previous computation.
    """
    state = _reflect32(crc) ^ 0xFFFFFFFF
    out = zlib.crc32(bytes(data).translate(_REVERSE_BITS), state)
    return _reflect32(out ^ 0xFFFFFFFF)


def bump_version(v: int) -> int:
    return (v + 1) % 32


@dataclass(frozen=True)
class Section:
    """Long-form (section_syntax_indicator = 1) PSI section."""

    table_id: int
    table_id_extension: int
    body: bytes = b""
    version: int = 0
    current_next: bool = True
    section_number: int = 0
    last_section_number: int = 0
    private_indicator: bool = False

    section_syntax = True

    @property
    def length(self) -> int:
        return 5 + len(self.body) + 4

    def _header_and_body(self) -> bytes:
        if self.length > MAX_PRIVATE_SECTION_LENGTH:
            raise PsiError(f"section length {self.length} too large")
        b1 = 0x80 | (self.private_indicator << 6) | 0x30 | (self.length >> 8)
        return bytes((
            self.table_id, b1, self.length & 0xFF,
            self.table_id_extension >> 8, self.table_id_extension & 0xFF,
            0xC0 | (self.version << 1) | self.current_next,
            self.section_number, self.last_section_number,
        )) + self.body

    @property
    def crc(self) -> int:
        return crc32_mpeg(self._header_and_body())

    def to_bytes(self) -> bytes:
        head = self._header_and_body()
        return head + crc32_mpeg(head).to_bytes(4, "big")

    @classmethod
    def from_bytes(cls, data: bytes, check_crc: bool = True) -> "Section":
        if len(data) < 12:
            raise MalformedBody("section shorter than 12 bytes")
        if not data[1] & 0x80:
            raise MalformedBody("not a long-form section")
        length = ((data[1] & 0x0F) << 8) | data[2]
        if len(data) != 3 + length:
            raise MalformedBody(f"declared length {length} disagrees with {len(data)} bytes")
        if check_crc and crc32_mpeg(data) != 0:
            raise CrcMismatch(f"CRC check failed on table {data[0]:#04x}")
        return cls(
            table_id=data[0],
            table_id_extension=(data[3] << 8) | data[4],
            body=bytes(data[8:-4]),
            version=(data[5] >> 1) & 0x1F,
            current_next=bool(data[5] & 1),
            section_number=data[6],
            last_section_number=data[7],
            private_indicator=bool(data[1] & 0x40),
        )


@dataclass(frozen=True)
class Pat:
    transport_stream_id: int
    version: int = 0
    programs: tuple = ()  # ((program_number, pmt_pid), ...)

    def __post_init__(self):
        object.__setattr__(self, "programs", tuple((int(n), int(p)) for n, p in self.programs))
        numbers = [n for n, _ in self.programs]
        if len(set(numbers)) != len(numbers):
            raise PsiError("duplicate program_number in PAT")

    def program_map(self) -> dict:
        """program_number -> PMT PID, excluding the network PID entry."""
        return {n: p for n, p in self.programs if n != 0}

    def with_program(self, program_number: int, pmt_pid: int) -> "Pat":
        return Pat(self.transport_stream_id, bump_version(self.version),
                   self.programs + ((program_number, pmt_pid),))


def parse_pat(s: Section) -> Pat:
    if s.table_id != PAT_TABLE_ID:
        raise WrongTableId(f"expected PAT (0x00), got {s.table_id:#04x}")
    if len(s.body) % 4:
        raise MalformedBody("PAT body is not a multiple of 4 bytes")
    b = s.body
    programs = tuple(((b[i] << 8) | b[i + 1], ((b[i + 2] & 0x1F) << 8) | b[i + 3])
                     for i in range(0, len(b), 4))
    return Pat(s.table_id_extension, s.version, programs)


def serialize_pat(p: Pat) -> Section:
    body = b"".join(bytes((n >> 8, n & 0xFF, 0xE0 | (pid >> 8), pid & 0xFF))
                    for n, pid in p.programs)
    return Section(PAT_TABLE_ID, p.transport_stream_id, body, version=p.version)


@dataclass(frozen=True)
class PmtStream:
    stream_type: int
    elementary_pid: int
    es_info: bytes = b""


@dataclass(frozen=True)
class Pmt:
    program_number: int
    pcr_pid: int
    streams: tuple = ()
    program_info: bytes = b""
    version: int = 0

    def __post_init__(self):
        object.__setattr__(self, "streams", tuple(self.streams))
        pids = [s.elementary_pid for s in self.streams]
        if len(set(pids)) != len(pids):
            raise PsiError("duplicate elementary_pid in PMT")


def parse_pmt(s: Section) -> Pmt:
    if s.table_id != PMT_TABLE_ID:
        raise WrongTableId(f"expected PMT (0x02), got {s.table_id:#04x}")
    b = s.body
    if len(b) < 4:
        raise MalformedBody("PMT body shorter than 4 bytes")
    pcr_pid = ((b[0] & 0x1F) << 8) | b[1]
    info_len = ((b[2] & 0x0F) << 8) | b[3]
    pos = 4 + info_len
    if pos > len(b):
        raise MalformedBody("program_info_length overruns body")
    program_info = bytes(b[4:pos])
    streams = []
    while pos < len(b):
        if pos + 5 > len(b):
            raise MalformedBody("truncated elementary stream loop")
        es_len = ((b[pos + 3] & 0x0F) << 8) | b[pos + 4]
        end = pos + 5 + es_len
        if end > len(b):
            raise MalformedBody("ES_info_length overruns body")
        streams.append(PmtStream(b[pos], ((b[pos + 1] & 0x1F) << 8) | b[pos + 2], bytes(b[pos + 5:end])))
        pos = end
    return Pmt(s.table_id_extension, pcr_pid, tuple(streams), program_info, s.version)


def serialize_pmt(p: Pmt) -> Section:
    out = bytearray((0xE0 | (p.pcr_pid >> 8), p.pcr_pid & 0xFF,
                     0xF0 | (len(p.program_info) >> 8), len(p.program_info) & 0xFF))
    out += p.program_info
    for s in p.streams:
        out += bytes((s.stream_type, 0xE0 | (s.elementary_pid >> 8), s.elementary_pid & 0xFF,
                      0xF0 | (len(s.es_info) >> 8), len(s.es_info) & 0xFF))
        out += s.es_info
    return Section(PMT_TABLE_ID, p.program_number, bytes(out), version=p.version)


# -- SDT: service names only ------------------------------------------------

def parse_sdt_names(s: Section) -> dict:
    """service_id -> service name, from a service_descriptor (tag 0x48) if present."""
    if s.table_id not in (SDT_TABLE_ID, 0x46):
        raise WrongTableId(f"expected SDT, got {s.table_id:#04x}")
    b = s.body
    names = {}
    pos = 3  # original_network_id(2) + reserved(1)
    while pos + 5 <= len(b):
        sid = (b[pos] << 8) | b[pos + 1]
        loop_len = ((b[pos + 3] & 0x0F) << 8) | b[pos + 4]
        d = pos + 5
        end = min(d + loop_len, len(b))
        while d + 2 <= end:
            tag, dlen = b[d], b[d + 1]
            if tag == 0x48 and d + 2 + dlen <= end:
                desc = b[d + 2:d + 2 + dlen]
                plen = desc[1]
                nlen = desc[2 + plen]
                raw = bytes(desc[3 + plen:3 + plen + nlen])
                names[sid] = raw.decode("latin-1")
            d += 2 + dlen
        pos = end
    return names


def build_sdt(transport_stream_id: int, names: dict, original_network_id: int = 1,
              provider: str = "") -> Section:
    """Minimal actual-TS SDT carrying one service_descriptor per service (fixture use)."""
    body = bytearray((original_network_id >> 8, original_network_id & 0xFF, 0xFF))
    prov = provider.encode("latin-1")
    for sid, name in names.items():
        nm = name.encode("latin-1")
        desc = bytes((0x01, len(prov))) + prov + bytes((len(nm),)) + nm
        loop = bytes((0x48, len(desc))) + desc
        # EIT flags clear, running_status=4, free_CA=0
        body += bytes((sid >> 8, sid & 0xFF, 0xFC, 0x80 | (len(loop) >> 8), len(loop) & 0xFF))
        body += loop
    return Section(SDT_TABLE_ID, transport_stream_id, bytes(body))


# -- assembly and packetization --------------------------------------------

@dataclass
class SectionAssembler:
    """Reassembles sections from the packets of one PID.

    ``feed`` returns the raw bytes of each completed section.  Long-form
    sections failing CRC are dropped and counted; a continuity break
    drops the partial section and is counted.
    """

    check_crc: bool = True
    crc_errors: int = 0
    continuity_gaps: int = 0
    _buf: Optional[bytearray] = field(default=None, repr=False)
    _last_cc: Optional[int] = field(default=None, repr=False)

    def feed(self, packet: Union[TsPacket, bytes]) -> list:
        if not isinstance(packet, TsPacket):
            packet = parse_packet(bytes(packet))
        if not packet.adaptation_field_control & 0b01:
            return []
        cc = packet.continuity_counter
        if self._last_cc is not None:
            if cc == self._last_cc:
                return []  # duplicate packet
            if cc != (self._last_cc + 1) % 16:
                if self._buf is not None:
                    self.continuity_gaps += 1
                self._buf = None
        self._last_cc = cc
        payload = packet.payload
        out = []
        if packet.payload_unit_start:
            if not payload:
                return out
            pointer = payload[0]
            if self._buf is not None:
                self._buf += payload[1:1 + pointer]
                out += self._drain()
            self._buf = bytearray(payload[1 + pointer:])
        elif self._buf is not None:
            self._buf += payload
        else:
            return out
        out += self._drain()
        return out

    def _drain(self) -> list:
        out = []
        buf = self._buf
        while buf is not None:
            if not buf or buf[0] == 0xFF:
                buf = None
                break
            if len(buf) < 3:
                break
            total = 3 + (((buf[1] & 0x0F) << 8) | buf[2])
            if len(buf) < total:
                break
            sec = bytes(buf[:total])
            del buf[:total]
            if self.check_crc and sec[1] & 0x80 and crc32_mpeg(sec) != 0:
                self.crc_errors += 1
            else:
                out.append(sec)
        self._buf = buf
        return out


def assemble_sections(packets: Iterable, assembler: Optional[SectionAssembler] = None) -> list:
    """Long-form sections carried by ``packets`` (all on one PID)."""
    asm = assembler if assembler is not None else SectionAssembler()
    out = []
    for p in packets:
        for raw in asm.feed(p):
            if raw[1] & 0x80:
                out.append(Section.from_bytes(raw, check_crc=False))
    return out


def sectionize(section: Union[Section, bytes], pid: int, cc_start: int = 0) -> list:
    data = section.to_bytes() if isinstance(section, Section) else bytes(section)
    chunks = [b"\x00" + data[:183]]
    chunks += [data[i:i + 184] for i in range(183, len(data), 184)]
    return [make_packet(pid, chunk, cc=(cc_start + i) % 16, pusi=(i == 0), pad=True)
            for i, chunk in enumerate(chunks)]


def packets_needed(section_size: int) -> int:
    """Number of packets ``sectionize`` emits for a section of this many bytes."""
    return 1 + max(0, -(-(section_size - 183) // 184))

