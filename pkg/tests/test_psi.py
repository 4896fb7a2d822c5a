import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import crc32_long_division
from tsmux import psi
from tsmux.psi import (Pat, Pmt, PmtStream, Section, SectionAssembler, assemble_sections,
                       crc32_mpeg, packets_needed, parse_pat, parse_pmt, sectionize,
                       serialize_pat, serialize_pmt)
from tsmux.ts import make_packet, parse_packet, serialize_packet


def test_crc_check_value():
    assert crc32_mpeg(b"123456789") == 0x0376E6E7
    assert crc32_long_division(b"123456789") == 0x0376E6E7


@given(st.binary(max_size=600))
def test_crc_matches_long_division(data):
    assert crc32_mpeg(data) == crc32_long_division(data)


@given(st.binary(max_size=300), st.binary(max_size=300))
def test_crc_continuation(a, b):
    assert crc32_mpeg(b, crc32_mpeg(a)) == crc32_mpeg(a + b)


@given(st.binary(max_size=300))
def test_crc_over_appended_crc_is_zero(data):
    assert crc32_mpeg(data + crc32_mpeg(data).to_bytes(4, "big")) == 0


def test_pat_example_bytes():
    pat = Pat(1, 0, ((1, 0x1000), (2, 0x1001)))
    raw = serialize_pat(pat).to_bytes()
    assert len(raw) == 12 + 4 * 2
    assert raw[:8] == bytes((0x00, 0xB0, 17, 0x00, 0x01, 0xC1, 0x00, 0x00))
    assert raw[8:12] == bytes((0x00, 0x01, 0xF0, 0x00))
    assert crc32_mpeg(raw) == 0


programs = st.lists(st.tuples(st.integers(0, 0xFFFF), st.integers(0x10, 0x1FFE)),
                    max_size=40, unique_by=lambda t: t[0])


@given(st.integers(0, 0xFFFF), st.integers(0, 31), programs)
def test_pat_round_trip(tsid, version, progs):
    pat = Pat(tsid, version, tuple(progs))
    raw = serialize_pat(pat).to_bytes()
    assert len(raw) == 12 + 4 * len(progs)
    assert parse_pat(Section.from_bytes(raw)) == pat


def test_pat_program_map_skips_network_pid():
    pat = Pat(1, programs=((0, 0x10), (5, 0x100)))
    assert pat.program_map() == {5: 0x100}


def test_with_program_bumps_version_mod_32():
    pat = Pat(1, 31, ((1, 0x100),))
    new = pat.with_program(2, 0x200)
    assert new.version == 0
    assert new.programs == ((1, 0x100), (2, 0x200))


def test_duplicate_program_rejected():
    with pytest.raises(psi.PsiError):
        Pat(1, programs=((1, 0x100), (1, 0x101)))


streams = st.lists(st.builds(PmtStream, st.integers(0, 255), st.integers(0x20, 0x1FFE),
                             st.binary(max_size=20)), max_size=12, unique_by=lambda s: s.elementary_pid)


@given(st.integers(1, 0xFFFF), st.integers(0, 0x1FFF), streams, st.binary(max_size=30),
       st.integers(0, 31))
def test_pmt_round_trip(number, pcr_pid, strs, info, version):
    pmt = Pmt(number, pcr_pid, tuple(strs), info, version)
    assert parse_pmt(Section.from_bytes(serialize_pmt(pmt).to_bytes())) == pmt


def test_wrong_table_id():
    pmt_sec = serialize_pmt(Pmt(1, 0x100))
    with pytest.raises(psi.WrongTableId):
        parse_pat(pmt_sec)
    with pytest.raises(psi.WrongTableId):
        parse_pmt(serialize_pat(Pat(1)))


def test_crc_mismatch_detected():
    raw = bytearray(serialize_pat(Pat(1, 0, ((1, 0x100),))).to_bytes())
    raw[9] ^= 1
    with pytest.raises(psi.CrcMismatch):
        Section.from_bytes(bytes(raw))
    Section.from_bytes(bytes(raw), check_crc=False)


def test_malformed_bodies():
    with pytest.raises(psi.MalformedBody):
        Section.from_bytes(b"\x00\xb0")
    bad = Section(0x02, 1, bytes((0xE1, 0x00, 0xF0, 0x05))).to_bytes()
    with pytest.raises(psi.MalformedBody):
        parse_pmt(Section.from_bytes(bad))
    odd = Section(0x00, 1, b"\x00\x01\xe1").to_bytes()
    with pytest.raises(psi.MalformedBody):
        parse_pat(Section.from_bytes(odd))


def test_sdt_names_round_trip():
    sec = psi.build_sdt(7, {1: "Sky Sports 1", 2: "Discovery"})
    raw = sec.to_bytes()
    assert crc32_mpeg(raw) == 0
    assert psi.parse_sdt_names(Section.from_bytes(raw)) == {1: "Sky Sports 1", 2: "Discovery"}


@given(st.integers(8, 1021 + 3), st.integers(0, 15))
def test_sectionize_and_assemble(size, cc):
    body = bytes(range(256)) * 5
    sec = Section(0x02, 9, body[:size - 12])
    pkts = sectionize(sec, 0x100, cc)
    assert len(pkts) == packets_needed(len(sec.to_bytes()))
    assert [p.continuity_counter for p in pkts] == [(cc + i) % 16 for i in range(len(pkts))]
    assert pkts[0].payload_unit_start and not any(p.payload_unit_start for p in pkts[1:])
    raws = [serialize_packet(p) for p in pkts]
    assert assemble_sections(parse_packet(r) for r in raws) == [sec]


def test_assembler_pointer_field_and_two_sections_in_a_packet():
    a = Section(0x02, 1, bytes(range(200))).to_bytes()
    b = serialize_pat(Pat(1, 1, ((1, 0x100), (2, 0x200)))).to_bytes()
    # a fills the first packet; its tail precedes b, located by the pointer
    pkt1 = make_packet(0, b"\x00" + a[:183], cc=0, pusi=True)
    pkt2 = make_packet(0, bytes((len(a) - 183,)) + a[183:] + b, cc=1, pusi=True, pad=True)
    asm = SectionAssembler()
    got = asm.feed(pkt1) + asm.feed(pkt2)
    assert got == [a, b]


def test_assembler_counts_continuity_gaps_and_drops_partial():
    sec = Section(0x02, 1, bytes(400))
    pkts = sectionize(sec, 0x100)
    asm = SectionAssembler()
    out = asm.feed(pkts[0]) + asm.feed(pkts[2])
    assert out == [] and asm.continuity_gaps == 1
    # a fresh section after the gap still assembles
    out = []
    for p in sectionize(sec, 0x100, cc_start=pkts[2].continuity_counter + 1):
        out += asm.feed(p)
    assert out == [sec.to_bytes()]


def test_assembler_ignores_duplicates():
    sec = Section(0x02, 1, bytes(300))
    pkts = sectionize(sec, 0x100)
    asm = SectionAssembler()
    out = asm.feed(pkts[0]) + asm.feed(pkts[0]) + asm.feed(pkts[1])
    assert out == [sec.to_bytes()]
    assert asm.continuity_gaps == 0


def test_assembler_drops_bad_crc():
    raw = bytearray(serialize_pat(Pat(1, 0, ((1, 0x100),))).to_bytes())
    raw[-1] ^= 0xFF
    asm = SectionAssembler()
    assert asm.feed(make_packet(0, b"\x00" + bytes(raw), pusi=True, pad=True)) == []
    assert asm.crc_errors == 1


def test_assembler_waits_for_unit_start():
    sec = Section(0x02, 1, bytes(300))
    pkts = sectionize(sec, 0x100)
    asm = SectionAssembler()
    assert asm.feed(pkts[1]) == []
