import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from checks import output_pats, transparency_violations
from tsmux import fixtures, psi
from tsmux.analyzer import measure, null_fraction
from tsmux.inserter import (DataChunk, Incomplete, InsertionConfig, Inserter, MissingPat, NoCapacity,
                            NoData, PidConflict, extract, insert, insert_stream, message_id_for,
                            plan_insertion, split_payload)
from tsmux.statmux import generate_stream
from tsmux.ts import (NULL_PACKET_BYTES, NULL_PID, PACKET_SIZE, BadSync, TsError, make_packet,
                      packet_array, pids_array, serialize_packet)

DATA_PID, PMT_PID = 0x1FF0, 0x1FF1


def cfg(**kw):
    kw.setdefault("new_program_number", 0xFF00)
    kw.setdefault("data_pid", DATA_PID)
    kw.setdefault("pmt_pid", PMT_PID)
    return InsertionConfig(**kw)


@given(st.binary(max_size=1000), st.integers(0, 2**32 - 1), st.integers(0, 50))
def test_chunk_round_trip(payload, mid, idx):
    chunk = DataChunk(mid, idx, idx + 1, 12345, payload)
    raw = chunk.to_section()
    assert raw[0] == 0x80 and raw[1] >> 4 == 0x7
    assert psi.crc32_mpeg(raw) == 0
    assert DataChunk.from_section(raw) == chunk


def test_chunk_errors():
    raw = bytearray(DataChunk(1, 0, 1, 3, b"abc").to_section())
    raw[-5] ^= 1
    with pytest.raises(psi.CrcMismatch):
        DataChunk.from_section(bytes(raw))
    with pytest.raises(ValueError):
        DataChunk(1, 0, 1, 2000, b"x" * 1001).to_section()
    with pytest.raises(psi.MalformedBody):
        DataChunk.from_section(DataChunk(1, 5, 2, 0, b"").to_section())


@given(st.binary(max_size=5000))
def test_split_payload(payload):
    chunks = split_payload(payload)
    assert b"".join(c.payload for c in chunks) == payload
    assert all(len(c.payload) <= 1000 for c in chunks)
    assert {(c.message_id, c.chunk_count, c.total_length) for c in chunks} == {
        (message_id_for(payload), len(chunks), len(payload))}
    assert [c.chunk_index for c in chunks] == list(range(len(chunks)))


def test_config_validation():
    with pytest.raises(ValueError):
        cfg(data_pid=0x1FFF)
    with pytest.raises(ValueError):
        cfg(pmt_pid=DATA_PID)
    with pytest.raises(ValueError):
        cfg(reserve_fraction=1.0)
    with pytest.raises(ValueError):
        cfg(pmt_interval=2.0)


def test_plan_insertion(cbr_stream):
    rep = measure(cbr_stream)
    est = plan_insertion(rep, 0.2)
    assert est == pytest.approx(rep.null_fraction * rep.total_bitrate * 0.8 - 1504 / 0.5)
    full = measure(generate_stream(fixtures.statmux_config(seed=1, n_services=3, profile="Simple"), 2.0))
    if full.null_fraction * full.total_bitrate * 0.8 <= 3008:
        with pytest.raises(NoCapacity):
            plan_insertion(full)


def test_round_trip_and_transparency(cbr_stream):
    payload = os.urandom(300_000)
    out, rep = insert(cbr_stream, cfg(), payload)
    assert transparency_violations(cbr_stream, out, DATA_PID, PMT_PID) == []
    back, integrity = extract(out, DATA_PID)
    assert back == payload and integrity.complete
    assert rep.payload_complete and rep.warnings == []
    assert rep.chunks_sent == rep.chunks_total == 300
    assert rep.payload_bytes_sent == len(payload)
    assert rep.packets_substituted == rep.data_packets_sent + rep.pmt_packets_sent
    assert null_fraction(out) <= null_fraction(cbr_stream)


def test_pat_regenerated(cbr_stream):
    out, rep = insert(cbr_stream, cfg(), b"hello")
    before = psi.parse_pat(psi.Section.from_bytes(output_pats(cbr_stream)[0]))
    pats = {psi.parse_pat(psi.Section.from_bytes(raw)) for raw in output_pats(out)}
    assert pats == {before.with_program(0xFF00, PMT_PID)}
    assert rep.pat_packets_rewritten == len(np.flatnonzero(pids_array(packet_array(cbr_stream)) == 0))


def test_new_service_visible_to_analyzer(cbr_stream):
    out, _ = insert(cbr_stream, cfg(repeat=True), os.urandom(50_000))
    rep = measure(out)
    prog = rep.program(0xFF00)
    assert prog.pmt_pid == PMT_PID and prog.pids == [DATA_PID]
    arr = packet_array(out)
    pmt = psi.assemble_sections(arr[r].tobytes() for r in np.flatnonzero(pids_array(arr) == PMT_PID))
    parsed = psi.parse_pmt(pmt[0])
    assert parsed.pcr_pid == NULL_PID
    assert parsed.streams == (psi.PmtStream(psi.STREAM_TYPE_PRIVATE_DATA, DATA_PID),)


def test_pmt_repetition_rate(cbr_stream):
    out, rep = insert(cbr_stream, cfg(repeat=True), os.urandom(10_000))
    arr = packet_array(out)
    rows = np.flatnonzero(pids_array(arr) == PMT_PID)
    gaps = np.diff(rows) * 1504 / 20e6
    assert gaps.max() <= 1.0
    assert gaps.min() >= 0.5 - 1e-3
    assert np.all(np.diff(arr[rows, 3] & 0xF).astype(int) % 16 == 1)


@pytest.mark.parametrize("reserve", [0.0, 0.2, 0.5, 0.9])
def test_reserve_ratio_held(cbr_stream, reserve):
    out, rep = insert(cbr_stream, cfg(reserve_fraction=reserve, repeat=True), os.urandom(100_000))
    pids_in = pids_array(packet_array(cbr_stream))
    pids_out = pids_array(packet_array(out))
    null_idx = np.flatnonzero(pids_in == NULL_PID)
    substituted = np.cumsum(pids_out[null_idx] != NULL_PID)
    seen = np.arange(1, null_idx.size + 1)
    # running ratio never above 1 - reserve
    assert np.all(substituted <= np.floor((1 - reserve) * seen + 1e-9))
    assert substituted[-1] == np.floor((1 - reserve) * null_idx.size + 1e-9)


def test_exhausted_payload_passes_nulls_through(cbr_stream):
    out, rep = insert(cbr_stream, cfg(), b"x" * 10)
    pids_out = pids_array(packet_array(out))
    data_rows = np.flatnonzero(pids_out == DATA_PID)
    assert data_rows.size == 1
    # once the payload is out, neither data nor PMT packets follow
    assert np.flatnonzero(np.isin(pids_out, (DATA_PID, PMT_PID)))[-1] == data_rows[0]
    assert rep.pmt_packets_sent == 1


def test_truncated_payload_warns():
    data = generate_stream(fixtures.null_share_config(0.5e6, channel_rate=38_000_000), 2.0)
    out, rep = insert(data, cfg(), os.urandom(2_000_000))
    assert not rep.payload_complete
    assert any(w.startswith("payload truncated") for w in rep.warnings)
    with pytest.raises(Incomplete) as exc:
        extract(out, DATA_PID)
    assert exc.value.report.received == rep.chunks_sent
    assert len(exc.value.payload) == rep.payload_bytes_sent


def test_streaming_matches_whole(cbr_stream):
    payload = os.urandom(77_777)
    whole, rep = insert(cbr_stream, cfg(), payload)
    ins = Inserter(cfg(), payload)
    parts = []
    step = 12_345  # not a packet multiple
    for i in range(0, len(cbr_stream), step):
        parts.append(ins.feed(cbr_stream[i:i + step]))
    parts.append(ins.finish())
    assert b"".join(parts) == whole
    assert ins.report == rep


def test_insert_stream_generator(cbr_stream):
    gen = insert_stream(cbr_stream, cfg(), b"abc")
    chunks = []
    while True:
        try:
            chunks.append(next(gen))
        except StopIteration as stop:
            report = stop.value
            break
    assert b"".join(chunks) == insert(cbr_stream, cfg(), b"abc")[0]
    assert report.payload_complete


def test_pid_conflicts(cbr_stream):
    with pytest.raises(PidConflict):
        insert(cbr_stream, cfg(data_pid=0x100), b"x")
    with pytest.raises(PidConflict):
        insert(cbr_stream, cfg(pmt_pid=0x1000), b"x")
    with pytest.raises(PidConflict):
        insert(cbr_stream, cfg(new_program_number=1), b"x")


def test_missing_pat():
    pkts = serialize_packet(make_packet(0x100, b"\x00" * 184)) * 10 + NULL_PACKET_BYTES * 10
    with pytest.raises(MissingPat):
        insert(pkts, cfg(), b"x")


def test_no_nulls_warns():
    data = generate_stream(fixtures.statmux_config(seed=0), 2.0)
    arr = packet_array(data).copy()
    keep = pids_array(arr) != NULL_PID
    out, rep = insert(arr[keep].tobytes(), cfg(), b"payload")
    assert rep.null_packets_seen == 0 and rep.pmt_packets_sent == 0
    assert any(w.startswith("NoCapacity") for w in rep.warnings)


def test_rejects_misaligned_input(cbr_stream):
    with pytest.raises(BadSync):
        insert(b"\x00" + cbr_stream[:PACKET_SIZE * 10], cfg(), b"x")
    ins = Inserter(cfg(), b"x")
    ins.feed(cbr_stream[:PACKET_SIZE * 3 + 5])
    with pytest.raises(TsError):
        ins.finish()


def test_transport_error_nulls_not_used(cbr_stream):
    arr = packet_array(cbr_stream).copy()
    nulls = pids_array(arr) == NULL_PID
    arr[nulls, 1] |= 0x80
    out, rep = insert(arr.tobytes(), cfg(), b"x" * 100)
    assert rep.packets_substituted == 0


def test_extract_errors(cbr_stream):
    with pytest.raises(NoData):
        extract(cbr_stream, DATA_PID)
    out, _ = insert(cbr_stream, cfg(), os.urandom(20_000))
    arr = packet_array(out).copy()
    rows = np.flatnonzero(pids_array(arr) == DATA_PID)
    arr[rows[30], 100] ^= 0xFF  # corrupt one chunk's section body
    with pytest.raises(Incomplete) as exc:
        extract(arr.tobytes(), DATA_PID)
    assert exc.value.report.crc_failures == 1
    assert len(exc.value.report.missing) == 1
    dropped = np.delete(packet_array(out), rows[50], axis=0)
    with pytest.raises(Incomplete) as exc:
        extract(dropped.tobytes(), DATA_PID)
    assert exc.value.report.continuity_gaps == 1


def test_carousel_repeats_and_extract_dedups(cbr_stream):
    payload = os.urandom(5_000)
    out, rep = insert(cbr_stream, cfg(repeat=True), payload)
    assert rep.chunks_sent > 5 * rep.chunks_total
    back, integrity = extract(out, DATA_PID)
    assert back == payload and integrity.duplicates > 0


@settings(max_examples=10, deadline=None)
@given(st.binary(max_size=20_000), st.sampled_from([0.0, 0.3]), st.integers(0, 5))
def test_round_trip_property(payload, reserve, seed):
    data = generate_stream(fixtures.cbr_config(seed=seed), 2.0)
    out, rep = insert(data, cfg(reserve_fraction=reserve), payload)
    assert transparency_violations(data, out, DATA_PID, PMT_PID) == []
    assert extract(out, DATA_PID)[0] == payload
