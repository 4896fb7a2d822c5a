import csv
import io
import json
import xml.etree.ElementTree as ET

import pytest

from tsmux import export
from tsmux.analyzer import measure
from tsmux.ts import NULL_PACKET_BYTES, Pcr, make_packet, serialize_packet

SVG = "{http://www.w3.org/2000/svg}"


@pytest.fixture(scope="module")
def report(cbr_stream):
    return measure(cbr_stream)


def test_csv_row_arithmetic():
    # two PIDs, two windows -> four data rows
    pkts = []
    for i in range(20):
        pkts.append(serialize_packet(make_packet(0x100, b"", pcr=Pcr.from_ticks(i * 13_500))))
        pkts.append(NULL_PACKET_BYTES)
    rep = measure(b"".join(pkts), window=0.005)
    assert rep.n_windows == 2
    rows = list(csv.reader(io.StringIO(export.to_csv(rep).decode())))
    assert rows[0] == ["window_start_s", "pid", "program", "bits_per_second"]
    assert len(rows) == 1 + 4


def test_csv_program_column(report):
    rows = list(csv.DictReader(io.StringIO(export.to_csv(report).decode())))
    by_pid = {int(r["pid"]): r["program"] for r in rows}
    assert by_pid[0x100] == "1"
    assert by_pid[0x1FFF] == ""


def test_json_round_trip(report):
    data = export.to_json(report)
    assert export.from_json(data) == report
    d = json.loads(data)
    assert d["verdict"] == report.verdict and d["null_fraction"] == report.null_fraction


def test_json_extra_fields(report):
    d = json.loads(export.to_json(report, {"note": 1}))
    assert d["note"] == 1
    assert export.from_dict(d) == report


def test_svg_one_path_per_band(report):
    root = ET.fromstring(export.to_svg(report))
    assert root.tag == SVG + "svg"
    paths = root.findall(SVG + "path")
    programs = [p for p in paths if "program" in p.get("class")]
    assert [p.get("data-program") for p in programs] == [str(p.program_number) for p in report.programs]
    # nulls are the top band
    assert paths[-1].get("class") == "band null"


def test_text_report(report):
    text = export.to_text(report).decode()
    assert "null fraction" in text and report.verdict in text


def test_export_dispatch(report):
    for fmt in export.FORMATS:
        assert export.export_report(report, fmt)
    with pytest.raises(ValueError):
        export.export_report(report, "xlsx")
