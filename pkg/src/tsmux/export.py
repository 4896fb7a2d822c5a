"""Report serialization: CSV rows, JSON round-trip, stacked-area SVG chart."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import xml.etree.ElementTree as ET

from .analyzer import MuxReport, PidStats, ProgramStats
from .ts import NULL_PID

FORMATS = ("csv", "json", "svg", "text")

_PALETTE = ("#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948",
            "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac")


def _pid_program(report: MuxReport) -> dict:
    owner = {}
    for p in report.programs:
        owner[p.pmt_pid] = p.program_number
        for pid in p.pids:
            owner[pid] = p.program_number
    return owner


def to_csv(report: MuxReport) -> bytes:
    owner = _pid_program(report)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("window_start_s", "pid", "program", "bits_per_second"))
    for stats in report.pids:
        prog = owner.get(stats.pid, "")
        for idx, bps in stats.series:
            w.writerow((f"{report.window_starts[idx]:.6f}", stats.pid, prog, repr(float(bps))))
    return buf.getvalue().encode()


def to_dict(report: MuxReport) -> dict:
    return dataclasses.asdict(report)


def to_json(report: MuxReport, extra: dict = None) -> bytes:
    d = to_dict(report)
    if extra:
        d.update(extra)
    return (json.dumps(d, indent=1) + "\n").encode()


def _series(items):
    return [(int(i), float(v)) for i, v in items]


def from_dict(d: dict) -> MuxReport:
    fields = {f.name for f in dataclasses.fields(MuxReport)}
    d = {k: v for k, v in d.items() if k in fields}
    d["pids"] = [PidStats(**{**p, "series": _series(p["series"])}) for p in d["pids"]]
    d["programs"] = [ProgramStats(**{**p, "series": _series(p["series"])}) for p in d["programs"]]
    d["total_series"] = _series(d["total_series"])
    return MuxReport(**d)


def from_json(data) -> MuxReport:
    return from_dict(json.loads(data))


def to_text(report: MuxReport) -> bytes:
    owner = _pid_program(report)
    lines = [
        f"duration        {report.duration:.3f} s ({report.total_packets} packets)",
        f"total bitrate   {report.total_bitrate / 1e6:.3f} Mbps  [clock {report.clock}]",
        f"null fraction   {report.null_fraction * 100:.2f} %",
        f"windows         {report.n_windows} x {report.window_length:g} s"
        f"{' (averaged)' if report.averaging else ''}",
        f"multiplexing    {report.verdict}",
        "",
        f"{'PID':>8} {'program':>8} {'packets':>10} {'min Mbps':>10} {'mean Mbps':>10} {'max Mbps':>10}",
    ]
    for s in report.pids:
        tag = "null" if s.pid == NULL_PID else str(owner.get(s.pid, ""))
        lines.append(f"{s.pid:#8x} {tag:>8} {s.packet_count:>10} {s.min / 1e6:>10.3f} "
                     f"{s.mean / 1e6:>10.3f} {s.max / 1e6:>10.3f}")
    if report.programs:
        lines += ["", f"{'program':>8} {'name':<20} {'video PID':>9} {'min Mbps':>10} {'max Mbps':>10}"]
        for p in report.programs:
            vp = f"{p.video_pid:#x}" if p.video_pid is not None else "-"
            lines.append(f"{p.program_number:>8} {p.name[:20]:<20} {vp:>9} "
                         f"{p.min / 1e6:>10.3f} {p.max / 1e6:>10.3f}")
    return ("\n".join(lines) + "\n").encode()


def _bands(report: MuxReport):
    """(label, css class, values per window) from bottom to top; nulls last."""
    n = report.n_windows
    es_pids = {pid for p in report.programs for pid in p.pids}
    bands = [(f"program {p.program_number}" + (f" {p.name}" if p.name else ""), "program",
              p.program_number, [v for _, v in p.series]) for p in report.programs]
    other = [0.0] * n
    nulls = [0.0] * n
    for s in report.pids:
        if s.pid in es_pids:
            continue
        target = nulls if s.pid == NULL_PID else other
        for i, v in s.series:
            target[i] += v
    if any(other):
        bands.append(("PSI / other", "other", None, other))
    bands.append(("null packets", "null", None, nulls))
    return bands


def to_svg(report: MuxReport, width: int = 800, height: int = 400) -> bytes:
    margin = 50
    pw, ph = width - 2 * margin, height - 2 * margin
    bands = _bands(report)
    n = report.n_windows
    tops = [0.0] * n
    stacks = []
    for label, kind, number, values in bands:
        lower = list(tops)
        tops = [a + b for a, b in zip(tops, values)]
        stacks.append((label, kind, number, lower, list(tops)))
    ymax = max(tops) if tops and max(tops) > 0 else 1.0
    xs = [margin + (pw * i / (n - 1) if n > 1 else pw / 2) for i in range(n)]

    def y(v):
        return margin + ph - ph * v / ymax

    svg = ET.Element("svg", xmlns="http://www.w3.org/2000/svg", width=str(width),
                     height=str(height), viewBox=f"0 0 {width} {height}")
    ET.SubElement(svg, "title").text = "Mux usage (stacked area)"
    for k, (label, kind, number, lower, upper) in enumerate(stacks):
        pts = [f"{x:.2f},{y(v):.2f}" for x, v in zip(xs, upper)]
        pts += [f"{x:.2f},{y(v):.2f}" for x, v in reversed(list(zip(xs, lower)))]
        fill = "#ffffff" if kind == "null" else ("#cccccc" if kind == "other" else _PALETTE[k % len(_PALETTE)])
        attrs = {"d": "M" + " L".join(pts) + " Z", "class": f"band {kind}", "fill": fill,
                 "stroke": "#333333", "stroke-width": "0.5"}
        if number is not None:
            attrs["data-program"] = str(number)
        path = ET.SubElement(svg, "path", attrs)
        ET.SubElement(path, "title").text = label
    ET.SubElement(svg, "line", x1=str(margin), y1=str(margin + ph), x2=str(margin + pw),
                  y2=str(margin + ph), stroke="#000000")
    ET.SubElement(svg, "line", x1=str(margin), y1=str(margin), x2=str(margin),
                  y2=str(margin + ph), stroke="#000000")
    ET.SubElement(svg, "text", x=str(margin), y=str(margin - 10),
                  attrib={"font-size": "12"}).text = f"{ymax / 1e6:.1f} Mbps"
    span = report.window_starts[-1] if report.window_starts else 0.0
    ET.SubElement(svg, "text", x=str(margin + pw), y=str(height - 15), attrib={
        "font-size": "12", "text-anchor": "end"}).text = f"{span:.1f} s"
    return ET.tostring(svg, xml_declaration=True, encoding="utf-8") + b"\n"


def export_report(report: MuxReport, fmt: str) -> bytes:
    fmt = fmt.lower()
    if fmt == "csv":
        return to_csv(report)
    if fmt == "json":
        return to_json(report)
    if fmt == "svg":
        return to_svg(report)
    if fmt == "text":
        return to_text(report)
    raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
