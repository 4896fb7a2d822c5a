"""``tsmux`` command line: analyze, generate, insert, extract, inspect.

Exit codes: 0 success, 1 usage error, 2 data error.  Paths may be ``-``
for standard input/output.  Outputs are written to a temporary file and
renamed on success, so a failing command never leaves a partial file.
"""

from __future__ import annotations

import argparse
import contextlib
import dataclasses
import json
import os
import sys
import tempfile

import yaml

from . import analyzer, export, inserter, psi, statmux
from .ts import PACKET_SIZE, SyncNotFound, TsError, sync_scan
from .units import format_rate, parse_pid, parse_rate

READ_CHUNK = PACKET_SIZE * 8192

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- I/O helpers ---------------------------------------------------------------

@contextlib.contextmanager
def _open_in(path):
    if path == "-":
        yield sys.stdin.buffer
        return
    try:
        f = open(path, "rb")
    except OSError as e:
        raise DataError(f"cannot read {path}: {e.strerror}") from e
    with f:
        yield f


@contextlib.contextmanager
def _atomic_out(path):
    if path == "-":
        yield sys.stdout.buffer
        sys.stdout.buffer.flush()
        return
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tsmux-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as f:
            yield f
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def _read_chunks(f, align: bool):
    """Yield 188-aligned chunks; with ``align`` skip leading bytes until sync lock."""
    first = f.read(READ_CHUNK)
    if not first:
        return
    if align:
        try:
            off = sync_scan(first)
        except SyncNotFound:
            if len(first) < PACKET_SIZE * 5:
                off = 0 if first[:1] == b"\x47" else None
            else:
                off = None
            if off is None:
                raise DataError("sync failure: no transport packet alignment found") from None
        first = first[off:]
    rem = first
    while True:
        n = len(rem) // PACKET_SIZE * PACKET_SIZE
        if n:
            yield rem[:n]
        rem = rem[n:]
        more = f.read(READ_CHUNK)
        if not more:
            break
        rem += more
    if rem and not align:
        yield rem  # let the consumer reject a trailing partial packet


def _parse_clock(value: str) -> analyzer.ClockSource:
    if value == "pcr":
        return analyzer.ClockSource.pcr()
    if value.startswith("pcr:"):
        return analyzer.ClockSource.pcr(parse_pid(value[4:]))
    return analyzer.ClockSource.nominal(parse_rate(value))


def _report_json(obj) -> str:
    return json.dumps(dataclasses.asdict(obj), indent=1, default=float)


# -- subcommands -----------------------------------------------------------------

def cmd_analyze(args) -> int:
    try:
        clock = _parse_clock(args.clock)
    except ValueError as e:
        raise UsageError(f"--clock: {e}") from e
    if args.window <= 0:
        raise UsageError("--window must be > 0")
    an = analyzer.Analyzer(clock, args.window, args.averaging, args.tau)
    with _open_in(args.input) as f:
        for chunk in _read_chunks(f, align=True):
            an.feed(chunk)
    report = an.finish()
    summary = None
    if args.capacity is not None:
        summary = analyzer.capacity_summary(report, args.capacity)
    if args.format == "json":
        extra = None
        if summary is not None:
            extra = {"capacity_summary": {
                "rows": [list(r) for r in summary.rows], "total_max": summary.total_max,
                "total_min": summary.total_min, "capacity": summary.capacity,
                "difference_at_max": summary.difference_at_max,
                "difference_at_min": summary.difference_at_min}}
        data = export.to_json(report, extra)
    else:
        data = export.export_report(report, args.format)
        if summary is not None and args.format == "text":
            data += b"\n" + summary.as_text().encode() + b"\n"
        elif summary is not None:
            sys.stderr.write(summary.as_text() + "\n")
    with _atomic_out(args.output) as out:
        out.write(data)
    return EXIT_OK


def _load_yaml(path):
    with _open_in(path) as f:
        try:
            return yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise UsageError(f"{path}: {e}") from e


def cmd_generate(args) -> int:
    doc = _load_yaml(args.scenario)
    duration = args.duration if args.duration is not None else doc.pop("duration", 10.0)
    doc.pop("duration", None)
    if args.seed is not None:
        doc["seed"] = args.seed
    try:
        config = statmux.MuxConfig.from_dict(doc)
    except (TypeError, KeyError) as e:
        raise UsageError(f"bad scenario: {e}") from e
    gen = statmux.StreamGenerator(config, float(duration))
    with _atomic_out(args.output) as out:
        for rec in gen.gops():
            out.write(rec.data)
    return EXIT_OK


def _insertion_config(args) -> inserter.InsertionConfig:
    explicit = {k: getattr(args, k) for k in ("data_pid", "pmt_pid", "program", "reserve", "label")
                if getattr(args, k) is not None}
    if args.config:
        if explicit:
            raise UsageError(f"--config conflicts with --{', --'.join(k.replace('_', '-') for k in explicit)}")
        doc = _load_yaml(args.config)
        for key in ("data_pid", "pmt_pid"):
            if key in doc:
                doc[key] = parse_pid(doc[key])
        if "nominal_rate" in doc:
            doc["nominal_rate"] = parse_rate(doc["nominal_rate"])
        try:
            return inserter.InsertionConfig(**doc)
        except TypeError as e:
            raise UsageError(f"bad insertion config: {e}") from e
    return inserter.InsertionConfig(
        new_program_number=explicit.get("program", 0xFF00),
        data_pid=explicit.get("data_pid", 0x1FF0),
        pmt_pid=explicit.get("pmt_pid", 0x1FF1),
        reserve_fraction=explicit.get("reserve", inserter.DEFAULT_RESERVE),
        service_label=explicit.get("label", ""),
        repeat=args.repeat,
    )


def cmd_insert(args) -> int:
    try:
        config = _insertion_config(args)
    except ValueError as e:
        raise UsageError(str(e)) from e
    with _open_in(args.payload) as f:
        payload = f.read()
    ins = inserter.Inserter(config, payload)
    with _open_in(args.input) as src, _atomic_out(args.output) as out:
        for chunk in _read_chunks(src, align=False):
            out.write(ins.feed(chunk))
        out.write(ins.finish())
    rep = ins.report
    sys.stderr.write(_report_json(rep) + "\n")
    if config.service_label:
        sys.stderr.write(f"inserted service {config.service_label!r}: "
                         f"{format_rate(rep.achieved_data_rate)}bps on PID {config.data_pid:#x}\n")
    return EXIT_OK


def cmd_extract(args) -> int:
    def chunks():
        with _open_in(args.input) as f:
            yield from _read_chunks(f, align=True)

    try:
        payload, rep = inserter.extract(chunks(), args.data_pid)
        status = EXIT_OK
    except inserter.Incomplete as e:
        payload, rep = e.payload, e.report
        sys.stderr.write(f"error: incomplete payload: {e}\n")
        status = EXIT_DATA
    sys.stderr.write(_report_json(rep) + "\n")
    if status == EXIT_OK or args.allow_partial:
        with _atomic_out(args.output) as out:
            out.write(payload)
    return status


def cmd_inspect(args) -> int:
    an = analyzer.Analyzer(analyzer.ClockSource.nominal(1))
    with _open_in(args.input) as f:
        for chunk in _read_chunks(f, align=True):
            an.feed(chunk)
    if an.packet_count == 0:
        raise DataError("empty stream")
    lines = []
    if an.pat is None:
        sys.stderr.write("warning: no PAT found; showing PID counts only\n")
    else:
        pat = an.pat
        lines.append(f"PAT  transport_stream_id={pat.transport_stream_id} version={pat.version}")
        for number, pid in pat.programs:
            name = an.sdt_names.get(number, "")
            label = "network PID" if number == 0 else f"program {number}"
            lines.append(f"  {label:<16} PMT PID {pid:#06x}  {name}".rstrip())
            pmt = an.pmts.get(number)
            if pmt is None:
                continue
            lines.append(f"    PCR PID {pmt.pcr_pid:#06x}  version={pmt.version}")
            for s in pmt.streams:
                lines.append(f"    stream_type {s.stream_type:#04x}  PID {s.elementary_pid:#06x}"
                             f"{'  es_info ' + s.es_info.hex() if s.es_info else ''}")
    if an.sdt_names:
        lines.append("SDT")
        for sid, name in sorted(an.sdt_names.items()):
            lines.append(f"  service {sid}: {name}")
    lines.append("PID counts")
    for pid, count in sorted(an.pid_counts.items()):
        tag = "  (null)" if pid == 0x1FFF else ""
        lines.append(f"  {pid:#06x} {count:>10}{tag}")
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK


# -- entry point -------------------------------------------------------------------

def _rate(value):
    try:
        return parse_rate(value)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from e


def _pid(value):
    try:
        return parse_pid(value)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from e


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tsmux", description="Transport stream multiplex analysis and null-packet "
                                          "service insertion.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("analyze", help="per-PID bitrate report")
    a.add_argument("input")
    a.add_argument("--window", type=float, default=analyzer.DEFAULT_WINDOW, help="seconds")
    a.add_argument("--averaging", action="store_true", help="running-mean series")
    a.add_argument("--clock", default="pcr", help="pcr, pcr:PID, or a nominal rate like 38M")
    a.add_argument("--format", choices=export.FORMATS, default="text")
    a.add_argument("--capacity", type=_rate, help="channel capacity for the max/min summary")
    a.add_argument("--tau", type=float, default=analyzer.DEFAULT_TAU,
                   help="CV threshold for the statistical-multiplexing verdict")
    a.add_argument("-o", "--output", default="-")
    a.set_defaults(func=cmd_analyze)

    g = sub.add_parser("generate", help="synthetic statmux stream from a scenario file")
    g.add_argument("scenario")
    g.add_argument("output")
    g.add_argument("--duration", type=float)
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_generate)

    i = sub.add_parser("insert", help="replace null packets with a data service")
    i.add_argument("input")
    i.add_argument("output")
    i.add_argument("--payload", required=True)
    i.add_argument("--data-pid", type=_pid)
    i.add_argument("--pmt-pid", type=_pid)
    i.add_argument("--program", type=int)
    i.add_argument("--reserve", type=float, help="fraction of nulls kept (default 0.2)")
    i.add_argument("--label", help="service label for display")
    i.add_argument("--repeat", action="store_true", help="carousel: loop the payload")
    i.add_argument("--config", help="YAML/JSON file with InsertionConfig fields")
    i.set_defaults(func=cmd_insert)

    e = sub.add_parser("extract", help="recover an inserted payload")
    e.add_argument("input")
    e.add_argument("output")
    e.add_argument("--data-pid", type=_pid, required=True)
    e.add_argument("--allow-partial", action="store_true",
                   help="write whatever was recovered even if chunks are missing")
    e.set_defaults(func=cmd_extract)

    s = sub.add_parser("inspect", help="dump PAT/PMT/SDT and PID counts")
    s.add_argument("input")
    s.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"tsmux: error: {e}\n")
        return EXIT_USAGE
    except analyzer.EmptyStream:
        sys.stderr.write("tsmux: error: empty stream\n")
        return EXIT_DATA
    except (DataError, TsError, psi.PsiError, analyzer.AnalyzerError, inserter.InsertionError,
            statmux.Infeasible) as e:
        sys.stderr.write(f"tsmux: error: {e}\n")
        return EXIT_DATA
    except ValueError as e:
        # config-level validation (bad rates, PIDs, bounds)
        sys.stderr.write(f"tsmux: error: {e}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
