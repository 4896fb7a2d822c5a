import os
import sys

import pytest
from hypothesis import settings
from hypothesis import strategies as st

from tsmux import fixtures, statmux
from tsmux.ts import AFC_ADAPTATION, AFC_BOTH, AFC_PAYLOAD, AdaptationField, Pcr, TsPacket

settings.register_profile("ci", deadline=None, max_examples=100)
settings.register_profile("dev", deadline=None, max_examples=25)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))

pcrs = st.builds(Pcr, st.integers(0, (1 << 33) - 1), st.integers(0, 299))


@st.composite
def adaptation_fields(draw, room: int):
    """An adaptation field whose serialized size (incl. length byte) is ``room``."""
    length = room - 1
    if length == 0:
        return AdaptationField(0)
    pcr = draw(st.none() | pcrs) if length >= 7 else None
    used = 1 + (6 if pcr else 0)
    extra = b""
    other = 0
    if length > used and draw(st.booleans()):
        other = draw(st.integers(1, 15))
        extra = draw(st.binary(min_size=1, max_size=length - used))
        extra = extra.rstrip(b"\xff") or b"\x00"
    return AdaptationField(length, draw(st.booleans()), draw(st.booleans()), draw(st.booleans()),
                           pcr, other, extra)


@st.composite
def ts_packets(draw):
    afc = draw(st.sampled_from((AFC_PAYLOAD, AFC_ADAPTATION, AFC_BOTH)))
    if afc == AFC_PAYLOAD:
        af, payload = None, draw(st.binary(min_size=184, max_size=184))
    elif afc == AFC_ADAPTATION:
        af, payload = draw(adaptation_fields(184)), b""
    else:
        n = draw(st.integers(1, 183))
        af, payload = draw(adaptation_fields(184 - n)), draw(st.binary(min_size=n, max_size=n))
    return TsPacket(
        pid=draw(st.integers(0, 0x1FFF)),
        payload_unit_start=draw(st.booleans()),
        transport_error=draw(st.booleans()),
        priority=draw(st.booleans()),
        scrambling=draw(st.integers(0, 3)),
        adaptation_field_control=afc,
        continuity_counter=draw(st.integers(0, 15)),
        adaptation=af,
        payload=payload,
    )


@pytest.fixture(scope="session")
def cbr_stream():
    """Four CBR services on 20 Mbps, ~50% nulls, 6 s."""
    return statmux.generate_stream(fixtures.cbr_config(seed=3), 6.0)


@pytest.fixture(scope="session")
def statmux_stream():
    return statmux.generate_stream(fixtures.statmux_config(seed=3), 6.0)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)
