"""Synthetic scenarios parameterized from published multiplex measurements.

The Sky transponder rows below are per-service video max/min (Mbps) as
measured over a ~2 minute capture; the null-share rows give null Mbps in
a 38 Mbps multiplex.
"""

from __future__ import annotations

from .statmux import EncoderModel, Mode, MuxConfig, Profile
from .ts import PACKET_BITS

MBPS = 1_000_000
CHANNEL_RATE = 38 * MBPS

# name, max, min, profile
SKY_SERVICES = (
    ("NatGeoWild", 3.5, 1.0, Profile.COMPLEX),
    ("Nat. Geographic", 3.5, 0.0, Profile.COMPLEX),
    ("Discovery", 3.5, 1.2, Profile.COMPLEX),
    ("Sky Select", 5.2, 1.8, Profile.COMPLEX),
    ("Spiegel Geschichte", 5.8, 0.6, Profile.COMPLEX),
    ("Sky Sports 1", 7.8, 3.8, Profile.SPORTS),
    ("Sky Sports 2", 4.6, 1.4, Profile.SPORTS),
    ("Sky Bundesliga", 10.0, 3.0, Profile.SPORTS),
    ("Blue Movie", 5.0, 0.6, Profile.COMPLEX),
)
SKY_TOTAL_MAX = 48.9
SKY_TOTAL_MIN = 13.4

# a measured minimum of 0 cannot drive an encoder; PCR needs a floor rate
ZERO_MIN_FLOOR = 0.1

# transponder -> null Mbps in a 38 Mbps multiplex
NULL_RATES = {"Sat1/Kabel1": 0.5, "Sky": 1.8, "RTL": 1.5}


def sky_config(seed: int = 0, first_pid: int = 0x100) -> MuxConfig:
    services = []
    for i, (name, hi, lo, profile) in enumerate(SKY_SERVICES):
        services.append(EncoderModel(
            service_id=i + 1, pid=first_pid + i, mode=Mode.ABR,
            min_rate=max(lo, ZERO_MIN_FLOOR) * MBPS, max_rate=hi * MBPS,
            profile=profile, name=name))
    return MuxConfig(CHANNEL_RATE, tuple(services), seed=seed, emit_sdt=True)


def null_share_config(null_rate: float, channel_rate: int = CHANNEL_RATE, n_services: int = 6,
                      seed: int = 0) -> MuxConfig:
    """CBR multiplex whose stuffing averages ``null_rate`` bits/s.

    PSI overhead is subtracted first; the remaining payload is split over
    equal CBR services.  Rates are rounded down to whole packets per
    second so the stuffing share lands within a packet of the target.
    """
    probe = MuxConfig(channel_rate, tuple(EncoderModel(i + 1, 0x100 + i, Mode.CBR, MBPS, MBPS)
                                          for i in range(n_services)), seed=seed)
    video = channel_rate - null_rate - probe.psi_rate
    per = video / n_services
    per = (per // PACKET_BITS) * PACKET_BITS
    services = tuple(EncoderModel(i + 1, 0x100 + i, Mode.CBR, per, per, name=f"CBR {i + 1}")
                     for i in range(n_services))
    return MuxConfig(channel_rate, services, gop_duration=1.0, seed=seed)


def cbr_config(seed: int = 0, rates=(6, 4, 3, 2.5), channel_rate: int = 20 * MBPS) -> MuxConfig:
    services = tuple(EncoderModel(i + 1, 0x100 + i, Mode.CBR, r * MBPS, r * MBPS)
                     for i, r in enumerate(rates))
    return MuxConfig(channel_rate, services, seed=seed)


def statmux_config(seed: int = 0, n_services: int = 5, channel_rate: int = 20 * MBPS,
                   profile: Profile = Profile.SPORTS) -> MuxConfig:
    services = tuple(EncoderModel(i + 1, 0x100 + i, Mode.ABR, 0.5 * MBPS, 15 * MBPS,
                                  profile=profile) for i in range(n_services))
    return MuxConfig(channel_rate, services, seed=seed)


def config_to_dict(cfg: MuxConfig) -> dict:
    """Scenario-file form of a MuxConfig (inverse of ``MuxConfig.from_dict``)."""
    services = []
    for s in cfg.services:
        d = {"service_id": s.service_id, "pid": s.pid, "mode": s.mode.value,
             "min_rate": int(s.min_rate), "max_rate": int(s.max_rate), "profile": s.profile.value}
        if s.name:
            d["name"] = s.name
        if s.mean_rate is not None:
            d["mean_rate"] = int(s.mean_rate)
        if s.pmt_pid is not None:
            d["pmt_pid"] = s.pmt_pid
        if s.complexity_trace:
            d["complexity_trace"] = list(s.complexity_trace)
        services.append(d)
    return {"channel_rate": cfg.channel_rate, "gop_duration": cfg.gop_duration,
            "psi_interval": cfg.psi_interval, "pcr_interval": cfg.pcr_interval,
            "seed": cfg.seed, "transport_stream_id": cfg.transport_stream_id,
            "emit_sdt": cfg.emit_sdt, "services": services}
