"""MPEG transport stream multiplex analysis, statmux simulation and null-packet data insertion."""

from .analyzer import Analyzer, ClockSource, MuxReport, measure
from .inserter import InsertionConfig, extract, insert
from .statmux import EncoderModel, MuxConfig, allocate_equal_distortion, generate_stream

__version__ = "0.1.0"

__all__ = [
    "Analyzer", "ClockSource", "MuxReport", "measure",
    "InsertionConfig", "extract", "insert",
    "EncoderModel", "MuxConfig", "allocate_equal_distortion", "generate_stream",
]
