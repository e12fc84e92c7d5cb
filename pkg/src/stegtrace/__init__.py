"""Timing-steganography traffic simulation and source localization."""

from .errors import (
    InsufficientDataError,
    InvalidParameterError,
    RecordFormatError,
    ScenarioParseError,
    StegTraceError,
)

__version__ = "0.1.0"

__all__ = [
    "InsufficientDataError",
    "InvalidParameterError",
    "RecordFormatError",
    "ScenarioParseError",
    "StegTraceError",
]
