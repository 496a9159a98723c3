"""Reasoner backends: scripted oracle, remote chat endpoint, transcript replay."""

from .base import (
    PlanParseError,
    Reasoner,
    ReasonerError,
    ReasonerRequest,
    Reflection,
    RequestError,
    TransportError,
)
from .oracle import OracleReasoner
from .transcript import RecordingBackend, ReplayBackend, TranscriptDivergence, TranscriptExhausted

__all__ = [
    "OracleReasoner",
    "PlanParseError",
    "Reasoner",
    "ReasonerError",
    "ReasonerRequest",
    "RecordingBackend",
    "Reflection",
    "ReplayBackend",
    "RequestError",
    "TranscriptDivergence",
    "TranscriptExhausted",
    "TransportError",
]
