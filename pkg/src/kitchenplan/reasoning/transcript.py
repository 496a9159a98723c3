"""Record reasoner exchanges to JSON lines and replay them offline."""

from __future__ import annotations

import json
import time
from pathlib import Path
from typing import Any, TextIO

from .base import Reasoner, ReasonerError, ReasonerRequest, decode_response, encode_response

FORMAT_VERSION = 1


class TranscriptDivergence(ReasonerError):
    def __init__(self, index: int, key: str, expected: Any, got: Any):
        self.index, self.key = index, key
        super().__init__(f"request {index} diverges at {key!r}: recorded {expected!r}, got {got!r}")


class TranscriptExhausted(ReasonerError):
    def __init__(self, index: int):
        self.index = index
        super().__init__(f"transcript has no entry {index}")


def _first_diff(a: Any, b: Any, path: str = "") -> tuple[str, Any, Any] | None:
    if isinstance(a, dict) and isinstance(b, dict):
        for k in sorted(set(a) | set(b)):
            d = _first_diff(a.get(k), b.get(k), f"{path}.{k}" if path else k)
            if d:
                return d
        return None
    if isinstance(a, list) and isinstance(b, list):
        for i in range(max(len(a), len(b))):
            d = _first_diff(a[i] if i < len(a) else None, b[i] if i < len(b) else None, f"{path}[{i}]")
            if d:
                return d
        return None
    return None if a == b else (path or "<root>", a, b)


class RecordingBackend(Reasoner):
    """Pass-through wrapper that appends every exchange to a transcript file.

    ``episode`` labels entries; the iteration tag comes from each request.
    ``meta`` goes into the header so a replay can rebuild the episode.
    Latency is wall-clock and is the only nondeterministic field; it can be
    zeroed with ``record_latency=False`` to make files byte-comparable.
    """

    def __init__(
        self, inner: Reasoner, path: str | Path, record_latency: bool = True, meta: dict[str, Any] | None = None
    ):
        self.inner = inner
        self.backend_id = inner.backend_id
        self.path = Path(path)
        self.record_latency = record_latency
        self.episode = ""
        self.calls = 0
        self._fh: TextIO = self.path.open("w", encoding="utf-8")
        header = {
            "format": FORMAT_VERSION,
            "backend": inner.backend_id,
            "template_hash": getattr(inner, "template_hash", ""),
            "meta": meta or {},
        }
        self._fh.write(json.dumps(header, sort_keys=True) + "\n")

    def handle(self, req: ReasonerRequest) -> Any:
        t0 = time.perf_counter()
        resp = self.inner.ask(req)
        latency = time.perf_counter() - t0 if self.record_latency else 0.0
        entry = {
            "episode": self.episode,
            "iteration": req.iteration,
            "backend": self.inner.backend_id,
            "request": req.to_dict(),
            "response": encode_response(req.kind, resp),
            "latency": round(latency, 6),
            "template_hash": getattr(self.inner, "template_hash", ""),
        }
        self._fh.write(json.dumps(entry, sort_keys=True) + "\n")
        self._fh.flush()
        return resp

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> RecordingBackend:
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()


def read_transcript(path: str | Path) -> tuple[dict[str, Any], list[dict[str, Any]]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError(f"{path}: empty transcript")
    header = json.loads(lines[0])
    if header.get("format") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported transcript format {header.get('format')!r}")
    return header, [json.loads(line) for line in lines[1:] if line.strip()]


class ReplayBackend(Reasoner):
    """Serve recorded responses in order, insisting each request matches the recording."""

    def __init__(self, path: str | Path):
        header, self.entries = read_transcript(path)
        self.meta: dict[str, Any] = header.get("meta", {})
        self.backend_id = header.get("backend", "replay")
        self.calls = 0
        self.position = 0

    def handle(self, req: ReasonerRequest) -> Any:
        i = self.position
        if i >= len(self.entries):
            raise TranscriptExhausted(i)
        entry = self.entries[i]
        recorded = ReasonerRequest.from_dict(entry["request"])
        if recorded.canonical() != req.canonical():
            key, exp, got = _first_diff(recorded.to_dict(), req.to_dict()) or ("<root>", None, None)
            raise TranscriptDivergence(i, key, exp, got)
        self.position += 1
        return decode_response(req.kind, entry["response"])

    @property
    def exhausted(self) -> bool:
        return self.position >= len(self.entries)
