"""Request/response types shared by every reasoner backend."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Mapping

from ..plan import Plan
from ..world import Verdict

KINDS = ("ProposeItems", "Decompose", "PreCheck", "PostCheck", "Reflect")


class ReasonerError(RuntimeError):
    pass


class TransportError(ReasonerError):
    """Backend unreachable or answered with a server-side error; safe to retry."""


class PlanParseError(ReasonerError):
    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class RequestError(ValueError):
    """A request is missing fields its kind requires."""


@dataclass(frozen=True)
class Reflection:
    iteration: int
    subtask: Mapping[str, Any]
    cause: str
    code: str = ""
    observation_ref: int = -1
    created_at: float = 0.0

    def key(self) -> tuple:
        return (self.subtask.get("verb"), tuple(self.subtask.get("args", ())), self.cause)

    def to_dict(self) -> dict[str, Any]:
        return {
            "iteration": self.iteration,
            "subtask": dict(self.subtask),
            "cause": self.cause,
            "code": self.code,
            "observation_ref": self.observation_ref,
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Reflection:
        return cls(
            int(d["iteration"]),
            dict(d["subtask"]),
            d["cause"],
            d.get("code", ""),
            int(d.get("observation_ref", -1)),
            float(d.get("created_at", 0.0)),
        )


@dataclass(frozen=True)
class ReasonerRequest:
    kind: str
    instruction: str = ""
    registry: Mapping[str, Any] | None = None
    observation: Mapping[str, Any] | None = None
    subtask: Mapping[str, Any] | None = None
    reflections: tuple[Mapping[str, Any], ...] = ()
    previous_plan: Mapping[str, Any] | None = None
    robot_count: int = 1
    robots: tuple[tuple[str, str], ...] = ()
    # replanning mid-iteration: the subtask whose pre-check failed
    failed_subtask: str | None = None
    verdict: Mapping[str, Any] | None = None
    iteration: int = 0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise RequestError(f"unknown request kind {self.kind!r}")

    def check(self) -> None:
        missing = []
        if self.kind in ("ProposeItems", "Decompose") and not self.instruction.strip():
            missing.append("instruction")
        if self.kind == "Decompose":
            if not self.registry:
                missing.append("registry")
            if self.robot_count < 1:
                missing.append("robot_count")
        if self.kind in ("PreCheck", "PostCheck", "Reflect"):
            if self.observation is None:
                missing.append("observation")
            if self.subtask is None:
                missing.append("subtask")
        if self.kind == "Reflect" and (self.verdict is None or self.verdict.get("passed", True)):
            missing.append("failed verdict")
        if missing:
            raise RequestError(f"{self.kind} request lacks {', '.join(missing)}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "instruction": self.instruction,
            "registry": self.registry,
            "observation": self.observation,
            "subtask": self.subtask,
            "reflections": [dict(r) for r in self.reflections],
            "previous_plan": self.previous_plan,
            "robot_count": self.robot_count,
            "robots": [list(r) for r in self.robots],
            "failed_subtask": self.failed_subtask,
            "verdict": self.verdict,
            "iteration": self.iteration,
        }

    def canonical(self) -> str:
        """Serialized form used for transcript equality."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> ReasonerRequest:
        return cls(
            kind=d["kind"],
            instruction=d.get("instruction", ""),
            registry=d.get("registry"),
            observation=d.get("observation"),
            subtask=d.get("subtask"),
            reflections=tuple(d.get("reflections", ())),
            previous_plan=d.get("previous_plan"),
            robot_count=int(d.get("robot_count", 1)),
            robots=tuple((r[0], r[1]) for r in d.get("robots", ())),
            failed_subtask=d.get("failed_subtask"),
            verdict=d.get("verdict"),
            iteration=int(d.get("iteration", 0)),
        )


def encode_response(kind: str, resp: Any) -> Any:
    if kind == "ProposeItems":
        return list(resp)
    return resp.to_dict()


def decode_response(kind: str, data: Any) -> Any:
    if kind == "ProposeItems":
        return [str(x) for x in data]
    if kind == "Decompose":
        return Plan.from_dict(data)
    if kind in ("PreCheck", "PostCheck"):
        return Verdict.from_dict(data)
    return Reflection.from_dict(data)


class Reasoner:
    """Base backend. Subclasses implement ``handle``."""

    backend_id = "abstract"
    calls = 0

    def handle(self, req: ReasonerRequest) -> Any:
        raise NotImplementedError

    def ask(self, req: ReasonerRequest) -> Any:
        req.check()
        self.calls += 1
        return self.handle(req)

    def propose_items(self, instruction: str) -> list[str]:
        return self.ask(ReasonerRequest("ProposeItems", instruction=instruction))

    def decompose(self, req: ReasonerRequest) -> Plan:
        if req.kind != "Decompose":
            raise RequestError("decompose needs a Decompose request")
        return self.ask(req)

    def precheck(self, req: ReasonerRequest) -> Verdict:
        if req.kind != "PreCheck":
            raise RequestError("precheck needs a PreCheck request")
        return self.ask(req)

    def postcheck(self, req: ReasonerRequest) -> Verdict:
        if req.kind != "PostCheck":
            raise RequestError("postcheck needs a PostCheck request")
        return self.ask(req)

    def reflect(self, req: ReasonerRequest) -> Reflection:
        if req.kind != "Reflect":
            raise RequestError("reflect needs a Reflect request")
        return self.ask(req)


