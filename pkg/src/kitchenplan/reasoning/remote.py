"""HTTP chat-completion backend."""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from string import Template
from typing import Any, Mapping

import httpx

from ..plan import Plan, Subtask
from ..world import FIXTURE_KINDS, Verdict
from .base import PlanParseError, Reasoner, ReasonerRequest, Reflection, TransportError

TEMPLATE_FILES = ("system", "propose_items", "decompose", "replan", "precheck", "postcheck", "reflect")
MAX_REPROMPTS = 2

_FENCE = re.compile(r"```json\s*(.*?)```", re.DOTALL)


@lru_cache(maxsize=1)
def templates() -> dict[str, str]:
    root = resources.files("kitchenplan.reasoning").joinpath("templates")
    out = {}
    for name in TEMPLATE_FILES:
        text = root.joinpath(f"{name}.txt").read_text(encoding="utf-8")
        out[name] = "\n".join(line for line in text.splitlines() if not line.startswith("#")).strip()
    return out


@lru_cache(maxsize=1)
def template_hash() -> str:
    h = hashlib.sha256()
    for name in TEMPLATE_FILES:
        h.update(name.encode())
        h.update(b"\0")
        h.update(templates()[name].encode())
        h.update(b"\0")
    return h.hexdigest()


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model: str
    api_key: str = ""
    timeout: float = 60.0

    @classmethod
    def from_env(cls, env: Mapping[str, str] | None = None) -> EndpointConfig:
        env = os.environ if env is None else env
        url = env.get("KITCHENPLAN_BASE_URL", "")
        model = env.get("KITCHENPLAN_MODEL", "")
        if not url or not model:
            raise ValueError("set KITCHENPLAN_BASE_URL and KITCHENPLAN_MODEL to use the remote backend")
        return cls(url.rstrip("/"), model, env.get("KITCHENPLAN_API_KEY", ""))


def _dump(value: Any) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"))


def render_prompt(req: ReasonerRequest) -> str:
    fields = {
        "instruction": req.instruction,
        "robots": _dump([list(r) for r in req.robots]),
        "registry": _dump(req.registry or {}),
        "reflections": "; ".join(r.get("cause", "") for r in req.reflections) or "none",
        "previous_plan": _dump(req.previous_plan) if req.previous_plan else "none",
        "observation": _dump(req.observation),
        "subtask": _dump(req.subtask),
        "failed_subtask": req.failed_subtask or "",
        "reason": (req.verdict or {}).get("reason", ""),
    }
    name = {
        "ProposeItems": "propose_items",
        "Decompose": "replan" if req.failed_subtask else "decompose",
        "PreCheck": "precheck",
        "PostCheck": "postcheck",
        "Reflect": "reflect",
    }[req.kind]
    return Template(templates()[name]).substitute(fields)


def extract_json(text: str) -> Any:
    """Parse the single fenced json block of a reply; anything else is a parse error."""
    blocks = _FENCE.findall(text)
    if len(blocks) != 1:
        raise PlanParseError(f"expected one fenced json block, found {len(blocks)}", text)
    try:
        return json.loads(blocks[0])
    except json.JSONDecodeError as exc:
        raise PlanParseError(f"invalid json: {exc.msg}", text) from None


def parse_reply(req: ReasonerRequest, text: str) -> Any:
    data = extract_json(text)
    if not isinstance(data, dict):
        raise PlanParseError("reply is not a json object", text)
    try:
        if req.kind == "ProposeItems":
            items = data["items"]
            if not isinstance(items, list) or not all(isinstance(x, str) for x in items):
                raise PlanParseError("items must be a list of strings", text)
            return items
        if req.kind == "Decompose":
            subs = []
            for row in data["subtasks"]:
                subs.append(Subtask.from_dict({**row, "goal": None, "status": "pending"}))
            return Plan.from_dict(
                {"iteration": req.iteration, "subtasks": [s.to_dict() for s in subs], "provenance": {"backend": "remote"}},
                _doors(req.registry or {}),
            )
        if req.kind in ("PreCheck", "PostCheck"):
            passed = data["passed"]
            if not isinstance(passed, bool):
                raise PlanParseError("passed must be a boolean", text)
            reason = "" if passed else (str(data.get("reason", "")) or "judged infeasible")
            return Verdict(passed, reason, "" if passed else "MODEL", text)
        return Reflection(req.iteration, dict(req.subtask or {}), str(data["cause"]), (req.verdict or {}).get("code", ""))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, PlanParseError):
            raise
        raise PlanParseError(f"reply does not fit the {req.kind} schema: {exc}", text) from None


def _doors(registry: Mapping[str, Any]) -> list[str]:
    return [k for k, v in registry.items() if v.get("category") in FIXTURE_KINDS and FIXTURE_KINDS[v["category"]].door]


class RemoteReasoner(Reasoner):
    """Chat-completion client; ``transport`` lets tests inject ``httpx.MockTransport``."""

    backend_id = "remote"

    def __init__(self, config: EndpointConfig, transport: httpx.BaseTransport | None = None):
        self.config = config
        self.template_hash = template_hash()
        self.calls = 0
        headers = {"Authorization": f"Bearer {config.api_key}"} if config.api_key else {}
        self._client = httpx.Client(base_url=config.base_url, headers=headers, timeout=config.timeout, transport=transport)

    def _complete(self, messages: list[dict[str, str]]) -> str:
        body = {"model": self.config.model, "messages": messages, "temperature": 0, "n": 1}
        try:
            resp = self._client.post("/chat/completions", json=body)
        except httpx.HTTPError as exc:
            raise TransportError(f"endpoint unreachable: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransportError(f"endpoint answered {resp.status_code}")
        if resp.status_code >= 400:
            raise TransportError(f"endpoint rejected request: {resp.status_code} {resp.text[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError):
            raise TransportError("malformed completion body") from None

    def handle(self, req: ReasonerRequest) -> Any:
        messages = [
            {"role": "system", "content": templates()["system"]},
            {"role": "user", "content": render_prompt(req)},
        ]
        for attempt in range(MAX_REPROMPTS + 1):
            text = self._complete(messages)
            try:
                return parse_reply(req, text)
            except PlanParseError as exc:
                if attempt == MAX_REPROMPTS:
                    raise
                messages += [
                    {"role": "assistant", "content": text},
                    {"role": "user", "content": f"Your reply could not be used ({exc}). Answer again with exactly one fenced json block."},
                ]
        raise AssertionError("unreachable")

    def close(self) -> None:
        self._client.close()
