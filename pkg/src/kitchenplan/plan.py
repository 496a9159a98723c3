"""Robot-assigned subtask DAGs: validation, layering, splicing, plan length."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping, Sequence

from .world import FIXTURE_KINDS, PRIMITIVE_KINDS, Predicate, Primitive, Scenario, arity, goal_for, pred_from_json, pred_to_json

STATUSES = ("pending", "running", "done", "failed")


@dataclass(frozen=True)
class Subtask:
    id: str
    verb: str
    args: tuple[str, ...]
    robot: str
    deps: frozenset[str] = frozenset()
    goal: Predicate = ()
    status: str = "pending"

    @property
    def primitive(self) -> Primitive:
        return Primitive(self.verb, self.robot, self.args)

    def describe(self) -> str:
        return f"{self.robot}: {self.verb}({', '.join(self.args)})"

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "verb": self.verb,
            "args": list(self.args),
            "robot": self.robot,
            "deps": sorted(self.deps),
            "goal": pred_to_json(self.goal),
            "status": self.status,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Subtask:
        return cls(
            id=str(d["id"]),
            verb=str(d["verb"]),
            args=tuple(str(a) for a in d["args"]),
            robot=str(d["robot"]),
            deps=frozenset(str(x) for x in d.get("deps", ())),
            goal=pred_from_json(d["goal"]) if d.get("goal") else (),
            status=str(d.get("status", "pending")),
        )


def make_subtask(
    sid: str,
    verb: str,
    robot: str,
    args: Sequence[str],
    deps: Iterable[str] = (),
    door_fixtures: Iterable[str] = (),
) -> Subtask:
    """Build a subtask with its default goal predicate."""
    args = tuple(args)
    return Subtask(sid, verb, args, robot, frozenset(deps), goal_for(verb, robot, args, door_fixtures))


@dataclass(frozen=True)
class Plan:
    iteration: int = 1
    subtasks: tuple[Subtask, ...] = ()
    provenance: Mapping[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.subtasks)

    def get(self, sid: str) -> Subtask:
        for s in self.subtasks:
            if s.id == sid:
                return s
        raise KeyError(sid)

    def index(self, sid: str) -> int:
        for i, s in enumerate(self.subtasks):
            if s.id == sid:
                return i
        raise KeyError(sid)

    @property
    def robots(self) -> list[str]:
        return sorted({s.robot for s in self.subtasks})

    def done(self) -> list[Subtask]:
        return [s for s in self.subtasks if s.status == "done"]

    def remaining(self) -> list[Subtask]:
        return [s for s in self.subtasks if s.status not in ("done", "failed")]

    def with_status(self, sid: str, status: str) -> Plan:
        if status not in STATUSES:
            raise ValueError(status)
        subs = tuple(replace(s, status=status) if s.id == sid else s for s in self.subtasks)
        return replace(self, subtasks=subs)

    def to_dict(self) -> dict[str, Any]:
        return {
            "iteration": self.iteration,
            "provenance": dict(self.provenance),
            "subtasks": [s.to_dict() for s in self.subtasks],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any], door_fixtures: Iterable[str] = ()) -> Plan:
        doors = tuple(door_fixtures)
        subs = []
        for raw in d.get("subtasks", ()):
            s = Subtask.from_dict(raw)
            if not s.goal and s.verb in PRIMITIVE_KINDS and len(s.args) == arity(s.verb):
                s = replace(s, goal=goal_for(s.verb, s.robot, s.args, doors))
            subs.append(s)
        return cls(int(d.get("iteration", 1)), tuple(subs), dict(d.get("provenance", {})))


class PlanError(ValueError):
    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


def fresh_ids(plan: Plan, n: int, prefix: str = "t") -> list[str]:
    """``n`` unused ids continuing the plan's ``t<k>`` numbering."""
    top = 0
    for s in plan.subtasks:
        if s.id.startswith(prefix) and s.id[len(prefix):].isdigit():
            top = max(top, int(s.id[len(prefix):]))
    return [f"{prefix}{top + i}" for i in range(1, n + 1)]


# --------------------------------------------------------------------------
# Validation and layering
# --------------------------------------------------------------------------


def _reaches(plan: Plan) -> dict[str, set[str]]:
    """Transitive dependency closure (id -> all ancestors)."""
    deps = {s.id: set(s.deps) for s in plan.subtasks}
    memo: dict[str, set[str]] = {}

    def visit(sid: str, stack: frozenset[str]) -> set[str]:
        if sid in memo:
            return memo[sid]
        out: set[str] = set()
        for d in deps.get(sid, ()):
            if d in stack or d not in deps:
                continue
            out.add(d)
            out |= visit(d, stack | {d})
        memo[sid] = out
        return out

    return {sid: visit(sid, frozenset({sid})) for sid in deps}


def _has_cycle(plan: Plan) -> bool:
    try:
        layers(plan)
    except PlanError:
        return True
    return False


def validate(plan: Plan, scenario: Scenario) -> list[str]:
    """All structural violations of ``plan`` in ``scenario``; empty means valid."""
    out: list[str] = []
    fixtures = {f.id: f for f in scenario.fixtures}
    stations = set(scenario.stations)
    objects = {o.id for o in scenario.objects}
    robots = {r.id: r for r in scenario.robots}
    ids = [s.id for s in plan.subtasks]
    if len(ids) != len(set(ids)):
        out.append("duplicate subtask ids")
    idset = set(ids)

    for s in plan.subtasks:
        if s.verb not in PRIMITIVE_KINDS:
            out.append(f"{s.id}: unknown verb {s.verb!r}")
            continue
        if len(s.args) != arity(s.verb):
            out.append(f"{s.id}: {s.verb} takes {arity(s.verb)} argument(s)")
            continue
        if s.robot not in robots:
            out.append(f"{s.id}: unknown robot {s.robot!r}")
        if s.status not in STATUSES:
            out.append(f"{s.id}: bad status {s.status!r}")
        for d in sorted(s.deps):
            if d not in idset:
                out.append(f"{s.id}: dependency {d!r} not in plan")
        if s.verb == "navigate":
            if s.args[0] not in stations:
                out.append(f"{s.id}: unresolved station {s.args[0]!r}")
        elif s.verb in ("pick",):
            if s.args[0] not in objects:
                out.append(f"{s.id}: unresolved object {s.args[0]!r}")
        elif s.verb in ("place", "place_and_start"):
            if s.args[0] not in objects:
                out.append(f"{s.id}: unresolved object {s.args[0]!r}")
            if s.args[1] not in fixtures and s.args[1] not in objects:
                out.append(f"{s.id}: unresolved target {s.args[1]!r}")
        elif s.args[0] not in fixtures:
            out.append(f"{s.id}: unresolved fixture {s.args[0]!r}")

    if any("dependency" in v for v in out):
        return out
    if _has_cycle(plan):
        out.append("dependency cycle")
        return out

    closure = _reaches(plan)
    by_robot: dict[str, list[str]] = {}
    for s in plan.subtasks:
        by_robot.setdefault(s.robot, []).append(s.id)
    for r, sids in sorted(by_robot.items()):
        for i, a in enumerate(sids):
            for b in sids[i + 1 :]:
                if a not in closure[b] and b not in closure[a]:
                    out.append(f"robot {r} not sequential: {a} and {b} are unordered")

    out.extend(_station_conflicts(plan, scenario))
    return out


def _station_conflicts(plan: Plan, scenario: Scenario) -> list[str]:
    pos = {r.id: r.home for r in scenario.robots}
    out = []
    for k, layer in enumerate(layers(plan), start=1):
        for s in layer:
            if s.verb == "navigate":
                pos[s.robot] = s.args[0]
        at: dict[str, list[str]] = {}
        for r in sorted(pos):
            at.setdefault(pos[r], []).append(r)
        for station, rs in sorted(at.items()):
            if len(rs) > 1:
                out.append(f"layer {k}: station exclusion, {' and '.join(rs)} both at {station}")
    return out


def layers(plan: Plan) -> list[list[Subtask]]:
    """Greedy topological layering; one subtask per robot per layer, ordered by robot id."""
    placed: set[str] = set()
    left = list(plan.subtasks)
    out: list[list[Subtask]] = []
    while left:
        layer: dict[str, Subtask] = {}
        for s in left:  # plan order gives lowest original index first
            if s.robot not in layer and s.deps <= placed:
                layer[s.robot] = s
        if not layer:
            raise PlanError(["dependency cycle or unresolved dependency among: " + ", ".join(s.id for s in left)])
        chosen = [layer[r] for r in sorted(layer)]
        out.append(chosen)
        placed |= {s.id for s in chosen}
        left = [s for s in left if s.id not in placed]
    return out


def plan_length(plan: Plan) -> int:
    return len(layers(plan))


def makespan(plan: Plan, durations: Mapping[str, float]) -> float:
    """Sum over layers of the slowest robot's work, assuming every primitive succeeds once."""
    return sum(max(float(durations[s.verb]) for s in layer) for layer in layers(plan))


# --------------------------------------------------------------------------
# Splicing
# --------------------------------------------------------------------------


def splice_replan(plan: Plan, failed_subtask: str, new_suffix: Sequence[Subtask], scenario: Scenario) -> Plan:
    """Replace every not-yet-done subtask by ``new_suffix``; the done prefix is kept verbatim."""
    failed = plan.get(failed_subtask)
    if failed.status == "done":
        raise PlanError([f"{failed_subtask} is already done"])
    prefix = [s for s in plan.subtasks if s.status == "done"]
    taken = {s.id for s in prefix}
    clash = [s.id for s in new_suffix if s.id in taken]
    if clash:
        raise PlanError([f"suffix reuses done id {c}" for c in clash])
    suffix = [replace(s, status="pending") for s in new_suffix]
    spliced = replace(plan, subtasks=tuple(prefix + suffix))
    violations = validate(spliced, scenario)
    if violations:
        raise PlanError(violations)
    return spliced


def insert_before(subtasks: Sequence[Subtask], anchor: str, new: Sequence[Subtask]) -> list[Subtask]:
    """Chain ``new`` (one robot) in front of ``anchor``, rewiring dependencies.

    The first inserted subtask inherits the anchor's deps; the anchor then
    depends on the last inserted one.
    """
    if not new:
        return list(subtasks)
    out: list[Subtask] = []
    for s in subtasks:
        if s.id == anchor:
            prev = s.deps
            for n in new:
                n = replace(n, deps=frozenset(prev))
                out.append(n)
                prev = frozenset({n.id})
            out.append(replace(s, deps=prev))
        else:
            out.append(s)
    return out


# --------------------------------------------------------------------------
# Rendering
# --------------------------------------------------------------------------


def render_layers(plan: Plan) -> str:
    """Aligned text table: one row per layer, one column per robot."""
    robots = plan.robots
    rows = [["layer", *robots]]
    for k, layer in enumerate(layers(plan), start=1):
        by = {s.robot: f"{s.verb}({', '.join(s.args)})" for s in layer}
        rows.append([str(k), *(by.get(r, "-") for r in robots)])
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows)


def door_fixtures(scenario: Scenario) -> list[str]:
    return [f.id for f in scenario.fixtures if FIXTURE_KINDS[f.kind].door]
