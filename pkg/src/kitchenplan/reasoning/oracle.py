"""Deterministic scripted reasoner.

Checks are grounded in the world model but only through the serialized
observation the robot sent, never the true world state. Planning emulates a
planner with one fixed blind spot per task (the closed door or the missing
container). It stays blind until a stored reflection names that constraint.
In-iteration repairs are local patches, so a repaired plan keeps the
detours an unreflective planner would take.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Any, Mapping, Sequence

from ..perception import ItemRegistry, Observation
from ..plan import Plan, Subtask, fresh_ids, insert_before, make_subtask
from ..tasks import TaskSpec, bind_rows, bindings_from_items, generic_proposals, load_tasks
from ..world import (
    FIXTURE_KINDS,
    FixtureState,
    ObjectState,
    Predicate,
    RobotState,
    Verdict,
    WorldState,
    check_preconditions,
)
from .base import Reasoner, ReasonerRequest, Reflection

CONTAINER_FOR = {"sink": "bowl", "stove": "pan"}

MODES = ("adaptive", "naive", "reflective")


class OracleReasoner(Reasoner):
    """Scripted backend.

    ``mode`` selects the planner: ``adaptive`` stays blind until a matching
    reflection exists, ``naive`` never learns, and ``reflective`` always
    returns the reference decomposition.
    """

    backend_id = "oracle"

    def __init__(self, mode: str = "adaptive"):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        self.mode = mode
        self.calls = 0

    def handle(self, req: ReasonerRequest) -> Any:
        if req.kind == "ProposeItems":
            return propose(req.instruction)
        if req.kind == "Decompose":
            if req.failed_subtask:
                return self._replan(req)
            return self._decompose(req)
        obs = Observation.from_dict(req.observation)
        sub = Subtask.from_dict(req.subtask)
        if req.kind == "PreCheck":
            return oracle_precheck(obs, sub)
        if req.kind == "PostCheck":
            return oracle_postcheck(obs, sub)
        return oracle_reflect(obs, sub, Verdict.from_dict(req.verdict), req.iteration)

    # -- planning ----------------------------------------------------------

    def _decompose(self, req: ReasonerRequest) -> Plan:
        registry = ItemRegistry.from_snapshot(req.registry)
        task, b = resolve_task(req.instruction, registry, req.robots)
        if task is None:
            return Plan(req.iteration, (), {"backend": self.backend_id})
        codes = {r.get("code") for r in req.reflections}
        aware = self.mode == "reflective" or (self.mode == "adaptive" and task.blindspot in codes)
        if task.container and "$container" not in b:
            aware = False
        if aware:
            rows = task.canonical[min(max(req.robot_count, 1), 2)]
        else:
            rows = task.naive
        subs = bind_rows(rows, b, _doors(registry))
        return Plan(req.iteration, tuple(subs), {"backend": self.backend_id})

    def _replan(self, req: ReasonerRequest) -> Plan:
        plan = Plan.from_dict(req.previous_plan)
        registry = ItemRegistry.from_snapshot(req.registry)
        obs = Observation.from_dict(req.observation)
        failed = plan.get(req.failed_subtask)
        code = _latest_code(req.reflections, failed)
        suffix = _Patcher(plan, registry, obs).patch(failed, code)
        return Plan(plan.iteration, tuple(suffix), {"backend": self.backend_id})


def propose(instruction: str) -> list[str]:
    text = instruction.strip().lower()
    generic = generic_proposals()
    if text in generic:
        return list(generic[text])
    for task in load_tasks().values():
        if task.answers(text):
            return list(task.proposal)
    return []


def resolve_task(
    instruction: str, registry: ItemRegistry, robots: Sequence[tuple[str, str]]
) -> tuple[TaskSpec | None, dict[str, str]]:
    """Pick the task the instruction means in *this* scene.

    An ambiguous instruction ("heat the vegetables") goes to the first
    matching task whose items were all discovered, else to the first one
    whose appliance and food were.
    """
    items = {i: (e.category, e.station) for i, e in registry.entries.items()}
    partial: tuple[TaskSpec | None, dict[str, str]] = (None, {})
    for task in load_tasks().values():
        if not task.answers(instruction):
            continue
        b = bindings_from_items(task, items, robots)
        if b is None:
            continue
        if not task.container or "$container" in b:
            return task, b
        if partial[0] is None:
            partial = (task, b)
    return partial


def _doors(registry: ItemRegistry) -> list[str]:
    return [i for i, e in registry.entries.items() if e.category in FIXTURE_KINDS and FIXTURE_KINDS[e.category].door]


def _latest_code(reflections: Sequence[Mapping[str, Any]], failed: Subtask) -> str:
    for r in reversed(reflections):
        s = r.get("subtask", {})
        if s.get("verb") == failed.verb and list(s.get("args", ())) == list(failed.args):
            return r.get("code", "")
    return ""


class _Patcher:
    """Local repairs of the remaining plan, keyed by the failure class."""

    def __init__(self, plan: Plan, registry: ItemRegistry, obs: Observation):
        self.plan = plan
        self.registry = registry
        self.obs = obs
        self.doors = set(_doors(registry))
        self._ids = iter(fresh_ids(plan, 64))

    def _new(self, verb: str, robot: str, *args: str) -> Subtask:
        return make_subtask(next(self._ids), verb, robot, args, (), self.doors)

    def station(self, item: str, before: str | None = None) -> str | None:
        """Where ``item`` will be when the subtask ``before`` runs, judging by the plan."""
        subs = list(self.plan.subtasks)
        if before is not None:
            subs = subs[: self.plan.index(before)] if before in {s.id for s in subs} else subs
        for s in reversed(subs):
            if s.verb in ("place", "place_and_start") and s.args[0] == item:
                return self.station(s.args[1], s.id)
        entry = self.registry.entries.get(item)
        return entry.station if entry else None

    def patch(self, failed: Subtask, code: str) -> list[Subtask]:
        rest = self.plan.remaining()
        r, obs = failed.robot, self.obs
        if code == "DOOR_CLOSED":
            return insert_before(rest, failed.id, [self._new("open", r, failed.args[1])])
        if code == "DOOR_OPEN":
            return insert_before(rest, failed.id, [self._new("close", r, failed.args[0])])
        if code == "GRIPPER_FULL" and obs.holding:
            return self._free_gripper(rest, failed)
        if code == "NEEDS_CONTAINER":
            return self._add_container(rest, failed)
        if code == "NOT_HOLDING":
            item = failed.args[0]
            seen = obs.object(item)
            if seen is not None and seen.containment != r:
                return insert_before(rest, failed.id, [self._new("pick", r, item)])
            where = self.station(item)
            target = self.station(failed.args[1], failed.id)
            if where and target:
                return insert_before(
                    rest, failed.id, [self._new("navigate", r, where), self._new("pick", r, item), self._new("navigate", r, target)]
                )
            return rest
        if code in ("NOT_AT_TARGET", "NOT_AT_STATION"):
            target = failed.args[-1] if failed.verb in ("place", "place_and_start", "pick") else failed.args[0]
            where = self.station(target, failed.id)
            if where and where != obs.station:
                return insert_before(rest, failed.id, [self._new("navigate", r, where)])
            return rest
        if code in ("INACCESSIBLE", "NOT_VISIBLE") and failed.verb == "pick":
            shut = [f.id for f in obs.visible_fixtures if f.contents_unknown]
            if shut and self.station(failed.args[0]) == obs.station:
                return insert_before(rest, failed.id, [self._new("open", r, shut[0])])
            return rest
        return rest

    def _free_gripper(self, rest: list[Subtask], failed: Subtask) -> list[Subtask]:
        r, held, here = failed.robot, self.obs.holding, self.obs.station
        home = self.station(held, failed.id)
        if home is None:
            return rest
        put: list[Subtask] = []
        if home != here:
            put.append(self._new("navigate", r, home))
        put.append(self._new("place", r, held, home))
        if home != here:
            put.append(self._new("navigate", r, here))
        rest = insert_before(rest, failed.id, put)
        after = False
        for s in rest:
            if s.id == failed.id:
                after = True
                continue
            if after and s.robot == r and s.verb in ("place", "place_and_start") and s.args[0] == held:
                target = self.station(s.args[1], s.id)
                if target is None:
                    break
                regrab = [self._new("navigate", r, home), self._new("pick", r, held), self._new("navigate", r, target)]
                return insert_before(rest, s.id, regrab)
        return rest

    def _add_container(self, rest: list[Subtask], failed: Subtask) -> list[Subtask]:
        r = failed.robot
        item, fixture = failed.args[0], failed.args[1]
        wanted = CONTAINER_FOR.get(self._kind(fixture))
        found = self.registry.find(wanted) if wanted else []
        if not found:
            return rest
        container = found[0]
        where = self.station(container, failed.id)
        at = self.station(fixture)
        fetch = [
            self._new("navigate", r, where),
            self._new("pick", r, container),
            self._new("navigate", r, at),
            self._new("place", r, container, fixture),
        ]
        rest = insert_before(rest, failed.id, fetch)
        args = (item, container)
        return [
            replace(s, verb="place", args=args, goal=make_subtask(s.id, "place", r, args).goal) if s.id == failed.id else s
            for s in rest
        ]

    def _kind(self, item: str) -> str:
        entry = self.registry.entries.get(item)
        return entry.category if entry else ""


# --------------------------------------------------------------------------
# Observation-grounded checks
# --------------------------------------------------------------------------


def world_from_observation(obs: Observation, sub: Subtask | None = None) -> WorldState:
    """Partial world holding only what ``obs`` shows (plus peer robots and a navigation target)."""
    fixtures: dict[str, FixtureState] = {}
    for f in obs.visible_fixtures:
        fixtures[f.id] = FixtureState(f.id, f.kind, obs.station, f.door, f.powered, f.water_running)
    if obs.station not in fixtures:
        fixtures[obs.station] = FixtureState(obs.station, "home", obs.station)
    unseen = [st for _, st in obs.peers]
    if sub is not None and sub.verb == "navigate":
        unseen.append(sub.args[0])
    for st in unseen:
        if st not in fixtures:
            fixtures[st] = FixtureState(st, "home", st)
    objects = {
        o.id: ObjectState(o.id, o.category, o.containment, o.thermal, o.wet, o.enclosed) for o in obs.visible_objects
    }
    robots = {obs.robot: RobotState(obs.robot, obs.station, obs.holding)}
    for rid, st in obs.peers:
        robots[rid] = RobotState(rid, st, None)
    return WorldState(fixtures, objects, robots, obs.clock)


def oracle_precheck(obs: Observation, sub: Subtask) -> Verdict:
    if sub.robot != obs.robot:
        return Verdict(False, f"observation is from {obs.robot}, subtask belongs to {sub.robot}", "WRONG_ROBOT")
    return check_preconditions(world_from_observation(obs, sub), sub.primitive)


def holds_observed(pred: Predicate, obs: Observation) -> bool:
    """Judge a goal predicate from what the robot can see.

    An object that is neither held nor visible next to a closed door is
    taken to be behind that door.
    """
    op = pred[0]
    if op == "and":
        return all(holds_observed(p, obs) for p in pred[1:])
    if op == "robot_at":
        return obs.robot == pred[1] and obs.station == pred[2]
    if op == "holding":
        return obs.robot == pred[1] and obs.holding == pred[2]
    if op == "in":
        item, where = pred[1], pred[2]
        seen = obs.object(item)
        fx = obs.fixture(where)
        if seen is not None:
            door = fx is not None and FIXTURE_KINDS[fx.kind].door
            return seen.containment == where and (seen.enclosed or not door)
        return fx is not None and fx.contents_unknown and obs.holding != item
    if op == "door":
        fx = obs.fixture(pred[1])
        return fx is not None and fx.door == pred[2]
    if op in ("on", "off"):
        fx = obs.fixture(pred[1])
        if fx is None:
            return False
        running = fx.water_running if FIXTURE_KINDS[fx.kind].water else fx.powered == "on"
        return running == (op == "on")
    if op == "thermal":
        seen = obs.object(pred[1])
        return seen is not None and seen.thermal == pred[2]
    if op == "wet":
        seen = obs.object(pred[1])
        return seen is not None and seen.wet
    raise ValueError(f"unknown predicate {op!r}")


def oracle_postcheck(obs: Observation, sub: Subtask) -> Verdict:
    if holds_observed(sub.goal, obs):
        return Verdict(True)
    if sub.verb in ("place", "place_and_start"):
        return Verdict(False, "object not in target", "GOAL_UNMET")
    return Verdict(False, f"{sub.verb} did not take effect", "GOAL_UNMET")


_CAUSES = {
    "DOOR_CLOSED": "open the {target} door before any place into it",
    "NEEDS_CONTAINER": "put a {container} into the {target} first: the {target} only takes items inside a container",
    "NOT_HOLDING": "pick up {item} again before placing it",
    "DOOR_OPEN": "close the {item} door before starting it",
    "STATION_OCCUPIED": "wait for {item} to be cleared before navigating there",
    "NOT_AT_TARGET": "navigate to {target} before {verb}",
    "NOT_AT_STATION": "navigate to {item} before {verb}",
    "INACCESSIBLE": "open the enclosure holding {item} before picking it",
    "NOT_VISIBLE": "locate {item} before picking it",
}


def oracle_reflect(obs: Observation, sub: Subtask, verdict: Verdict, iteration: int = 0) -> Reflection:
    code = verdict.code
    item = sub.args[0] if sub.args else ""
    target = sub.args[1] if len(sub.args) > 1 else item
    if code == "GRIPPER_FULL":
        cause = "free the gripper before opening doors" if sub.verb in ("open", "close") else f"free the gripper before picking up {item}"
    elif code in _CAUSES:
        kind = obs.fixture(target).kind if obs.fixture(target) else target
        cause = _CAUSES[code].format(item=item, target=target, verb=sub.verb, container=CONTAINER_FOR.get(kind, "container"))
    else:
        cause = f"{sub.verb} was infeasible: {verdict.reason}"
    return Reflection(iteration, sub.to_dict(), cause, code)
