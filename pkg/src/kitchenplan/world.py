"""Symbolic kitchen world: scenarios, primitive preconditions and effects.

The world is a containment forest. Every object sits in exactly one place:
a fixture, another (container) object, or a robot's gripper. Robots stand at
*stations*, which are fixtures that can be navigated to. Some fixtures are
attachments (the faucet over the sink) and share the station of their host.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping

PRIMITIVE_KINDS = (
    "navigate",
    "pick",
    "place",
    "open",
    "close",
    "turn_on",
    "turn_off",
    "place_and_start",
)

DEFAULT_DURATIONS: dict[str, float] = {
    "navigate": 2.0,
    "pick": 1.5,
    "place": 1.5,
    "open": 1.0,
    "close": 1.0,
    "turn_on": 0.5,
    "turn_off": 0.5,
    "place_and_start": 2.0,
}

DETERMINISTIC_PROFILE: dict[str, float] = {k: 1.0 for k in PRIMITIVE_KINDS}

# navigation is station-to-station and always succeeds logically
NOISY_PROFILE: dict[str, float] = {k: (1.0 if k == "navigate" else 0.8) for k in PRIMITIVE_KINDS}


@dataclass(frozen=True)
class FixtureKind:
    door: bool = False
    powerable: bool = False
    heats: bool = False
    water: bool = False
    requires_container: bool = False
    attachment: bool = False


FIXTURE_KINDS: dict[str, FixtureKind] = {
    "home": FixtureKind(),
    "counter": FixtureKind(),
    "island": FixtureKind(),
    "pantry": FixtureKind(),
    "coffee_station": FixtureKind(),
    "cabinet": FixtureKind(door=True),
    "drawer": FixtureKind(door=True),
    "fridge": FixtureKind(door=True),
    "dishwasher": FixtureKind(door=True),
    "microwave": FixtureKind(door=True, powerable=True, heats=True),
    "stove": FixtureKind(powerable=True, heats=True, requires_container=True),
    "sink": FixtureKind(powerable=True, water=True, requires_container=True),
    "faucet": FixtureKind(attachment=True),
}

CONTAINER_CATEGORIES = frozenset({"bowl", "pan", "pot", "basket"})

THERMAL_STATES = ("frozen", "ambient", "heated")


class ScenarioError(ValueError):
    """A scenario violates one or more invariants."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("invalid scenario: " + "; ".join(self.violations))


class PreconditionError(RuntimeError):
    """``apply`` was called with a primitive whose preconditions fail."""


# --------------------------------------------------------------------------
# Scenario schema
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FixtureSpec:
    id: str
    kind: str
    door: str | None = None
    station: str | None = None


@dataclass(frozen=True)
class ObjectSpec:
    id: str
    category: str
    location: str
    thermal: str = "ambient"


@dataclass(frozen=True)
class RobotSpec:
    id: str
    home: str


@dataclass(frozen=True)
class Scenario:
    layout_id: str
    style_id: str
    fixtures: tuple[FixtureSpec, ...]
    objects: tuple[ObjectSpec, ...]
    robots: tuple[RobotSpec, ...]
    primitive_success_prob: Mapping[str, float] = field(
        default_factory=lambda: dict(DETERMINISTIC_PROFILE)
    )
    duration_table: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_DURATIONS))
    seed: int = 0

    def fixture(self, fid: str) -> FixtureSpec:
        for f in self.fixtures:
            if f.id == fid:
                return f
        raise KeyError(fid)

    @property
    def stations(self) -> list[str]:
        """Navigable fixtures in walkway order."""
        return [f.id for f in self.fixtures if FIXTURE_KINDS[f.kind].attachment is False]

    @property
    def explorable_stations(self) -> list[str]:
        return [f.id for f in self.fixtures if f.kind != "home" and not FIXTURE_KINDS[f.kind].attachment]

    def with_success_prob(self, probs: Mapping[str, float]) -> Scenario:
        return replace(self, primitive_success_prob=dict(probs))

    def to_dict(self) -> dict[str, Any]:
        return {
            "layout_id": self.layout_id,
            "style_id": self.style_id,
            "fixtures": [_drop_none(vars(f)) for f in self.fixtures],
            "objects": [vars(o).copy() for o in self.objects],
            "robots": [vars(r).copy() for r in self.robots],
            "primitive_success_prob": dict(self.primitive_success_prob),
            "duration_table": dict(self.duration_table),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Scenario:
        problems: list[str] = []
        _reject_unknown(data, _SCENARIO_KEYS, "scenario", problems)
        for key in ("layout_id", "style_id", "fixtures", "objects", "robots"):
            if key not in data:
                problems.append(f"scenario: missing key {key!r}")
        if problems:
            raise ScenarioError(problems)

        fixtures, objects, robots = [], [], []
        for i, f in enumerate(data["fixtures"]):
            _reject_unknown(f, {"id", "kind", "door", "station"}, f"fixtures[{i}]", problems)
            fixtures.append(FixtureSpec(f.get("id", ""), f.get("kind", ""), f.get("door"), f.get("station")))
        for i, o in enumerate(data["objects"]):
            _reject_unknown(o, {"id", "category", "location", "thermal"}, f"objects[{i}]", problems)
            objects.append(
                ObjectSpec(o.get("id", ""), o.get("category", ""), o.get("location", ""), o.get("thermal", "ambient"))
            )
        for i, r in enumerate(data["robots"]):
            _reject_unknown(r, {"id", "home"}, f"robots[{i}]", problems)
            robots.append(RobotSpec(r.get("id", ""), r.get("home", "")))
        if problems:
            raise ScenarioError(problems)
        return cls(
            layout_id=data["layout_id"],
            style_id=data["style_id"],
            fixtures=tuple(fixtures),
            objects=tuple(objects),
            robots=tuple(robots),
            primitive_success_prob=dict(data.get("primitive_success_prob", DETERMINISTIC_PROFILE)),
            duration_table=dict(data.get("duration_table", DEFAULT_DURATIONS)),
            seed=int(data.get("seed", 0)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


_SCENARIO_KEYS = {
    "layout_id",
    "style_id",
    "fixtures",
    "objects",
    "robots",
    "primitive_success_prob",
    "duration_table",
    "seed",
}


def _drop_none(d: dict[str, Any]) -> dict[str, Any]:
    return {k: v for k, v in d.items() if v is not None}


def _reject_unknown(d: Mapping[str, Any], allowed: set[str], where: str, problems: list[str]) -> None:
    for key in sorted(set(d) - allowed):
        problems.append(f"{where}: unknown key {key!r}")


def read_scenario(path: str | Path) -> Scenario:
    return Scenario.from_dict(json.loads(Path(path).read_text()))


def scenario_violations(spec: Scenario) -> list[str]:
    """Every violated scenario invariant, in a stable order."""
    out: list[str] = []
    ids: list[str] = [f.id for f in spec.fixtures] + [o.id for o in spec.objects] + [r.id for r in spec.robots]
    seen: set[str] = set()
    for i in ids:
        if not i:
            out.append("empty identifier")
        elif i in seen:
            out.append(f"duplicate identifier {i!r}")
        seen.add(i)

    fixture_ids = {f.id for f in spec.fixtures}
    object_ids = {o.id for o in spec.objects}
    for f in spec.fixtures:
        kind = FIXTURE_KINDS.get(f.kind)
        if kind is None:
            out.append(f"fixture {f.id!r}: unknown kind {f.kind!r}")
            continue
        if kind.door and f.door not in ("open", "closed"):
            out.append(f"fixture {f.id!r}: door-bearing fixture must declare door 'open' or 'closed'")
        if not kind.door and f.door is not None:
            out.append(f"fixture {f.id!r}: kind {f.kind!r} has no door")
        if kind.attachment:
            host = f.station
            if host not in fixture_ids or host == f.id:
                out.append(f"fixture {f.id!r}: attachment must name a host station")
        elif f.station not in (None, f.id):
            out.append(f"fixture {f.id!r}: only attachments may name another station")

    for o in spec.objects:
        if o.location not in fixture_ids and o.location not in object_ids:
            out.append(f"object {o.id!r}: initial placement {o.location!r} is not an existing fixture")
        if o.thermal not in THERMAL_STATES:
            out.append(f"object {o.id!r}: unknown thermal state {o.thermal!r}")
        if o.location in object_ids and _category(spec, o.location) not in CONTAINER_CATEGORIES:
            out.append(f"object {o.id!r}: placed in non-container {o.location!r}")
    # containment must be a forest rooted at fixtures
    parent = {o.id: o.location for o in spec.objects}
    for o in spec.objects:
        cur, steps = o.id, 0
        while cur in parent and steps <= len(parent):
            cur, steps = parent[cur], steps + 1
        if steps > len(parent):
            out.append(f"object {o.id!r}: containment cycle")

    if not spec.robots:
        out.append("robot count must be >= 1")
    homes: set[str] = set()
    station_ids = set(spec.stations) if not any("unknown kind" in v for v in out) else fixture_ids
    for r in spec.robots:
        if r.home not in station_ids:
            out.append(f"robot {r.id!r}: home {r.home!r} is not a station")
        if r.home in homes:
            out.append(f"robot {r.id!r}: home {r.home!r} shared with another robot")
        homes.add(r.home)

    for k, p in spec.primitive_success_prob.items():
        if k not in PRIMITIVE_KINDS:
            out.append(f"primitive_success_prob: unknown kind {k!r}")
        elif not 0.0 <= float(p) <= 1.0:
            out.append(f"primitive_success_prob[{k}] = {p} outside [0, 1]")
    for k in PRIMITIVE_KINDS:
        if k not in spec.duration_table:
            out.append(f"duration_table: missing kind {k!r}")
        elif float(spec.duration_table[k]) < 0:
            out.append(f"duration_table[{k}] is negative")
    return out


def _category(spec: Scenario, oid: str) -> str:
    for o in spec.objects:
        if o.id == oid:
            return o.category
    return ""


# --------------------------------------------------------------------------
# World state
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FixtureState:
    id: str
    kind: str
    station: str
    door: str | None = None
    powered: str | None = None
    water_running: bool = False

    @property
    def traits(self) -> FixtureKind:
        return FIXTURE_KINDS[self.kind]


@dataclass(frozen=True)
class ObjectState:
    id: str
    category: str
    location: str
    thermal: str = "ambient"
    wet: bool = False
    # inside the enclosure of a door-bearing fixture (vs. resting at its station)
    enclosed: bool = False

    @property
    def is_container(self) -> bool:
        return self.category in CONTAINER_CATEGORIES


@dataclass(frozen=True)
class RobotState:
    id: str
    at: str
    holding: str | None = None


@dataclass
class WorldState:
    fixtures: dict[str, FixtureState]
    objects: dict[str, ObjectState]
    robots: dict[str, RobotState]
    clock: float = 0.0
    success_prob: Mapping[str, float] = field(default_factory=lambda: dict(DETERMINISTIC_PROFILE))
    durations: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_DURATIONS))

    def copy(self) -> WorldState:
        return WorldState(
            dict(self.fixtures), dict(self.objects), dict(self.robots), self.clock, self.success_prob, self.durations
        )

    # -- queries -----------------------------------------------------------

    def station_of(self, item: str) -> str | None:
        """Station where ``item`` physically is, or None if unknown."""
        seen = 0
        while seen <= len(self.objects) + 1:
            if item in self.fixtures:
                return self.fixtures[item].station
            if item in self.robots:
                return self.robots[item].at
            if item in self.objects:
                item = self.objects[item].location
                seen += 1
                continue
            return None
        return None

    def accessible(self, oid: str) -> bool:
        """False if any enclosing door along the containment chain is closed."""
        cur = oid
        while cur in self.objects:
            obj = self.objects[cur]
            loc = obj.location
            if loc in self.fixtures:
                fx = self.fixtures[loc]
                return not (fx.traits.door and obj.enclosed and fx.door == "closed")
            cur = loc
        return True

    def robot_at(self, station: str) -> str | None:
        for r in sorted(self.robots):
            if self.robots[r].at == station:
                return r
        return None

    def contained_in(self, root: str) -> list[str]:
        """Object ids transitively inside ``root`` (fixture or object)."""
        out: list[str] = []
        frontier = [root]
        while frontier:
            cur = frontier.pop()
            for oid in sorted(self.objects):
                if self.objects[oid].location == cur:
                    out.append(oid)
                    frontier.append(oid)
        return sorted(out)

    def to_dict(self) -> dict[str, Any]:
        return {
            "clock": self.clock,
            "fixtures": {k: vars(v).copy() for k, v in sorted(self.fixtures.items())},
            "objects": {k: vars(v).copy() for k, v in sorted(self.objects.items())},
            "robots": {k: vars(v).copy() for k, v in sorted(self.robots.items())},
        }


def invariant_violations(state: WorldState) -> list[str]:
    """Check the WorldState invariants; empty means consistent."""
    out: list[str] = []
    for oid, obj in state.objects.items():
        if obj.location not in state.fixtures and obj.location not in state.objects and obj.location not in state.robots:
            out.append(f"{oid}: dangling location {obj.location!r}")
        if state.station_of(oid) is None:
            out.append(f"{oid}: containment does not reach a fixture (cycle?)")
        if obj.location in state.robots and state.robots[obj.location].holding != oid:
            out.append(f"{oid}: in gripper of {obj.location} but robot disagrees")
    for rid, rob in state.robots.items():
        if rob.at not in state.fixtures or state.fixtures[rob.at].station != rob.at:
            out.append(f"{rid}: not at a station")
        if rob.holding is not None:
            held = state.objects.get(rob.holding)
            if held is None or held.location != rid:
                out.append(f"{rid}: holding {rob.holding!r} but object is elsewhere")
    stations = [r.at for r in state.robots.values()]
    if len(stations) != len(set(stations)):
        out.append("station exclusion violated: two robots share a station")
    if state.clock < 0:
        out.append("negative clock")
    return out


def load_scenario(spec: Scenario) -> WorldState:
    violations = scenario_violations(spec)
    if violations:
        raise ScenarioError(violations)
    fixtures = {}
    for f in spec.fixtures:
        kind = FIXTURE_KINDS[f.kind]
        fixtures[f.id] = FixtureState(
            id=f.id,
            kind=f.kind,
            station=f.station if kind.attachment else f.id,
            door=f.door if kind.door else None,
            powered="off" if kind.powerable and not kind.water else None,
            water_running=False,
        )
    objects = {}
    for o in spec.objects:
        enclosed = o.location in fixtures and FIXTURE_KINDS[fixtures[o.location].kind].door
        objects[o.id] = ObjectState(o.id, o.category, o.location, o.thermal, False, enclosed)
    robots = {r.id: RobotState(r.id, r.home, None) for r in spec.robots}
    return WorldState(
        fixtures, objects, robots, 0.0, dict(spec.primitive_success_prob), dict(spec.duration_table)
    )


# --------------------------------------------------------------------------
# Primitives
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Primitive:
    kind: str
    robot: str
    args: tuple[str, ...]

    def __str__(self) -> str:
        return f"{self.kind}({', '.join((self.robot, *self.args))})"


_ARITY = {
    "navigate": 1,
    "pick": 1,
    "place": 2,
    "open": 1,
    "close": 1,
    "turn_on": 1,
    "turn_off": 1,
    "place_and_start": 2,
}


def arity(kind: str) -> int:
    return _ARITY[kind]


@dataclass(frozen=True)
class Verdict:
    """Outcome of a check. ``code`` is the machine-readable failure class."""

    passed: bool
    reason: str = ""
    code: str = ""
    raw: str = ""

    def __post_init__(self) -> None:
        if self.passed and self.reason:
            raise ValueError("a passing verdict carries no reason")
        if not self.passed and not self.reason:
            raise ValueError("a failing verdict needs a reason")

    def to_dict(self) -> dict[str, Any]:
        return {"passed": self.passed, "reason": self.reason, "code": self.code, "raw": self.raw}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Verdict:
        return cls(bool(d["passed"]), d.get("reason", ""), d.get("code", ""), d.get("raw", ""))


PASS = Verdict(True)


def _fail(code: str, reason: str) -> Verdict:
    return Verdict(False, reason, code)


def check_preconditions(state: WorldState, p: Primitive) -> Verdict:
    """Deterministic feasibility of ``p`` in ``state``.

    Unknown ids are reported as failures rather than raised, so the same
    function can judge partial worlds reconstructed from observations.
    """
    rob = state.robots.get(p.robot)
    if rob is None:
        return _fail("UNKNOWN_ID", f"unknown robot {p.robot}")
    if p.kind not in _ARITY or len(p.args) != _ARITY[p.kind]:
        return _fail("BAD_PRIMITIVE", f"malformed primitive {p}")

    if p.kind == "navigate":
        (target,) = p.args
        fx = state.fixtures.get(target)
        if fx is None or fx.station != target:
            return _fail("UNKNOWN_ID", f"{target} is not a known station")
        other = state.robot_at(target)
        if other is not None and other != p.robot:
            return _fail("STATION_OCCUPIED", f"target station occupied: {target} by {other}")
        return PASS

    if p.kind == "pick":
        (oid,) = p.args
        obj = state.objects.get(oid)
        if obj is None:
            return _fail("NOT_VISIBLE", f"{oid} not visible")
        if state.station_of(oid) != rob.at:
            return _fail("NOT_AT_STATION", f"robot not at station of {oid}")
        if rob.holding is not None:
            return _fail("GRIPPER_FULL", f"gripper not empty: holding {rob.holding}")
        if not state.accessible(oid):
            return _fail("INACCESSIBLE", "object inaccessible: enclosing door closed")
        return PASS

    if p.kind in ("place", "place_and_start"):
        oid, target = p.args
        if target not in state.fixtures and target not in state.objects:
            return _fail("NOT_AT_TARGET", f"robot not at target {target}")
        if state.station_of(target) != rob.at:
            return _fail("NOT_AT_TARGET", f"robot not at target {target}")
        if rob.holding != oid:
            return _fail("NOT_HOLDING", f"not holding {oid}")
        obj = state.objects[oid]
        if target in state.fixtures:
            fx = state.fixtures[target]
            if fx.traits.attachment:
                return _fail("NOT_CONTAINER", f"cannot place into {target}")
            if fx.traits.door and fx.door == "closed":
                return _fail("DOOR_CLOSED", f"{target} door is closed")
            if fx.traits.requires_container and not obj.is_container:
                return _fail("NEEDS_CONTAINER", f"{target} needs a container for {oid}")
            if p.kind == "place_and_start" and not fx.traits.powerable:
                return _fail("NOT_POWERABLE", f"{target} cannot be started")
        else:
            host = state.objects[target]
            if target == oid or not host.is_container or obj.is_container:
                return _fail("NOT_CONTAINER", f"{target} cannot hold {oid}")
            if host.location in state.robots:
                return _fail("NOT_AT_TARGET", f"{target} is being carried")
            if not state.accessible(target):
                return _fail("INACCESSIBLE", f"{target} inaccessible: enclosing door closed")
            if p.kind == "place_and_start":
                return _fail("NOT_POWERABLE", f"{target} cannot be started")
        return PASS

    (fid,) = p.args
    fx = state.fixtures.get(fid)
    if fx is None or fx.station != rob.at:
        return _fail("NOT_AT_STATION", f"robot not at {fid}")
    if p.kind in ("open", "close"):
        want = "closed" if p.kind == "open" else "open"
        if not fx.traits.door:
            return _fail("NO_DOOR", f"{fid} has no door")
        if fx.door != want:
            return _fail("DOOR_ALREADY_" + fx.door.upper(), f"{fid} door is already {fx.door}")
        if rob.holding is not None:
            return _fail("GRIPPER_FULL", f"gripper not empty: holding {rob.holding}")
        return PASS
    # turn_on / turn_off
    if not fx.traits.powerable:
        return _fail("NOT_POWERABLE", f"{fid} is not powerable")
    if fx.traits.door and fx.door != "closed":
        return _fail("DOOR_OPEN", f"{fid} door is open")
    return PASS


@dataclass(frozen=True)
class PrimitiveOutcome:
    succeeded: bool
    elapsed: float
    side_effect: tuple[str, str, str] | None = None  # ("object_dropped", object, station)

    def to_dict(self) -> dict[str, Any]:
        return {
            "succeeded": self.succeeded,
            "elapsed": self.elapsed,
            "side_effect": list(self.side_effect) if self.side_effect else None,
        }


def apply(state: WorldState, p: Primitive, rng: random.Random) -> tuple[WorldState, PrimitiveOutcome]:
    """Apply ``p`` and return the new state; ``state`` is left untouched.

    Exactly one uniform draw is consumed per call, whatever the outcome.
    """
    verdict = check_preconditions(state, p)
    if not verdict.passed:
        raise PreconditionError(f"{p}: {verdict.reason}")
    return apply_draw(state, p, rng.random())


def apply_draw(state: WorldState, p: Primitive, draw: float) -> tuple[WorldState, PrimitiveOutcome]:
    """``apply`` with an explicit uniform draw in [0, 1); success iff draw < p(kind)."""
    new = state.copy()
    elapsed = float(state.durations[p.kind])
    new.clock = state.clock + elapsed
    rob = new.robots[p.robot]
    ok = draw < float(state.success_prob.get(p.kind, 1.0))

    if not ok:
        side = None
        if p.kind in ("place", "place_and_start"):
            oid = p.args[0]
            new.objects[oid] = replace(new.objects[oid], location=rob.at, enclosed=False)
            new.robots[p.robot] = replace(rob, holding=None)
            side = ("object_dropped", oid, rob.at)
            _settle(new)
        return new, PrimitiveOutcome(False, elapsed, side)

    if p.kind == "navigate":
        new.robots[p.robot] = replace(rob, at=p.args[0])
    elif p.kind == "pick":
        oid = p.args[0]
        new.objects[oid] = replace(new.objects[oid], location=p.robot, enclosed=False)
        new.robots[p.robot] = replace(rob, holding=oid)
    elif p.kind in ("place", "place_and_start"):
        oid, target = p.args
        enclosed = target in new.fixtures and new.fixtures[target].traits.door
        new.objects[oid] = replace(new.objects[oid], location=target, enclosed=enclosed)
        new.robots[p.robot] = replace(rob, holding=None)
        if p.kind == "place_and_start":
            fx = new.fixtures[target]
            if fx.traits.door:
                fx = replace(fx, door="closed")
            new.fixtures[target] = _power(fx, True)
    elif p.kind in ("open", "close"):
        fx = new.fixtures[p.args[0]]
        fx = replace(fx, door="open" if p.kind == "open" else "closed")
        if p.kind == "open" and fx.powered == "on":
            fx = replace(fx, powered="off")
        new.fixtures[fx.id] = fx
    else:
        fx = new.fixtures[p.args[0]]
        new.fixtures[fx.id] = _power(fx, p.kind == "turn_on")
    _settle(new)
    return new, PrimitiveOutcome(True, elapsed, None)


def _power(fx: FixtureState, on: bool) -> FixtureState:
    if fx.traits.water:
        return replace(fx, water_running=on)
    return replace(fx, powered="on" if on else "off")


def _settle(state: WorldState) -> None:
    """Propagate appliance effects to contents (heating, defrosting)."""
    for fid in sorted(state.fixtures):
        fx = state.fixtures[fid]
        if fx.traits.heats and fx.powered == "on":
            for oid in state.contained_in(fid):
                obj = state.objects[oid]
                if fx.traits.door and not _enclosed_chain(state, oid, fid):
                    continue
                if obj.thermal != "heated":
                    state.objects[oid] = replace(obj, thermal="heated")
        if fx.traits.water and fx.water_running:
            for cid in state.contained_in(fid):
                container = state.objects[cid]
                if container.location != fid or not container.is_container:
                    continue
                for oid in state.contained_in(cid):
                    state.objects[oid] = replace(state.objects[oid], wet=True, thermal="ambient")


def _enclosed_chain(state: WorldState, oid: str, fid: str) -> bool:
    cur = oid
    while state.objects[cur].location != fid:
        cur = state.objects[cur].location
    return state.objects[cur].enclosed


# --------------------------------------------------------------------------
# Goal predicates
# --------------------------------------------------------------------------

Predicate = tuple  # nested tuples, e.g. ("and", ("in", "carrot", "microwave"), ("on", "microwave"))


def holds(state: WorldState, pred: Predicate) -> bool:
    """Evaluate a goal predicate against ground truth."""
    op = pred[0]
    if op == "and":
        return all(holds(state, sub) for sub in pred[1:])
    if op == "robot_at":
        r = state.robots.get(pred[1])
        return r is not None and r.at == pred[2]
    if op == "holding":
        r = state.robots.get(pred[1])
        return r is not None and r.holding == pred[2]
    if op == "in":
        obj = state.objects.get(pred[1])
        if obj is None or obj.location != pred[2]:
            return False
        fx = state.fixtures.get(pred[2])
        return not (fx is not None and fx.traits.door) or obj.enclosed
    if op == "door":
        fx = state.fixtures.get(pred[1])
        return fx is not None and fx.door == pred[2]
    if op in ("on", "off"):
        fx = state.fixtures.get(pred[1])
        if fx is None:
            return False
        running = fx.water_running if fx.traits.water else fx.powered == "on"
        return running == (op == "on")
    if op == "thermal":
        obj = state.objects.get(pred[1])
        return obj is not None and obj.thermal == pred[2]
    if op == "wet":
        obj = state.objects.get(pred[1])
        return obj is not None and obj.wet
    raise ValueError(f"unknown predicate {op!r}")


def goal_for(kind: str, robot: str, args: Iterable[str], door_fixtures: Iterable[str] = ()) -> Predicate:
    """Success criterion of a single primitive-level subtask."""
    args = tuple(args)
    if kind == "navigate":
        return ("robot_at", robot, args[0])
    if kind == "pick":
        return ("holding", robot, args[0])
    if kind == "place":
        return ("in", args[0], args[1])
    if kind == "open":
        return ("door", args[0], "open")
    if kind == "close":
        return ("door", args[0], "closed")
    if kind == "turn_on":
        return ("on", args[0])
    if kind == "turn_off":
        return ("off", args[0])
    if kind == "place_and_start":
        parts: list[Predicate] = [("in", args[0], args[1])]
        if args[1] in set(door_fixtures):
            parts.append(("door", args[1], "closed"))
        parts.append(("on", args[1]))
        return ("and", *parts)
    raise ValueError(f"unknown primitive kind {kind!r}")


def pred_to_json(pred: Predicate) -> list[Any]:
    return [pred_to_json(x) if isinstance(x, tuple) else x for x in pred]


def pred_from_json(data: Any) -> Predicate:
    return tuple(pred_from_json(x) if isinstance(x, list) else x for x in data)
