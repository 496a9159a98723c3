"""Station-local observation, item registry and scene exploration."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Any, Iterable, Mapping, Sequence

from .world import Primitive, WorldState, apply_draw


@dataclass(frozen=True)
class ObservedFixture:
    id: str
    kind: str
    door: str | None
    powered: str | None
    water_running: bool
    # closed door: whatever is inside is not itemized
    contents_unknown: bool


@dataclass(frozen=True)
class ObservedObject:
    id: str
    category: str
    thermal: str
    wet: bool
    containment: str
    enclosed: bool


@dataclass(frozen=True)
class Observation:
    robot: str
    station: str
    visible_fixtures: tuple[ObservedFixture, ...]
    visible_objects: tuple[ObservedObject, ...]
    holding: str | None
    clock: float
    # stations of the other robots, as reported over the team channel
    peers: tuple[tuple[str, str], ...] = ()

    def fixture(self, fid: str) -> ObservedFixture | None:
        return next((f for f in self.visible_fixtures if f.id == fid), None)

    def object(self, oid: str) -> ObservedObject | None:
        return next((o for o in self.visible_objects if o.id == oid), None)

    def to_dict(self) -> dict[str, Any]:
        return {
            "robot": self.robot,
            "station": self.station,
            "visible_fixtures": [vars(f).copy() for f in self.visible_fixtures],
            "visible_objects": [vars(o).copy() for o in self.visible_objects],
            "holding": self.holding,
            "clock": self.clock,
            "peers": [list(p) for p in self.peers],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Observation:
        return cls(
            robot=d["robot"],
            station=d["station"],
            visible_fixtures=tuple(ObservedFixture(**f) for f in d["visible_fixtures"]),
            visible_objects=tuple(ObservedObject(**o) for o in d["visible_objects"]),
            holding=d.get("holding"),
            clock=float(d["clock"]),
            peers=tuple((p[0], p[1]) for p in d.get("peers", ())),
        )


def observe(state: WorldState, robot: str) -> Observation:
    if robot not in state.robots:
        raise KeyError(f"unknown robot {robot!r}")
    me = state.robots[robot]
    station = me.at
    fixtures = []
    for fid in sorted(state.fixtures):
        fx = state.fixtures[fid]
        if fx.station != station:
            continue
        fixtures.append(
            ObservedFixture(
                id=fid,
                kind=fx.kind,
                door=fx.door,
                powered=fx.powered,
                water_running=fx.water_running,
                contents_unknown=fx.traits.door and fx.door == "closed",
            )
        )
    objects = []
    for oid in sorted(state.objects):
        obj = state.objects[oid]
        if state.station_of(oid) != station or not state.accessible(oid):
            continue
        if _carried_by_other(state, oid, robot):
            continue
        objects.append(ObservedObject(oid, obj.category, obj.thermal, obj.wet, obj.location, obj.enclosed))
    peers = tuple((r, state.robots[r].at) for r in sorted(state.robots) if r != robot)
    return Observation(robot, station, tuple(fixtures), tuple(objects), me.holding, state.clock, peers)


def _carried_by_other(state: WorldState, oid: str, robot: str) -> bool:
    cur = oid
    while cur in state.objects:
        cur = state.objects[cur].location
    return cur in state.robots and cur != robot


# --------------------------------------------------------------------------
# Category matching
# --------------------------------------------------------------------------


@lru_cache(maxsize=1)
def synonym_table() -> dict[str, frozenset[str]]:
    raw = json.loads(resources.files("kitchenplan.data").joinpath("synonyms.json").read_text())
    return {k: frozenset(v) for k, v in raw.items()}


def _norm(word: str) -> str:
    word = word.strip().lower().replace(" ", "_")
    table = synonym_table()
    if word not in table and word.endswith("es") and word[:-2] in table:
        return word[:-2]
    if word not in table and word.endswith("s") and word[:-1] in table:
        return word[:-1]
    return word


def category_matches(hypothesis: str, category: str) -> bool:
    """True if ``category`` satisfies ``hypothesis`` ("microwave or stove" style alternatives allowed)."""
    category = category.lower()
    for alt in hypothesis.split(" or "):
        alt = _norm(alt)
        if alt == category or category in synonym_table().get(alt, ()):
            return True
    return False


# --------------------------------------------------------------------------
# Registry
# --------------------------------------------------------------------------


@dataclass
class RegistryEntry:
    category: str
    station: str
    state: dict[str, Any]
    clock: float


@dataclass
class ItemRegistry:
    """What the team has seen so far. Entries are overwritten, never removed."""

    entries: dict[str, RegistryEntry] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, item: str) -> bool:
        return item in self.entries

    def merge(self, obs: Observation) -> None:
        for f in obs.visible_fixtures:
            self.entries[f.id] = RegistryEntry(
                f.kind,
                obs.station,
                {"door": f.door, "powered": f.powered, "water_running": f.water_running},
                obs.clock,
            )
        for o in obs.visible_objects:
            if o.containment == obs.robot:
                continue  # held items keep their last resting place
            self.entries[o.id] = RegistryEntry(
                o.category,
                obs.station,
                {"thermal": o.thermal, "wet": o.wet, "containment": o.containment},
                obs.clock,
            )

    def find(self, hypothesis: str) -> list[str]:
        return [i for i in sorted(self.entries) if category_matches(hypothesis, self.entries[i].category)]

    def snapshot(self) -> dict[str, Any]:
        return {
            k: {"category": e.category, "station": e.station, "state": dict(sorted(e.state.items())), "clock": e.clock}
            for k, e in sorted(self.entries.items())
        }

    @classmethod
    def from_snapshot(cls, snap: Mapping[str, Any]) -> ItemRegistry:
        return cls({k: RegistryEntry(v["category"], v["station"], dict(v["state"]), v["clock"]) for k, v in snap.items()})


def sufficient(registry: ItemRegistry, proposed: Sequence[str]) -> bool:
    # an empty proposal never stops exploration early
    if not proposed:
        return False
    return all(registry.find(h) for h in proposed)


# --------------------------------------------------------------------------
# Exploration
# --------------------------------------------------------------------------


def partition_routes(stations: Sequence[str], robots: Sequence[str]) -> dict[str, list[str]]:
    """Deal stations out round-robin so each robot gets a disjoint route."""
    routes: dict[str, list[str]] = {r: [] for r in robots}
    for i, s in enumerate(stations):
        routes[robots[i % len(robots)]].append(s)
    return routes


def explore_step(
    state: WorldState, robot: str, registry: ItemRegistry, route: Sequence[str]
) -> tuple[str | None, ItemRegistry]:
    """Record what ``robot`` sees and return the next station of its route (None when done)."""
    registry.merge(observe(state, robot))
    here = state.robots[robot].at
    if here in route:
        i = list(route).index(here) + 1
        return (route[i] if i < len(route) else None), registry
    return (route[0] if route else None), registry


@dataclass
class ExplorationResult:
    registry: ItemRegistry
    time: float
    rounds: int
    stopped_early: bool
    visits: list[tuple[int, str, str]]  # (round, robot, station)


def explore(
    state: WorldState,
    robots: Iterable[str],
    proposed: Sequence[str],
    registry: ItemRegistry | None = None,
    early_stop: bool = True,
) -> ExplorationResult:
    """Traverse the scene in parallel rounds until the proposal is satisfied or all stations are seen.

    Each round every unfinished robot moves one station along its route;
    a round costs one navigation duration of simulated time.
    """
    robots = list(robots)
    registry = registry if registry is not None else ItemRegistry()
    routes = partition_routes(explorable_stations(state), robots)
    world = state.copy()
    nav = float(world.durations["navigate"])
    nxt: dict[str, str | None] = {}
    for r in robots:
        nxt[r], _ = explore_step(world, r, registry, routes[r])
    rounds, visits = 0, []
    while any(nxt[r] is not None for r in robots):
        if early_stop and sufficient(registry, proposed):
            return ExplorationResult(registry, rounds * nav, rounds, True, visits)
        rounds += 1
        for r in robots:
            target = nxt[r]
            if target is None:
                continue
            world, _ = apply_draw(world, Primitive("navigate", r, (target,)), 0.0)
            visits.append((rounds, r, target))
            nxt[r], _ = explore_step(world, r, registry, routes[r])
    return ExplorationResult(registry, rounds * nav, rounds, False, visits)


def explorable_stations(state: WorldState) -> list[str]:
    """Explorable stations in walkway (insertion) order."""
    return [fid for fid, fx in state.fixtures.items() if fx.station == fid and fx.kind != "home"]
