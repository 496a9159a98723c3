"""The four kitchen tasks: scene randomization and reference decompositions.

Reference plans are stored as role templates (``$food``, ``$appliance`` ...)
and bound to concrete ids either from a scenario (ground truth) or from an
item registry (what the robots discovered).
"""

from __future__ import annotations

import json
import random
import string
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Any, Mapping, Sequence

from .perception import category_matches
from .plan import Plan, Subtask, make_subtask
from .world import FIXTURE_KINDS, FixtureSpec, ObjectSpec, Predicate, RobotSpec, Scenario, pred_from_json

TASK_NAMES = ("OpenCabinetPnP", "OpenMicrowavePnP", "DefrostInBowl", "HeatOnStove")

# surfaces that may hold loose items at scene start
_SURFACES = ("counter", "island", "pantry", "coffee_station")


@dataclass(frozen=True)
class TaskSpec:
    name: str
    instruction: str
    aliases: tuple[str, ...]
    proposal: tuple[str, ...]
    food_group: str
    food_thermal: str
    container: str | None
    appliance: str
    blindspot: str
    goal_template: Any
    naive: tuple[tuple, ...]
    canonical: Mapping[int, tuple[tuple, ...]]
    reference_length: Mapping[int, int]

    def answers(self, instruction: str) -> bool:
        text = instruction.strip().lower()
        return text == self.instruction or text in self.aliases


@lru_cache(maxsize=None)
def _data(name: str) -> Any:
    return json.loads(resources.files("kitchenplan.data").joinpath(name).read_text())


@lru_cache(maxsize=1)
def load_tasks() -> dict[str, TaskSpec]:
    out = {}
    for t in _data("tasks.json")["tasks"]:
        out[t["name"]] = TaskSpec(
            name=t["name"],
            instruction=t["instruction"],
            aliases=tuple(t["aliases"]),
            proposal=tuple(t["proposal"]),
            food_group=t["food_group"],
            food_thermal=t["food_thermal"],
            container=t["container"],
            appliance=t["appliance"],
            blindspot=t["blindspot"],
            goal_template=t["goal"],
            naive=tuple(tuple(r) for r in t["naive"]),
            canonical={int(k): tuple(tuple(r) for r in v) for k, v in t["canonical"].items()},
            reference_length={int(k): v for k, v in t["reference_length"].items()},
        )
    return out


def generic_proposals() -> dict[str, list[str]]:
    """Item proposals for instructions that do not name an appliance."""
    return dict(_data("tasks.json")["generic_proposals"])


def get_task(name: str) -> TaskSpec:
    try:
        return load_tasks()[name]
    except KeyError:
        raise KeyError(f"unknown task {name!r}; expected one of {', '.join(TASK_NAMES)}") from None


def layouts() -> list[dict[str, Any]]:
    return list(_data("layouts.json")["layouts"])


def object_pool() -> dict[str, list[str]]:
    return dict(_data("objects.json"))


# --------------------------------------------------------------------------
# Scene randomization
# --------------------------------------------------------------------------


def robot_ids(n: int) -> list[str]:
    return [f"robot_{string.ascii_lowercase[i]}" for i in range(n)]


def instantiate_task(task: TaskSpec, trial_seed: int, robot_count: int = 1) -> Scenario:
    """Deterministic randomized scene for ``(task, trial_seed)``.

    Layout, style, food category, which surface holds the food and which the
    container, and the distractor objects are all drawn from the seed. The
    robot count only adds robots and their homes; the scene is otherwise
    identical across robot counts.
    """
    rng = random.Random(f"{task.name}:{trial_seed}")
    layout = rng.choice(layouts())
    style = f"style_{rng.randrange(layout['styles']):02d}"
    pool = object_pool()

    fixtures: list[FixtureSpec] = [FixtureSpec(f"home_{c}", "home") for c in string.ascii_lowercase[:robot_count]]
    for kind in layout["walkway"]:
        fixtures.append(FixtureSpec(kind, kind, "closed" if FIXTURE_KINDS[kind].door else None))
        if kind == "sink":
            fixtures.append(FixtureSpec("faucet", "faucet", None, "sink"))

    food_station, container_station = rng.sample(["counter", "island"], 2)
    food = rng.choice(pool[task.food_group])
    objects = [ObjectSpec(food, food, food_station, task.food_thermal)]
    if task.container:
        objects.append(ObjectSpec(task.container, task.container, container_station))
    surfaces = [s for s in layout["walkway"] if s in _SURFACES]
    for cat in rng.sample(pool["misc"], rng.randint(2, 4)):
        objects.append(ObjectSpec(cat, cat, rng.choice(surfaces)))

    robots = tuple(RobotSpec(r, f"home_{r[-1]}") for r in robot_ids(robot_count))
    return Scenario(
        layout_id=layout["id"],
        style_id=style,
        fixtures=tuple(fixtures),
        objects=tuple(objects),
        robots=robots,
        seed=trial_seed,
    )


# --------------------------------------------------------------------------
# Role binding
# --------------------------------------------------------------------------


def bindings_from_items(
    task: TaskSpec,
    items: Mapping[str, tuple[str, str]],
    robots: Sequence[tuple[str, str]],
) -> dict[str, str] | None:
    """Bind template roles from ``{id: (category, station)}``; None if a role is missing."""
    b: dict[str, str] = {}
    food = sorted(i for i, (cat, _) in items.items() if category_matches(task.food_group, cat))
    appliance = sorted(i for i, (cat, _) in items.items() if cat == task.appliance)
    if not food or not appliance:
        return None
    b["$food"], b["$food_station"] = food[0], items[food[0]][1]
    b["$appliance"] = appliance[0]
    if task.container:
        cont = sorted(i for i, (cat, _) in items.items() if cat == task.container)
        if cont:
            b["$container"], b["$container_station"] = cont[0], items[cont[0]][1]
    for role, (rid, home) in zip("ABCDEFGH", robots):
        b[f"${role}"] = rid
        b[f"$home_{role}"] = home
    return b


def scenario_bindings(task: TaskSpec, scenario: Scenario) -> dict[str, str]:
    items = {f.id: (f.kind, f.station or f.id) for f in scenario.fixtures}
    items.update({o.id: (o.category, o.location) for o in scenario.objects})
    b = bindings_from_items(task, items, [(r.id, r.home) for r in scenario.robots])
    if b is None:
        raise ValueError(f"scenario lacks the items {task.name} needs")
    return b


def _sub(value: Any, b: Mapping[str, str]) -> Any:
    if isinstance(value, str) and value.startswith("$"):
        return b[value]
    if isinstance(value, list):
        return [_sub(v, b) for v in value]
    return value


def bind_rows(rows: Sequence[tuple], b: Mapping[str, str], doors: Sequence[str] = ()) -> list[Subtask]:
    subs = []
    for sid, role, verb, args, deps in rows:
        subs.append(make_subtask(sid, verb, b[f"${role}"], _sub(list(args), b), deps, doors))
    return subs


def bind_goal(task: TaskSpec, b: Mapping[str, str]) -> Predicate:
    return pred_from_json(_sub(task.goal_template, b))


def task_goal(task: TaskSpec, scenario: Scenario) -> Predicate:
    return bind_goal(task, scenario_bindings(task, scenario))


def door_ids(scenario: Scenario) -> list[str]:
    return [f.id for f in scenario.fixtures if FIXTURE_KINDS[f.kind].door]


def canonical_plan(task: TaskSpec, robot_count: int, scenario: Scenario | None = None) -> Plan:
    """Reference decomposition for one or two robots, bound to ``scenario``."""
    if robot_count not in task.canonical:
        raise ValueError(f"no reference plan for {robot_count} robots")
    scenario = scenario or instantiate_task(task, 0, robot_count)
    if len(scenario.robots) < robot_count:
        raise ValueError("scenario has too few robots")
    b = scenario_bindings(task, scenario)
    subs = bind_rows(task.canonical[robot_count], b, door_ids(scenario))
    return Plan(1, tuple(subs), {"backend": "reference"})


def naive_plan(task: TaskSpec, scenario: Scenario) -> Plan:
    b = scenario_bindings(task, scenario)
    return Plan(1, tuple(bind_rows(task.naive, b, door_ids(scenario))), {"backend": "reference"})
