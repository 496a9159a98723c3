from __future__ import annotations

import pytest

from kitchenplan.world import FixtureSpec, ObjectSpec, RobotSpec, Scenario, load_scenario


def kitchen(objects=(), robots=1, doors=None, **kw) -> Scenario:
    """Small hand-built kitchen: counter, island, microwave, cabinet, sink with faucet, stove."""
    doors = doors or {}
    fixtures = [FixtureSpec(f"home_{c}", "home") for c in "ab"[:robots]]
    fixtures += [
        FixtureSpec("counter", "counter"),
        FixtureSpec("island", "island"),
        FixtureSpec("microwave", "microwave", doors.get("microwave", "closed")),
        FixtureSpec("cabinet", "cabinet", doors.get("cabinet", "closed")),
        FixtureSpec("sink", "sink"),
        FixtureSpec("faucet", "faucet", None, "sink"),
        FixtureSpec("stove", "stove"),
    ]
    robot_specs = tuple(RobotSpec(f"robot_{c}", f"home_{c}") for c in "ab"[:robots])
    return Scenario("test", "style_00", tuple(fixtures), tuple(objects), robot_specs, **kw)


CARROT = ObjectSpec("carrot", "carrot", "counter")
BOWL = ObjectSpec("bowl", "bowl", "island")
FISH = ObjectSpec("fish", "fish", "counter", "frozen")


@pytest.fixture
def carrot_world():
    return load_scenario(kitchen([CARROT]))
