"""Built-in scripted sessions for the five task families."""

from __future__ import annotations

import importlib.resources
import json

from .evaluation import ScriptedSession
from .world import WorldState

FIXTURE_NAMES = ("fetch", "put_into", "water_plants", "toggle_switch", "pour_water")


def builtin_fixture(name: str) -> WorldState:
    if name not in FIXTURE_NAMES:
        raise ValueError(f"unknown fixture {name!r}; choose from {FIXTURE_NAMES}")
    ref = importlib.resources.files("gazeassist") / "fixtures" / f"{name}.json"
    return WorldState.from_dict(json.loads(ref.read_text(encoding="utf-8")))


def default_scripts(fixation_s: float = 2.2) -> list[ScriptedSession]:
    """One scripted session per task family with its success predicate."""
    return [
        ScriptedSession(
            family="fetch",
            world=builtin_fixture("fetch"),
            observation=[("banana", fixation_s)],
            expected_intention="fetch the banana",
            predicate={"kind": "at_zone", "object": "banana", "zone": "user_zone"},
        ),
        ScriptedSession(
            family="put_into",
            world=builtin_fixture("put_into"),
            observation=[("banana", fixation_s), ("bowl", fixation_s)],
            expected_intention="put the banana into the bowl",
            predicate={"kind": "in_container", "object": "banana", "container": "bowl"},
        ),
        ScriptedSession(
            family="water_plants",
            world=builtin_fixture("water_plants"),
            observation=[("kettle", fixation_s), ("plant", fixation_s)],
            expected_intention="water the plant",
            predicate={"kind": "watered", "object": "plant", "value": True},
        ),
        ScriptedSession(
            family="toggle_switch",
            world=builtin_fixture("toggle_switch"),
            observation=[("switch", fixation_s)],
            expected_intention="toggle the switch",
            predicate={"kind": "switch_on", "object": "switch", "value": True},
        ),
        ScriptedSession(
            family="pour_water",
            world=builtin_fixture("pour_water"),
            observation=[("kettle", fixation_s), ("cup", fixation_s)],
            expected_intention="pour water into the cup",
            predicate={"kind": "contains", "object": "cup", "substance": "water",
                       "amount": 150.0},
        ),
    ]
