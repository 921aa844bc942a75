"""Whitelisted action plans: generation, symbolic validation, execution.

Plans are sequences of operation-API calls. validate() simulates
preconditions over a lightweight ghost state without touching the world;
execute() applies real postconditions with runtime checks, whole-plan
retries from a snapshot, and an optional fault-injection hook standing in
for physical failure.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

import numpy as np

from .exceptions import PlanningError
from .llm import ChatPrompt, LLMClient
from .world import RESERVED_TARGETS, USER_ZONE_CELL, Contents, WorldState

API_SIGNATURES: dict[str, int] = {
    "locate": 1,
    "grasp": 1,
    "move_to": 1,
    "place": 1,
    "pour": 2,
    "toggle": 1,
    "release": 0,
}

_DEFAULT_CAPACITY = {"container": 150.0, "vessel": 300.0, "plant": 200.0}

POURABLE_KINDS = ("container", "vessel", "plant")


@dataclass(frozen=True)
class ActionStep:
    api: str
    args: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {"api": self.api, "args": list(self.args)}

    @staticmethod
    def from_json(rec: dict) -> "ActionStep":
        return ActionStep(api=str(rec["api"]),
                          args=tuple(str(a) for a in rec.get("args", [])))

    def __str__(self) -> str:
        return f"{self.api}({', '.join(self.args)})"


@dataclass(frozen=True)
class ActionPlan:
    steps: tuple[ActionStep, ...]
    intention: str
    source: str = "mock"  # mock | llm

    def __post_init__(self) -> None:
        if not self.steps:
            raise ValueError("plan must not be empty")

    def to_json(self) -> list[dict]:
        return [s.to_json() for s in self.steps]

    @staticmethod
    def from_json(steps: list[dict], intention: str, source: str = "llm") -> "ActionPlan":
        return ActionPlan(steps=tuple(ActionStep.from_json(s) for s in steps),
                          intention=intention, source=source)


def _find_source_vessel(world: WorldState) -> str:
    if "kettle" in world.objects and world.objects["kettle"].kind == "vessel":
        return "kettle"
    for label in sorted(world.objects):
        obj = world.objects[label]
        if obj.kind == "vessel" and obj.contents is not None and obj.contents.amount > 0:
            return label
    return "kettle"


_CANONICAL = [
    (re.compile(r"^pour (?:the )?water into the (\S+)$"), "pour"),
    (re.compile(r"^water the (\S+)$"), "water"),
    (re.compile(r"^fetch the (\S+)$"), "fetch"),
    (re.compile(r"^put the (\S+) into the (\S+)$"), "put_into"),
    (re.compile(r"^toggle the (\S+)$"), "toggle"),
]


def canonical_plan(intention: str, world: WorldState) -> ActionPlan | None:
    """Map a known intention phrase to its fixed step sequence."""
    text = intention.strip().lower()
    for pattern, kind in _CANONICAL:
        m = pattern.match(text)
        if not m:
            continue
        if kind == "pour":
            target = m.group(1)
            vessel = _find_source_vessel(world)
            steps = (ActionStep("locate", (vessel,)), ActionStep("grasp", (vessel,)),
                     ActionStep("move_to", (target,)), ActionStep("pour", (vessel, target)),
                     ActionStep("place", ("table",)), ActionStep("release"))
        elif kind == "water":
            target = m.group(1)
            vessel = _find_source_vessel(world)
            steps = (ActionStep("locate", (vessel,)), ActionStep("grasp", (vessel,)),
                     ActionStep("move_to", (target,)), ActionStep("pour", (vessel, target)),
                     ActionStep("place", ("table",)), ActionStep("release"))
        elif kind == "fetch":
            x = m.group(1)
            steps = (ActionStep("locate", (x,)), ActionStep("grasp", (x,)),
                     ActionStep("move_to", ("user_zone",)), ActionStep("place", ("user_zone",)),
                     ActionStep("release"))
        elif kind == "put_into":
            x, y = m.group(1), m.group(2)
            steps = (ActionStep("locate", (x,)), ActionStep("grasp", (x,)),
                     ActionStep("move_to", (y,)), ActionStep("place", (y,)),
                     ActionStep("release"))
        else:  # toggle
            s = m.group(1)
            steps = (ActionStep("locate", (s,)), ActionStep("move_to", (s,)),
                     ActionStep("toggle", (s,)))
        return ActionPlan(steps=steps, intention=intention, source="mock")
    return None


def validate(plan: ActionPlan, world: WorldState) -> list[str]:
    """Symbolic precondition simulation; returns violations, never mutates.

    Ghost state tracks only what preconditions need: what the gripper holds
    and which objects currently have a location.
    """
    violations: list[str] = []
    holding: str | None = world.gripper
    located: set[str] = {label for label, o in world.objects.items() if o.placed}
    kinds = {label: o.kind for label, o in world.objects.items()}

    for i, step_ in enumerate(plan.steps):
        tag = f"step {i} ({step_})"
        if step_.api not in API_SIGNATURES:
            violations.append(f"{tag}: api not in whitelist")
            continue
        if len(step_.args) != API_SIGNATURES[step_.api]:
            violations.append(
                f"{tag}: expected {API_SIGNATURES[step_.api]} args, got {len(step_.args)}")
            continue
        for arg in step_.args:
            if arg not in kinds and arg not in RESERVED_TARGETS:
                violations.append(f"{tag}: unknown label '{arg}'")
        if any(v.startswith(tag) for v in violations):
            continue

        api = step_.api
        if api == "locate":
            if step_.args[0] in RESERVED_TARGETS:
                violations.append(f"{tag}: cannot locate a reserved target")
        elif api == "grasp":
            o = step_.args[0]
            if o in RESERVED_TARGETS:
                violations.append(f"{tag}: cannot grasp a reserved target")
            elif holding is not None:
                violations.append(f"{tag}: gripper occupied")
            elif o not in located:
                violations.append(f"{tag}: object '{o}' has no location")
            else:
                holding = o
                located.discard(o)
        elif api == "move_to":
            pass
        elif api == "place":
            if holding is None:
                violations.append(f"{tag}: gripper empty")
            else:
                located.add(holding)
        elif api == "pour":
            src, tgt = step_.args
            if holding != src:
                violations.append(f"{tag}: gripper empty" if holding is None
                                  else f"{tag}: not holding '{src}'")
            elif kinds.get(src) != "vessel":
                violations.append(f"{tag}: source '{src}' is not a vessel")
            elif tgt in RESERVED_TARGETS or kinds.get(tgt) not in POURABLE_KINDS:
                violations.append(f"{tag}: target '{tgt}' cannot receive a pour")
        elif api == "toggle":
            s = step_.args[0]
            if s in RESERVED_TARGETS or kinds.get(s) != "switch":
                violations.append(f"{tag}: '{s}' is not a switch")
            elif holding is not None:
                violations.append(f"{tag}: gripper occupied")
        elif api == "release":
            if holding is None:
                violations.append(f"{tag}: gripper empty")
            else:
                located.add(holding)
                holding = None
    return violations


@dataclass
class ExecutionPolicy:
    """Retry and fault-injection knobs for plan execution."""

    max_attempts: int = 3
    failure_probability: float = 0.0
    attempt_failure_probability: dict[int, float] = field(default_factory=dict)
    seed: int = 0

    def step_failure_p(self, attempt: int) -> float:
        return self.attempt_failure_probability.get(attempt, self.failure_probability)


@dataclass
class StepOutcome:
    attempt: int
    index: int
    step: ActionStep
    ok: bool
    error: str | None = None

    def to_json(self) -> dict:
        return {"attempt": self.attempt, "index": self.index,
                "api": self.step.api, "args": list(self.step.args),
                "ok": self.ok, "error": self.error}


@dataclass
class ExecutionResult:
    ok: bool
    attempts: int
    outcomes: list[StepOutcome]
    world: WorldState
    totals_before: dict[str, float]
    totals_after: dict[str, float]


class _StepFailure(Exception):
    pass


def _apply_step(step_: ActionStep, world: WorldState) -> None:
    """Runtime pre/postconditions for one step; raises _StepFailure."""
    api, args = step_.api, step_.args
    objs = world.objects
    if api == "locate":
        o = args[0]
        if o not in objs or not objs[o].placed:
            raise _StepFailure(f"cannot locate '{o}'")
    elif api == "grasp":
        o = args[0]
        if world.gripper is not None:
            raise _StepFailure("gripper occupied")
        if o not in objs or not objs[o].placed:
            raise _StepFailure(f"object '{o}' has no location")
        obj = objs[o]
        if obj.cell is not None:
            obj.last_cell = obj.cell
        obj.cell = None
        obj.zone = None
        world.gripper = o
    elif api == "move_to":
        t = args[0]
        if t not in objs and t not in RESERVED_TARGETS:
            raise _StepFailure(f"unknown move target '{t}'")
    elif api == "place":
        t = args[0]
        if world.gripper is None:
            raise _StepFailure("gripper empty")
        held = objs[world.gripper]
        if t == "table":
            held.cell = held.last_cell
            held.zone = None
        elif t == "user_zone":
            held.cell = USER_ZONE_CELL
            held.zone = "user_zone"
        elif t in objs:
            held.cell = objs[t].cell
            held.zone = t if objs[t].kind == "container" else None
        else:
            raise _StepFailure(f"unknown place target '{t}'")
    elif api == "pour":
        src, tgt = args
        if world.gripper != src:
            raise _StepFailure("gripper empty" if world.gripper is None
                               else f"not holding '{src}'")
        source = objs.get(src)
        target = objs.get(tgt)
        if source is None or source.kind != "vessel":
            raise _StepFailure(f"source '{src}' is not a vessel")
        if target is None or target.kind not in POURABLE_KINDS:
            raise _StepFailure(f"target '{tgt}' cannot receive a pour")
        if source.contents is None or source.contents.amount <= 0:
            raise _StepFailure(f"'{src}' is empty")
        if target.contents is None:
            target.contents = Contents(substance=source.contents.substance, amount=0.0,
                                       capacity=_DEFAULT_CAPACITY[target.kind])
        if target.contents.substance != source.contents.substance:
            raise _StepFailure("substance mismatch")
        free = target.contents.capacity - target.contents.amount
        transfer = min(source.contents.amount, free)
        source.contents.amount -= transfer
        target.contents.amount += transfer
        if target.kind == "plant" and transfer > 0:
            world.plants_watered[tgt] = True
    elif api == "toggle":
        s = args[0]
        if world.gripper is not None:
            raise _StepFailure("gripper occupied")
        if s not in objs or objs[s].kind != "switch":
            raise _StepFailure(f"'{s}' is not a switch")
        world.switches[s] = not world.switches.get(s, False)
    elif api == "release":
        if world.gripper is None:
            raise _StepFailure("gripper empty")
        held = objs[world.gripper]
        if not held.placed:
            held.cell = held.last_cell
        world.gripper = None
    else:
        raise _StepFailure(f"api '{api}' not in whitelist")


def execute(
    plan: ActionPlan,
    world: WorldState,
    policy: ExecutionPolicy | None = None,
) -> ExecutionResult:
    """Apply the plan with whole-plan retries from a snapshot.

    The input world is never mutated; the result carries the final state.
    """
    policy = policy or ExecutionPolicy()
    rng = np.random.default_rng(policy.seed)
    base = world.snapshot()
    totals_before = base.substance_totals()
    outcomes: list[StepOutcome] = []
    for attempt in range(1, policy.max_attempts + 1):
        current = base.snapshot()
        failed = False
        for i, step_ in enumerate(plan.steps):
            if rng.random() < policy.step_failure_p(attempt):
                outcomes.append(StepOutcome(attempt, i, step_, ok=False,
                                            error="injected failure"))
                failed = True
                break
            try:
                _apply_step(step_, current)
            except _StepFailure as exc:
                outcomes.append(StepOutcome(attempt, i, step_, ok=False, error=str(exc)))
                failed = True
                break
            outcomes.append(StepOutcome(attempt, i, step_, ok=True))
        if not failed:
            return ExecutionResult(ok=True, attempts=attempt, outcomes=outcomes,
                                   world=current, totals_before=totals_before,
                                   totals_after=current.substance_totals())
    return ExecutionResult(ok=False, attempts=policy.max_attempts, outcomes=outcomes,
                           world=base, totals_before=totals_before,
                           totals_after=base.substance_totals())


PLAN_SYSTEM_TEXT = ("You translate a confirmed user intention into a robot "
                    "action plan using only the listed operation APIs.")


def _plan_user_message(intention: str, world: WorldState) -> str:
    sigs = ", ".join(f"{api}/{arity}" for api, arity in API_SIGNATURES.items())
    labels = ", ".join(sorted(world.objects)) or "(none)"
    return (f"APIs (name/arity): {sigs}. Reserved targets: table, user_zone. "
            f"Objects in the scene: {labels}. Intention: {intention}. "
            'Reply with a JSON array of steps, e.g. '
            '[{"api": "grasp", "args": ["cup"]}].')


def _extract_json_array(text: str) -> list[dict]:
    start = text.find("[")
    end = text.rfind("]")
    if start < 0 or end <= start:
        raise ValueError("no JSON array in reply")
    data = json.loads(text[start:end + 1])
    if not isinstance(data, list) or not all(isinstance(d, dict) for d in data):
        raise ValueError("reply is not an array of step objects")
    return data


def plan(intention: str, world: WorldState, client: LLMClient | None = None) -> ActionPlan:
    """Produce a validated plan for the intention.

    Without a client, known intentions map to canonical plans. With a
    client, the model gets the API signatures, scene labels and intention,
    must answer with a JSON step array, and gets one repair round before
    planning fails.
    """
    if client is None:
        candidate = canonical_plan(intention, world)
        if candidate is None:
            raise PlanningError(f"no canonical plan for intention {intention!r}")
        violations = validate(candidate, world)
        if violations:
            raise PlanningError("canonical plan invalid", violations)
        return candidate

    prompt = ChatPrompt(system=PLAN_SYSTEM_TEXT,
                        user=_plan_user_message(intention, world))
    last_violations: list[str] = []
    for round_no in range(2):
        reply = client.complete(prompt)
        try:
            steps = _extract_json_array(reply)
            candidate = ActionPlan.from_json(steps, intention=intention, source="llm")
        except (ValueError, KeyError) as exc:
            last_violations = [f"unparseable plan: {exc}"]
        else:
            violations = validate(candidate, world)
            if not violations:
                return candidate
            last_violations = violations
        prompt = ChatPrompt(
            system=PLAN_SYSTEM_TEXT,
            user=(_plan_user_message(intention, world)
                  + " Previous attempt was invalid: "
                  + "; ".join(last_violations)
                  + ". Return a corrected JSON array only."))
    raise PlanningError("no valid plan after repair retry", last_violations)
