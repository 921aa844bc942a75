"""Discrete tabletop world: objects on a grid, a gripper, switches, plants.

Stands in for the physical scene; positions project onto the scene image so
the mock detector and the synthetic gaze generator share one geometry.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from typing import Iterable

from .perception import Box, SceneGeometry

KINDS = ("item", "container", "vessel", "plant", "switch")
RESERVED_TARGETS = ("table", "user_zone")

GRID_ROWS = 4
GRID_COLS = 4
USER_ZONE_CELL = (3, 1)

# footprint (width, height) in scene pixels per object kind
_KIND_SIZES = {
    "item": (150.0, 120.0),
    "container": (190.0, 130.0),
    "vessel": (130.0, 170.0),
    "plant": (170.0, 190.0),
    "switch": (90.0, 130.0),
}


def cell_box(cell: tuple[int, int], kind: str,
             geometry: SceneGeometry = SceneGeometry()) -> Box:
    """Project a grid cell to the object's bounding box in the scene image."""
    r, c = cell
    if not (0 <= r < GRID_ROWS and 0 <= c < GRID_COLS):
        raise ValueError(f"cell {cell} outside the {GRID_ROWS}x{GRID_COLS} grid")
    cw = geometry.width_px / GRID_COLS
    ch = geometry.height_px / GRID_ROWS
    cx = (c + 0.5) * cw
    cy = (r + 0.5) * ch
    w, h = _KIND_SIZES[kind]
    w = min(w, cw - 4)
    h = min(h, ch - 4)
    return Box(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)


@dataclass
class Contents:
    substance: str
    amount: float
    capacity: float

    def __post_init__(self) -> None:
        if self.amount < 0 or self.capacity < 0:
            raise ValueError("amounts must be nonnegative")
        if self.amount > self.capacity:
            raise ValueError("amount exceeds capacity")


@dataclass
class WorldObject:
    label: str
    kind: str
    cell: tuple[int, int] | None
    contents: Contents | None = None
    zone: str | None = None       # "user_zone" or a container label
    last_cell: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.last_cell is None and self.cell is not None:
            self.last_cell = self.cell

    @property
    def placed(self) -> bool:
        return self.cell is not None or self.zone is not None


@dataclass
class WorldState:
    objects: dict[str, WorldObject] = field(default_factory=dict)
    gripper: str | None = None
    switches: dict[str, bool] = field(default_factory=dict)
    plants_watered: dict[str, bool] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for label, obj in self.objects.items():
            if obj.label != label:
                raise ValueError(f"object key {label!r} != label {obj.label!r}")
        for label, obj in self.objects.items():
            if obj.kind == "switch":
                self.switches.setdefault(label, False)
            if obj.kind == "plant":
                self.plants_watered.setdefault(label, False)

    def snapshot(self) -> "WorldState":
        return copy.deepcopy(self)

    def visible_boxes(self, geometry: SceneGeometry = SceneGeometry()) -> list[tuple[str, Box]]:
        out = []
        for label in sorted(self.objects):
            obj = self.objects[label]
            if obj.cell is not None:
                out.append((label, cell_box(obj.cell, obj.kind, geometry)))
        return out

    def substance_totals(self) -> dict[str, float]:
        totals: dict[str, float] = {}
        for obj in self.objects.values():
            if obj.contents is not None and obj.contents.amount > 0:
                totals[obj.contents.substance] = (
                    totals.get(obj.contents.substance, 0.0) + obj.contents.amount)
        return totals

    def to_dict(self) -> dict:
        objs = {}
        for label, o in self.objects.items():
            rec: dict = {"kind": o.kind, "cell": list(o.cell) if o.cell else None}
            if o.contents is not None:
                rec["contents"] = {"substance": o.contents.substance,
                                   "amount": o.contents.amount,
                                   "capacity": o.contents.capacity}
            if o.zone is not None:
                rec["zone"] = o.zone
            objs[label] = rec
        return {
            "objects": objs,
            "switches": dict(self.switches),
            "plants_watered": dict(self.plants_watered),
            "gripper": self.gripper,
        }

    @staticmethod
    def from_dict(data: dict) -> "WorldState":
        objects: dict[str, WorldObject] = {}
        for label, rec in data.get("objects", {}).items():
            contents = None
            if rec.get("contents"):
                c = rec["contents"]
                contents = Contents(substance=c["substance"],
                                    amount=float(c["amount"]),
                                    capacity=float(c["capacity"]))
            cell = tuple(rec["cell"]) if rec.get("cell") is not None else None
            objects[label] = WorldObject(label=label, kind=rec["kind"],
                                         cell=cell, contents=contents,
                                         zone=rec.get("zone"))
        world = WorldState(objects=objects,
                           switches={k: bool(v) for k, v in data.get("switches", {}).items()},
                           plants_watered={k: bool(v) for k, v in
                                           data.get("plants_watered", {}).items()},
                           gripper=data.get("gripper"))
        return world


def load_fixture(path: str) -> WorldState:
    with open(path, "r", encoding="utf-8") as fh:
        return WorldState.from_dict(json.load(fh))


def save_fixture(path: str, world: WorldState) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(world.to_dict(), fh, indent=2)


def make_world(entries: Iterable[tuple[str, str, tuple[int, int]]],
               contents: dict[str, Contents] | None = None) -> WorldState:
    """Convenience constructor: (label, kind, cell) triples plus contents."""
    contents = contents or {}
    objects = {label: WorldObject(label=label, kind=kind, cell=cell,
                                  contents=contents.get(label))
               for label, kind, cell in entries}
    return WorldState(objects=objects)
