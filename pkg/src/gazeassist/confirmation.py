"""Gaze-region confirmation: three horizontal bands, dwell to command.

The scene image doubles as the control surface. The top band rejects, the
bottom band agrees, the middle band is free observation space. A command
fires only after an uninterrupted dwell in its band; leaving the band resets
the timer, and a deadline turns silence into rejection.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Iterable, Iterator

from .llm import IntentProposal
from .perception import GazeSample

DWELL_US_DEFAULT = 800_000
DEADLINE_US_DEFAULT = 10_000_000


class Region(enum.Enum):
    AREA1 = "area1"  # top band: reject
    AREA2 = "area2"  # middle band: free observation
    AREA3 = "area3"  # bottom band: agree
    OFF = "off"


class Phase(enum.Enum):
    ASKING = "Asking"
    DWELLING_AGREE = "DwellingAgree"
    DWELLING_REJECT = "DwellingReject"
    CONFIRMED = "Confirmed"
    REJECTED = "Rejected"
    TIMED_OUT = "TimedOut"


TERMINAL_PHASES = (Phase.CONFIRMED, Phase.REJECTED, Phase.TIMED_OUT)


@dataclass(frozen=True)
class RegionLayout:
    """Equal-thirds horizontal bands over scene height H."""

    height: float = 1080.0

    def __post_init__(self) -> None:
        if self.height <= 0:
            raise ValueError("height must be positive")

    @property
    def first_boundary(self) -> float:
        return self.height / 3.0

    @property
    def second_boundary(self) -> float:
        return 2.0 * self.height / 3.0


def classify_region(gaze: GazeSample, layout: RegionLayout) -> Region:
    """Band by y coordinate; off-screen gaze maps to OFF."""
    if not gaze.on_screen or not (0.0 <= gaze.gy <= layout.height):
        return Region.OFF
    if gaze.gy < layout.first_boundary:
        return Region.AREA1
    if gaze.gy < layout.second_boundary:
        return Region.AREA2
    return Region.AREA3


@dataclass(frozen=True)
class ConfirmationState:
    phase: Phase
    proposal_rank: int
    deadline_us: int
    dwell_started_us: int | None = None
    dwell_us: int = DWELL_US_DEFAULT

    @property
    def terminal(self) -> bool:
        return self.phase in TERMINAL_PHASES

    def dwell_elapsed_us(self, now_us: int) -> int:
        if self.dwell_started_us is None:
            return 0
        return now_us - self.dwell_started_us


def start_state(
    proposal_rank: int,
    now_us: int,
    dwell_us: int = DWELL_US_DEFAULT,
    deadline_us: int = DEADLINE_US_DEFAULT,
) -> ConfirmationState:
    return ConfirmationState(phase=Phase.ASKING, proposal_rank=proposal_rank,
                             deadline_us=now_us + deadline_us, dwell_us=dwell_us)


def step(state: ConfirmationState, gaze: GazeSample, layout: RegionLayout) -> ConfirmationState:
    """Advance the machine by one gaze sample (its t_us is the clock)."""
    if state.terminal:
        return state
    now = gaze.t_us
    if now > state.deadline_us:
        return replace(state, phase=Phase.TIMED_OUT, dwell_started_us=None)
    region = classify_region(gaze, layout)
    if region is Region.AREA3:
        if state.phase is not Phase.DWELLING_AGREE:
            return replace(state, phase=Phase.DWELLING_AGREE, dwell_started_us=now)
        if now - state.dwell_started_us >= state.dwell_us:
            return replace(state, phase=Phase.CONFIRMED)
        return state
    if region is Region.AREA1:
        if state.phase is not Phase.DWELLING_REJECT:
            return replace(state, phase=Phase.DWELLING_REJECT, dwell_started_us=now)
        if now - state.dwell_started_us >= state.dwell_us:
            return replace(state, phase=Phase.REJECTED)
        return state
    # AREA2 or OFF: any running dwell resets
    if state.phase is not Phase.ASKING:
        return replace(state, phase=Phase.ASKING, dwell_started_us=None)
    return state


@dataclass(frozen=True)
class AllRejected:
    """Every proposal was rejected or timed out; no motion follows."""

    rejected_ranks: tuple[int, ...]


def run_confirmation(
    proposals: list[IntentProposal],
    gaze_stream: Iterable[GazeSample],
    layout: RegionLayout = RegionLayout(),
    dwell_us: int = DWELL_US_DEFAULT,
    deadline_us: int = DEADLINE_US_DEFAULT,
) -> IntentProposal | AllRejected:
    """Offer proposals in rank order over one continuous gaze stream.

    The first confirmed proposal wins; rejection or timeout advances to the
    next. Stream exhaustion counts as timeout for the active proposal and
    everything after it.
    """
    if not proposals:
        raise ValueError("need at least one proposal")
    it: Iterator[GazeSample] = iter(gaze_stream)
    rejected: list[int] = []
    pending = iter(sorted(proposals, key=lambda p: p.rank))
    current = next(pending)
    state: ConfirmationState | None = None
    for sample in it:
        if state is None:
            state = start_state(current.rank, sample.t_us, dwell_us, deadline_us)
        state = step(state, sample, layout)
        if state.phase is Phase.CONFIRMED:
            return current
        if state.phase in (Phase.REJECTED, Phase.TIMED_OUT):
            rejected.append(current.rank)
            nxt = next(pending, None)
            if nxt is None:
                return AllRejected(tuple(rejected))
            current = nxt
            state = None
    rejected.append(current.rank)
    rejected.extend(p.rank for p in pending)
    return AllRejected(tuple(rejected))
