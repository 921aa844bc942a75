"""Intention inference: prompt building, reply parsing and LLM clients.

The chat prompt lists the gazed objects in first-positive order; the reply
must be a numbered list of up to three candidate intentions. A deterministic
rule-table mock stands in for a hosted model; the HTTP client speaks the
usual chat-completion wire format.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import httpx

from .exceptions import InferenceError

SYSTEM_TEXT = ("You are a personal assistant who infers what the user wants "
               "to do based on the objects they are looking at.")
USER_TEMPLATE = ("When the user looks at {labels}, in sequence, what are the "
                 "possible intended actions? Please provide up to three "
                 "possible intentions.")
FORMAT_NUDGE = "Answer only with a numbered list."

CONTAINER_LABELS = ("bowl", "box", "cup")

_LABELS_RE = re.compile(r"looks at (.+?), in sequence")
_ITEM_RE = re.compile(r"^\s*\d+[.)]\s*(.+?)\s*$")


@dataclass(frozen=True)
class GazedObjectSequence:
    """Object labels in ascending order of their first positive window."""

    entries: tuple[tuple[str, int], ...]  # (label, first_positive_t_us)

    def __post_init__(self) -> None:
        if not self.entries:
            raise ValueError("gazed object sequence must not be empty")
        labels = [e[0] for e in self.entries]
        if len(set(labels)) != len(labels):
            raise ValueError("labels must be unique (keep first occurrence)")
        times = [e[1] for e in self.entries]
        if times != sorted(times):
            raise ValueError("entries must be ordered by first-positive time")

    @staticmethod
    def from_events(events: Sequence[tuple[str, int]]) -> "GazedObjectSequence":
        """Build from (label, t_us) observations, keeping first occurrences."""
        seen: dict[str, int] = {}
        for label, t in sorted(events, key=lambda e: e[1]):
            seen.setdefault(label, t)
        return GazedObjectSequence(tuple(sorted(seen.items(), key=lambda e: e[1])))

    @property
    def labels(self) -> list[str]:
        return [e[0] for e in self.entries]


@dataclass(frozen=True)
class ChatPrompt:
    system: str
    user: str


@dataclass(frozen=True)
class IntentProposal:
    rank: int
    description: str
    source_objects: tuple[str, ...]

    def question(self) -> str:
        return f"Is your intention {self.description}?"


def build_prompt(seq: GazedObjectSequence) -> ChatPrompt:
    """Render the exact prompt template for the gazed-object sequence."""
    return ChatPrompt(system=SYSTEM_TEXT,
                      user=USER_TEMPLATE.format(labels=", ".join(seq.labels)))


def labels_from_user_message(user: str) -> list[str]:
    m = _LABELS_RE.search(user)
    if not m:
        return []
    return [part.strip() for part in m.group(1).split(",") if part.strip()]


def parse_numbered_reply(text: str) -> list[str]:
    """Extract up to three items from a numbered list; raises if none found."""
    items: list[str] = []
    for line in text.splitlines():
        m = _ITEM_RE.match(line)
        if m:
            items.append(m.group(1).rstrip(".!?;,").strip())
    if not items:
        raise ValueError("reply contains no numbered list")
    return items[:3]


def render_numbered(items: Sequence[str]) -> str:
    return "\n".join(f"{i}. {item}" for i, item in enumerate(items, start=1))


class LLMClient(Protocol):
    def complete(self, prompt: ChatPrompt) -> str: ...


def infer_intentions(prompt: ChatPrompt, client: LLMClient) -> list[IntentProposal]:
    """Query the client and parse ranked intentions, with one format retry."""
    source = tuple(labels_from_user_message(prompt.user))
    reply = client.complete(prompt)
    try:
        items = parse_numbered_reply(reply)
    except ValueError:
        nudged = ChatPrompt(system=prompt.system,
                            user=prompt.user + "\n" + FORMAT_NUDGE)
        reply = client.complete(nudged)
        try:
            items = parse_numbered_reply(reply)
        except ValueError as exc:
            raise InferenceError(f"unparseable reply after retry: {reply!r}") from exc
    return [IntentProposal(rank=i, description=item, source_objects=source)
            for i, item in enumerate(items, start=1)]


# (object set, ranked intentions); exact match wins, then widest subset
DEFAULT_RULES: list[tuple[frozenset[str], list[str]]] = [
    (frozenset({"kettle", "cup"}),
     ["pour water into the cup", "fetch the kettle", "fetch the cup"]),
    (frozenset({"kettle", "plant"}),
     ["water the plant", "fetch the kettle", "fetch the plant"]),
    (frozenset({"switch"}), ["toggle the switch"]),
]


class MockLLMClient:
    """Deterministic stand-in for a hosted chat model.

    Resolution order: exact label-set rule, widest-subset rule, the
    put-into-container pattern for pairs, then 'fetch the <first label>'.
    """

    def __init__(self, rules: list[tuple[frozenset[str], list[str]]] | None = None):
        self.rules = list(DEFAULT_RULES if rules is None else rules)

    @staticmethod
    def from_json_file(path: str) -> "MockLLMClient":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        rules = [(frozenset(r["objects"]), list(r["intents"])) for r in raw]
        return MockLLMClient(rules)

    def _lookup(self, labels: list[str]) -> list[str]:
        label_set = set(labels)
        for objs, intents in self.rules:
            if objs == label_set:
                return intents
        best: list[str] | None = None
        best_cover = 0
        for objs, intents in self.rules:
            if objs <= label_set and len(objs) > best_cover:
                best, best_cover = intents, len(objs)
        if best is not None:
            return best
        if len(labels) == 2:
            a, b = labels
            if b in CONTAINER_LABELS and a not in CONTAINER_LABELS:
                return [f"put the {a} into the {b}", f"fetch the {a}", f"fetch the {b}"]
            if a in CONTAINER_LABELS and b not in CONTAINER_LABELS:
                return [f"put the {b} into the {a}", f"fetch the {b}", f"fetch the {a}"]
        return [f"fetch the {labels[0]}"]

    def complete(self, prompt: ChatPrompt) -> str:
        labels = labels_from_user_message(prompt.user)
        if not labels:
            return "I could not identify any objects."
        return render_numbered(self._lookup(labels))


@dataclass
class HttpLLMClient:
    """Chat-completion HTTP client; endpoint and key come from the env
    (GAZE_LLM_URL, GAZE_LLM_API_KEY) unless given explicitly."""

    url: str | None = None
    model: str = "default"
    timeout_s: float = 30.0
    transport: httpx.BaseTransport | None = field(default=None, repr=False)

    def complete(self, prompt: ChatPrompt) -> str:
        url = self.url or os.environ.get("GAZE_LLM_URL")
        if not url:
            raise InferenceError("no LLM endpoint configured (GAZE_LLM_URL)")
        headers = {}
        api_key = os.environ.get("GAZE_LLM_API_KEY")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        body = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": prompt.user},
            ],
        }
        with httpx.Client(timeout=self.timeout_s, transport=self.transport) as client:
            resp = client.post(url, json=body, headers=headers)
            resp.raise_for_status()
            data = resp.json()
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise InferenceError(f"malformed chat-completion response: {data!r}") from exc
