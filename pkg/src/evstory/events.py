"""Verb-phrase event extraction from dependency parses.

An event is the root verb of a sentence plus a fixed set of arguments read
off the dependency arcs:

  modifiers    prt, neg
  agents       agent, dobj
  complements  acomp, ccomp, xcomp

The surface string of an event lists the trigger and argument surfaces in
sentence order, so "it turns out to be a stray dog" yields "turns out be".
Sentences with no verb root map to a placeholder event.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

from .corpus import StoryRecord
from .parsing import (  # noqa: F401  (re-exported as part of the event API)
    DependencyArc,
    Parse,
    ParsedToken,
    DependencyParser,
    RuleBasedDependencyParser,
)
from .vocab import EVENT_END, EVENT_NONE, EVENT_SEP, EVENT_START

MODIFIER_LABELS = ("prt", "neg")
AGENT_LABELS = ("agent", "dobj")
COMPLEMENT_LABELS = ("acomp", "ccomp", "xcomp")
SCHEMA_LABELS = MODIFIER_LABELS + AGENT_LABELS + COMPLEMENT_LABELS

TEMPORAL_RELATION = "temporal_next"

# (label, surface form, token position) of one captured argument
Argument = tuple[str, str, int]


@dataclass(frozen=True)
class Event:
    """One sentence-level event; trigger is (root lemma, position) or None."""

    trigger: tuple[str, int] | None
    modifiers: tuple[Argument, ...] = ()
    agents: tuple[Argument, ...] = ()
    complements: tuple[Argument, ...] = ()
    string_form: str = EVENT_NONE

    @property
    def is_placeholder(self) -> bool:
        return self.trigger is None

    def arguments(self) -> list[Argument]:
        return list(self.modifiers) + list(self.agents) + list(self.complements)

    def to_dict(self) -> dict:
        return {
            "trigger": list(self.trigger) if self.trigger else None,
            "modifiers": [list(a) for a in self.modifiers],
            "agents": [list(a) for a in self.agents],
            "complements": [list(a) for a in self.complements],
            "string_form": self.string_form,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Event":
        trig = data.get("trigger")
        return cls(
            trigger=(trig[0], int(trig[1])) if trig else None,
            modifiers=tuple((a[0], a[1], int(a[2])) for a in data.get("modifiers", [])),
            agents=tuple((a[0], a[1], int(a[2])) for a in data.get("agents", [])),
            complements=tuple((a[0], a[1], int(a[2])) for a in data.get("complements", [])),
            string_form=data["string_form"],
        )


PLACEHOLDER_EVENT = Event(trigger=None)


def _surface_form(trigger_surface: str, trigger_pos: int, args: Sequence[Argument]) -> str:
    parts = [(trigger_pos, trigger_surface)] + [(pos, surf) for _, surf, pos in args]
    parts.sort()
    return " ".join(surf for _, surf in parts)


def extract_event(parse: Parse) -> Event:
    """Event of one parsed sentence, or the placeholder when verbless."""
    if not parse.has_verb_root:
        return PLACEHOLDER_EVENT
    root = parse.root
    modifiers: list[Argument] = []
    agents: list[Argument] = []
    complements: list[Argument] = []
    for arc in parse.arcs_from(root.index):
        item = (arc.label, arc.tail.surface, arc.tail.index)
        if arc.label in MODIFIER_LABELS:
            modifiers.append(item)
        elif arc.label in AGENT_LABELS:
            agents.append(item)
        elif arc.label in COMPLEMENT_LABELS:
            complements.append(item)
    args = modifiers + agents + complements
    return Event(
        trigger=(root.lemma, root.index),
        modifiers=tuple(modifiers),
        agents=tuple(agents),
        complements=tuple(complements),
        string_form=_surface_form(root.surface, root.index, args),
    )


@dataclass
class EventSequence:
    """Events of one story body, one per sentence, in order."""

    story_id: str
    events: list[Event]

    def string_forms(self) -> list[str]:
        return [e.string_form for e in self.events]

    def to_dict(self) -> dict:
        return {
            "id": self.story_id,
            "events": [e.to_dict() for e in self.events],
            "serialized": serialize_events(self.events),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EventSequence":
        return cls(
            story_id=data["id"],
            events=[Event.from_dict(e) for e in data["events"]],
        )


def extract_sequence(record: StoryRecord, parser: DependencyParser | None = None) -> EventSequence:
    """One event per body sentence of the record."""
    parser = parser or RuleBasedDependencyParser()
    events = [extract_event(parser.parse(sent)) for sent in record.sentences]
    return EventSequence(story_id=record.id, events=events)


def serialize_events(events: Sequence[Event] | Sequence[str]) -> str:
    """Flat string "<e_s> ev1 <e_sep> ev2 ... <e_e>" for model input."""
    forms = [e.string_form if isinstance(e, Event) else e for e in events]
    inner = f" {EVENT_SEP} ".join(forms)
    if inner:
        return f"{EVENT_START} {inner} {EVENT_END}"
    return f"{EVENT_START} {EVENT_END}"


def deserialize_events(text: str) -> list[str]:
    """Inverse of serialize_events, returning event string forms."""
    stripped = text.strip()
    if not stripped.startswith(EVENT_START) or not stripped.endswith(EVENT_END):
        raise ValueError(f"not a serialized event sequence: {text!r}")
    inner = stripped[len(EVENT_START) : len(stripped) - len(EVENT_END)].strip()
    if not inner:
        return []
    return [part.strip() for part in inner.split(EVENT_SEP)]


@dataclass
class EventGraph:
    """Corpus-level graph of (event, temporal_next, event) triples.

    Edges keep their multiplicity: the same adjacent pair observed in k
    stories yields count k.
    """

    edges: Counter = field(default_factory=Counter)

    @property
    def nodes(self) -> list[str]:
        seen = set()
        for head, tail in self.edges:
            seen.add(head)
            seen.add(tail)
        return sorted(seen)

    def add_sequence(self, forms: Sequence[str], skip_placeholders: bool = True) -> None:
        for head, tail in zip(forms, forms[1:]):
            if skip_placeholders and EVENT_NONE in (head, tail):
                continue
            self.edges[(head, tail)] += 1

    def triples(self) -> list[tuple[str, str, str]]:
        out = []
        for (head, tail), count in sorted(self.edges.items()):
            out.extend([(head, TEMPORAL_RELATION, tail)] * count)
        return out

    def to_dict(self) -> dict:
        return {
            "relation": TEMPORAL_RELATION,
            "nodes": self.nodes,
            "edges": [
                {"head": h, "tail": t, "count": c}
                for (h, t), c in sorted(self.edges.items())
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EventGraph":
        graph = cls()
        for edge in data["edges"]:
            graph.edges[(edge["head"], edge["tail"])] = int(edge["count"])
        return graph


def build_event_graph(
    sequences: Iterable[EventSequence], skip_placeholders: bool = True
) -> EventGraph:
    graph = EventGraph()
    for seq in sequences:
        graph.add_sequence(seq.string_forms(), skip_placeholders=skip_placeholders)
    return graph


# ---- file IO ---------------------------------------------------------


def write_event_sequences(sequences: Iterable[EventSequence], fh: TextIO) -> int:
    count = 0
    for seq in sequences:
        fh.write(json.dumps(seq.to_dict(), sort_keys=True) + "\n")
        count += 1
    return count


def read_event_sequences(fh: TextIO) -> Iterable[EventSequence]:
    for line in fh:
        line = line.strip()
        if line:
            yield EventSequence.from_dict(json.loads(line))


def write_event_graph(graph: EventGraph, fh: TextIO) -> None:
    json.dump(graph.to_dict(), fh, indent=2, sort_keys=True)
    fh.write("\n")


def read_event_graph(fh: TextIO) -> EventGraph:
    return EventGraph.from_dict(json.load(fh))
