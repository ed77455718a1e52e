"""Domain types for view state machines and composed system models.

States are plain strings and must be unique across all machines of a
system; the owning machine of a state is recovered through
:meth:`SystemModel.machine_of`.
"""

from __future__ import annotations

import enum
import hashlib
import json
import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping


class EventKind(str, enum.Enum):
    USER = "user"
    SYSTEM = "system"
    CALL = "call"


@dataclass(frozen=True, order=True)
class EventLabel:
    name: str
    kind: EventKind = EventKind.USER
    params: tuple[tuple[str, str], ...] = ()

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Transition:
    source: str
    event: EventLabel
    target: str
    tid: str | None = None


@dataclass(frozen=True)
class ConnectionEdge:
    source: str
    event: EventLabel
    target: str
    source_machine: str
    target_machine: str
    tid: str | None = None


@dataclass(frozen=True)
class CallEventAttributes:
    event: str
    reuse: bool = False
    auto_return: bool = True


@dataclass(frozen=True)
class ChannelBinding:
    """A user event on ``sender`` whose effect is awaited by a system event on ``receiver``."""

    send_event: str
    receive_event: str
    sender: str
    receiver: str
    name: str | None = None

    @property
    def label(self) -> str:
        return self.name or self.send_event


@dataclass(frozen=True)
class Device:
    id: str
    entry: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "entry", tuple(self.entry))


@dataclass(frozen=True)
class ControlBinding:
    control_group: str | None
    action: str
    parameter: str | None = None
    class_name: str = ""
    index: int = 0
    text: str = ""


@dataclass(frozen=True)
class ViewStateMachine:
    id: str
    states: frozenset[str]
    initial: frozenset[str]
    connection: frozenset[str] = frozenset()
    final: frozenset[str] = frozenset()
    transitions: tuple[Transition, ...] = ()
    return_of: Mapping[str, str] = field(default_factory=dict)
    app: str | None = None
    view: str | None = None

    def __post_init__(self):
        for name in ("states", "initial", "connection", "final"):
            object.__setattr__(self, name, frozenset(getattr(self, name)))
        object.__setattr__(self, "transitions", tuple(self.transitions))
        object.__setattr__(self, "return_of", dict(self.return_of))

    @cached_property
    def outgoing(self) -> dict[str, tuple[Transition, ...]]:
        out: dict[str, list[Transition]] = defaultdict(list)
        for t in self.transitions:
            out[t.source].append(t)
        return {s: tuple(ts) for s, ts in out.items()}

    @property
    def alphabet(self) -> set[EventLabel]:
        return {t.event for t in self.transitions}


@dataclass(frozen=True)
class SystemModel:
    machines: tuple[ViewStateMachine, ...]
    connection: tuple[ConnectionEdge, ...] = ()
    call_attrs: Mapping[str, CallEventAttributes] = field(default_factory=dict)
    devices: tuple[Device, ...] = ()
    channels: tuple[ChannelBinding, ...] = ()
    control_bindings: Mapping[tuple[str, str], ControlBinding] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "machines", tuple(self.machines))
        object.__setattr__(self, "connection", tuple(self.connection))
        object.__setattr__(self, "devices", tuple(self.devices))
        object.__setattr__(self, "channels", tuple(self.channels))
        attrs = self.call_attrs
        if not isinstance(attrs, Mapping):
            attrs = {a.event: a for a in attrs}
        object.__setattr__(self, "call_attrs", dict(attrs))
        object.__setattr__(self, "control_bindings", dict(self.control_bindings))

    @cached_property
    def machine_by_id(self) -> dict[str, ViewStateMachine]:
        return {m.id: m for m in self.machines}

    @cached_property
    def _state_owner(self) -> dict[str, str]:
        owner = {}
        for m in self.machines:
            for s in m.states:
                owner.setdefault(s, m.id)
        return owner

    @cached_property
    def edges_from(self) -> dict[str, tuple[ConnectionEdge, ...]]:
        out: dict[str, list[ConnectionEdge]] = defaultdict(list)
        for e in self.connection:
            out[e.source].append(e)
        return {s: tuple(es) for s, es in out.items()}

    @cached_property
    def device_by_id(self) -> dict[str, Device]:
        return {d.id: d for d in self.devices}

    @cached_property
    def device_index(self) -> dict[str, int]:
        return {d.id: i for i, d in enumerate(self.devices)}

    @cached_property
    def state_index(self) -> dict[str, int]:
        return {s: i for i, s in enumerate(sorted(self._state_owner))}

    @cached_property
    def send_index(self) -> dict[tuple[str, str], ChannelBinding]:
        return {(c.sender, c.send_event): c for c in self.channels}

    @cached_property
    def receive_index(self) -> dict[tuple[str, str], ChannelBinding]:
        return {(c.receiver, c.receive_event): c for c in self.channels}

    def machine(self, machine_id: str) -> ViewStateMachine:
        return self.machine_by_id[machine_id]

    def machine_of(self, state: str) -> ViewStateMachine:
        return self.machine_by_id[self._state_owner[state]]

    def attrs_of(self, call_event: str) -> CallEventAttributes:
        # lowering always fills records; this default only covers hand-built models
        return self.call_attrs.get(call_event) or CallEventAttributes(call_event)


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str
    subject: tuple = ()

    def __str__(self) -> str:
        return f"{self.kind}: {self.message}"


class NoExitWarning(UserWarning):
    """A machine without final and connection states has no flows."""


def validate_view_machine(m: ViewStateMachine) -> list[Violation]:
    out: list[Violation] = []
    where = f"machine {m.id!r}"

    parts = {"initial": m.initial, "connection": m.connection, "final": m.final}
    for name, part in parts.items():
        for s in sorted(part - m.states):
            out.append(Violation("UnknownState", f"{where}: {name} state {s!r} is not declared", (m.id, s)))
    overlap = (m.initial & m.connection) | (m.initial & m.final) | (m.connection & m.final)
    for s in sorted(overlap):
        out.append(Violation("DisjointnessViolation", f"{where}: state {s!r} is in more than one of I, C, F", (m.id, s)))

    if not m.initial:
        out.append(Violation("EmptyInitial", f"{where}: no initial state", (m.id,)))

    seen: dict[tuple[str, str], str] = {}
    kinds: dict[str, EventLabel] = {}
    for t in m.transitions:
        for s in (t.source, t.target):
            if s not in m.states:
                out.append(Violation("UnknownState", f"{where}: transition {t.source}-{t.event}->{t.target} uses undeclared state {s!r}", (m.id, s)))
        if t.source in m.final:
            out.append(Violation("FinalOutgoing", f"{where}: final state {t.source!r} has outgoing event {t.event.name!r}", (m.id, t.source, t.event.name)))
        if t.event.kind is EventKind.CALL:
            out.append(Violation("CallEventInMachine", f"{where}: call event {t.event.name!r} labels an in-machine transition", (m.id, t.event.name)))
        prev = kinds.setdefault(t.event.name, t.event)
        if prev != t.event:
            out.append(Violation("EventNameConflict", f"{where}: event name {t.event.name!r} used with different kinds/parameters", (m.id, t.event.name)))
        key = (t.source, t.event.name)
        if key in seen and seen[key] != t.target:
            out.append(Violation("DeterminismViolation", f"{where}: state {t.source!r} has several targets on event {t.event.name!r}", key))
        seen.setdefault(key, t.target)

    for s in sorted(m.connection):
        if s not in m.return_of:
            out.append(Violation("MissingReturn", f"{where}: connection state {s!r} has no return state", (m.id, s)))
    for s, r in sorted(m.return_of.items()):
        if s not in m.connection:
            out.append(Violation("ReturnNotConnection", f"{where}: return given for non-connection state {s!r}", (m.id, s)))
        if r not in m.states:
            out.append(Violation("UnknownState", f"{where}: return state {r!r} is not declared", (m.id, r)))

    if not m.final and not m.connection:
        warnings.warn(f"{where} has neither final nor connection states", NoExitWarning, stacklevel=2)
    return _dedup(out)


def validate_system(model: SystemModel) -> list[Violation]:
    out: list[Violation] = []
    counts = Counter(m.id for m in model.machines)
    for mid, n in sorted(counts.items()):
        if n > 1:
            out.append(Violation("DuplicateMachine", f"machine id {mid!r} is used {n} times", (mid,)))
    owners: dict[str, str] = {}
    for m in model.machines:
        out.extend(validate_view_machine(m))
        for s in sorted(m.states):
            if s in owners and owners[s] != m.id:
                out.append(Violation("StateOverlap", f"state {s!r} belongs to both {owners[s]!r} and {m.id!r}", (s,)))
            owners.setdefault(s, m.id)

    machines = model.machine_by_id
    call_events = set()
    for e in model.connection:
        where = f"connection {e.source}-{e.event.name}->{e.target}"
        src, dst = machines.get(e.source_machine), machines.get(e.target_machine)
        if src is None or dst is None:
            missing = e.source_machine if src is None else e.target_machine
            out.append(Violation("UnknownMachine", f"{where}: unknown machine {missing!r}", (missing,)))
            continue
        if e.source not in src.connection:
            out.append(Violation("ConnectionSourceViolation", f"{where}: source is not a connection state of {src.id!r}", (e.source,)))
        if e.target not in dst.initial:
            out.append(Violation("ConnectionTargetViolation", f"{where}: target is not an initial state of {dst.id!r}", (e.target,)))
        if e.event.kind is not EventKind.CALL:
            out.append(Violation("CallEventKind", f"{where}: edge label must have kind=call", (e.event.name,)))
        call_events.add(e.event.name)
    for name in sorted(call_events):
        if name not in model.call_attrs:
            out.append(Violation("MissingCallAttributes", f"call event {name!r} has no reuse/autoReturn record", (name,)))
    for name in sorted(set(model.call_attrs) - call_events):
        out.append(Violation("UnusedCallAttributes", f"attributes given for unknown call event {name!r}", (name,)))

    dev_ids = Counter(d.id for d in model.devices)
    for did, n in sorted(dev_ids.items()):
        if n > 1:
            out.append(Violation("DuplicateDevice", f"device id {did!r} is used {n} times", (did,)))
    for d in model.devices:
        if not d.entry:
            out.append(Violation("EmptyDevice", f"device {d.id!r} has no entry machine", (d.id,)))
        for mid in d.entry:
            if mid not in machines:
                out.append(Violation("UnknownMachine", f"device {d.id!r}: unknown entry machine {mid!r}", (mid,)))

    out.extend(_validate_channels(model))
    return _dedup(out)


def _validate_channels(model: SystemModel) -> list[Violation]:
    out = []
    labels: dict[str, set[EventKind]] = defaultdict(set)
    for m in model.machines:
        for t in m.transitions:
            labels[t.event.name].add(t.event.kind)
    sends = Counter(c.send_event for c in model.channels)
    receives = Counter(c.receive_event for c in model.channels)
    for c in model.channels:
        where = f"channel {c.label!r}"
        if c.sender == c.receiver:
            out.append(Violation("ChannelBinding", f"{where}: sender and receiver are the same device", (c.label,)))
        for dev in (c.sender, c.receiver):
            if dev not in model.device_by_id:
                out.append(Violation("ChannelBinding", f"{where}: unknown device {dev!r}", (c.label, dev)))
        if EventKind.USER not in labels.get(c.send_event, ()):
            out.append(Violation("ChannelBinding", f"{where}: send event {c.send_event!r} is not a user event of any machine", (c.label,)))
        if EventKind.SYSTEM not in labels.get(c.receive_event, ()):
            out.append(Violation("ChannelBinding", f"{where}: receive event {c.receive_event!r} is not a system event of any machine", (c.label,)))
        if sends[c.send_event] > 1 or receives[c.receive_event] > 1:
            out.append(Violation("ChannelBinding", f"{where}: event bound by more than one channel", (c.label,)))
    return out


def _dedup(vs: Iterable[Violation]) -> list[Violation]:
    seen, out = set(), []
    for v in vs:
        if (v.kind, v.subject) not in seen:
            seen.add((v.kind, v.subject))
            out.append(v)
    return out


def model_digest(model: SystemModel) -> str:
    """Stable sha256 of the model structure (control bindings included)."""

    def lab(e: EventLabel):
        return [e.name, e.kind.value, [list(p) for p in e.params]]

    doc = {
        "machines": [
            {
                "id": m.id,
                "states": sorted(m.states),
                "initial": sorted(m.initial),
                "connection": sorted(m.connection),
                "final": sorted(m.final),
                "transitions": sorted([t.source, lab(t.event), t.target, t.tid or ""] for t in m.transitions),
                "return": sorted(m.return_of.items()),
                "app": m.app,
                "view": m.view,
            }
            for m in model.machines
        ],
        "connection": sorted(
            [e.source, lab(e.event), e.target, e.source_machine, e.target_machine, e.tid or ""] for e in model.connection
        ),
        "call_attrs": sorted([a.event, a.reuse, a.auto_return] for a in model.call_attrs.values()),
        "devices": [[d.id, list(d.entry)] for d in model.devices],
        "channels": sorted([c.send_event, c.receive_event, c.sender, c.receiver, c.name or ""] for c in model.channels),
        "bindings": sorted(
            [list(k), b.control_group, b.action, b.parameter, b.class_name, b.index, b.text]
            for k, b in model.control_bindings.items()
        ),
    }
    raw = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(raw).hexdigest()
