"""Transition rules over device configurations and multi-device states.

Single-device steps follow rules R1-R5; the multi-device lift adds the
send (R6) and receive (R7) rules of channel-bound events.  All functions
here are pure: they take a state and return its successors.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from itertools import product
from typing import Collection, Iterable, Union

from .model import ConnectionEdge, EventLabel, SystemModel, Transition, ViewStateMachine


class Rule(str, enum.Enum):
    R1 = "R1"
    R2 = "R2"
    R3 = "R3"
    R4 = "R4"
    R5 = "R5"
    R6 = "R6"
    R7 = "R7"


class ReceivePolicy(str, enum.Enum):
    """How a receive event is enabled relative to its matching send.

    ``STRICT`` needs the send to be pending already.  ``RELAXED`` lets the
    receive go first and records a debt that a later send must repay.
    """

    STRICT = "strict"
    RELAXED = "relaxed"


@dataclass(frozen=True, order=True)
class Configuration:
    current: str
    state_history: tuple[str, ...] = ()
    event_history: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "state_history", tuple(self.state_history))
        object.__setattr__(self, "event_history", tuple(self.event_history))


@dataclass(frozen=True)
class StepChoice:
    rule: Rule
    event: EventLabel | None
    device: str = ""
    via: Union[Transition, ConnectionEdge, None] = field(default=None, compare=False)

    def __post_init__(self):
        if (self.rule is Rule.R5) != (self.event is None):
            raise ValueError("only R5 steps carry no event")


@dataclass(frozen=True)
class MultiDeviceState:
    configs: tuple[Configuration, ...]
    pending: tuple[tuple[str, int], ...] = ()
    finished: tuple[bool, ...] = ()

    def pending_count(self, send_event: str) -> int:
        for name, n in self.pending:
            if name == send_event:
                return n
        return 0

    @property
    def in_debt(self) -> bool:
        return any(n < 0 for _, n in self.pending)


def top_index(history: Iterable[str], states: Collection[str]) -> int:
    """Position of the last history entry that lies in ``states``, or -1."""
    hist = tuple(history)
    for k in range(len(hist) - 1, -1, -1):
        if hist[k] in states:
            return k
    return -1


def top(history: Iterable[str], machine: ViewStateMachine | Collection[str]) -> str | None:
    """Last state of ``machine`` in ``history``; ``None`` stands for bottom."""
    states = machine.states if isinstance(machine, ViewStateMachine) else machine
    hist = tuple(history)
    k = top_index(hist, states)
    return hist[k] if k >= 0 else None


def _order(item: tuple[StepChoice, Configuration]):
    choice, cfg = item
    rule_no = int(choice.rule.value[1:])
    return (rule_no, choice.event.name if choice.event else "", cfg.current)


def enabled_single(cfg: Configuration, model: SystemModel, device: str = "") -> list[tuple[StepChoice, Configuration]]:
    """All successors of ``cfg`` by R1-R5, sorted by (rule, event, target)."""
    machine = model.machine_of(cfg.current)
    s, h, eh = cfg.current, cfg.state_history, cfg.event_history
    out: list[tuple[StepChoice, Configuration]] = []

    for t in machine.outgoing.get(s, ()):
        out.append((StepChoice(Rule.R1, t.event, device, t), Configuration(t.target, h, eh)))

    if s in machine.connection:
        ret = machine.return_of[s]
        for edge in model.edges_from.get(s, ()):
            e = edge.event.name
            pushed = Configuration(edge.target, h + (ret,), eh + (e,))
            if not model.attrs_of(e).reuse:
                out.append((StepChoice(Rule.R2, edge.event, device, edge), pushed))
                continue
            k = top_index(h, model.machine(edge.target_machine).states)
            if k < 0:
                out.append((StepChoice(Rule.R3, edge.event, device, edge), pushed))
            else:
                out.append((StepChoice(Rule.R4, edge.event, device, edge), Configuration(h[k], h[:k], eh[:k])))

    if s in machine.final and h and eh and model.attrs_of(eh[-1]).auto_return:
        out.append((StepChoice(Rule.R5, None, device), Configuration(h[-1], h[:-1], eh[:-1])))

    out.sort(key=_order)
    return out


def is_terminal(cfg: Configuration, model: SystemModel) -> bool:
    return not enabled_single(cfg, model)


def is_finished(cfg: Configuration, model: SystemModel) -> bool:
    """Terminal at a final state: the device completed its flow."""
    m = model.machine_of(cfg.current)
    if cfg.current not in m.final:
        return False
    if m.outgoing.get(cfg.current) or cfg.current in m.connection:
        return is_terminal(cfg, model)
    h = cfg.event_history
    return not (h and cfg.state_history and model.attrs_of(h[-1]).auto_return)


def initial_configurations(model: SystemModel, device: str) -> list[Configuration]:
    entry = model.device_by_id[device].entry
    starts = sorted({s for mid in entry for s in model.machine(mid).initial})
    return [Configuration(s) for s in starts]


def initial_states(model: SystemModel) -> list[MultiDeviceState]:
    per_device = [initial_configurations(model, d.id) for d in model.devices]
    out = []
    for cfgs in product(*per_device):
        fin = tuple(is_finished(c, model) for c in cfgs)
        out.append(MultiDeviceState(tuple(cfgs), (), fin))
    return out


def _bump(pending: tuple[tuple[str, int], ...], key: str, delta: int) -> tuple[tuple[str, int], ...]:
    counts = dict(pending)
    n = counts.get(key, 0) + delta
    if n:
        counts[key] = n
    else:
        counts.pop(key, None)
    return tuple(sorted(counts.items()))


def enabled_multi(
    ms: MultiDeviceState, model: SystemModel, policy: ReceivePolicy = ReceivePolicy.STRICT
) -> list[tuple[StepChoice, MultiDeviceState]]:
    """Interleaved successors of ``ms``, device by device in model order."""
    out: list[tuple[StepChoice, MultiDeviceState]] = []
    for i, dev in enumerate(model.devices):
        if ms.finished and ms.finished[i]:
            continue
        cfg = ms.configs[i]
        for choice, nxt in enabled_single(cfg, model, dev.id):
            pending = ms.pending
            rule = choice.rule
            if rule is Rule.R1:
                name = choice.event.name
                send = model.send_index.get((dev.id, name))
                recv = model.receive_index.get((dev.id, name))
                if send is not None:
                    rule = Rule.R6
                    pending = _bump(pending, send.send_event, +1)
                elif recv is not None:
                    if policy is ReceivePolicy.STRICT and ms.pending_count(recv.send_event) <= 0:
                        continue
                    rule = Rule.R7
                    pending = _bump(pending, recv.send_event, -1)
            configs = ms.configs[:i] + (nxt,) + ms.configs[i + 1 :]
            fin = list(ms.finished) if ms.finished else [False] * len(configs)
            fin[i] = is_finished(nxt, model)
            step = StepChoice(rule, choice.event, dev.id, choice.via)
            out.append((step, MultiDeviceState(configs, pending, tuple(fin))))
    return out


def is_complete(ms: MultiDeviceState) -> bool:
    return all(ms.finished) and not ms.in_debt


def encode_state(ms: MultiDeviceState, model: SystemModel) -> bytes:
    """Compact binary form: per device current, state stack and call stack as u16 ids."""
    idx = model.state_index
    calls = {name: i for i, name in enumerate(sorted(model.call_attrs))}
    chans = {c.send_event: i for i, c in enumerate(model.channels)}
    buf = bytearray(struct.pack("<H", len(ms.configs)))
    for cfg in ms.configs:
        buf += struct.pack("<HH", idx[cfg.current], len(cfg.state_history))
        buf += struct.pack(f"<{len(cfg.state_history)}H", *(idx[s] for s in cfg.state_history))
        buf += struct.pack(f"<{len(cfg.event_history)}H", *(calls.get(e, 0xFFFF) for e in cfg.event_history))
    buf += struct.pack("<H", len(ms.pending))
    for name, n in ms.pending:
        buf += struct.pack("<Hh", chans.get(name, 0xFFFF), n)
    buf += bytes(int(f) for f in ms.finished)
    return bytes(buf)
