"""Trace-equivalence reduction for multi-device test cases.

Two steps are independent when they run on different devices and are not
the matched send/receive pair of one channel instance.  The k-th send on a
channel is matched with the k-th receive on it.  Each equivalence class
is represented by its lexicographically least linearisation, ordering
steps by (device position, per-device step index).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .model import SystemModel
from .trace import Step, TestCase


@dataclass(frozen=True)
class Annotated:
    step: Step
    device_pos: int
    local_index: int
    match: tuple[str, int] | None


class IndependenceRelation:
    def __init__(self, devices: Sequence[str], channels=()):
        self.device_order = {d: i for i, d in enumerate(devices)}
        self._send = {(c.sender, c.send_event): c.send_event for c in channels}
        self._recv = {(c.receiver, c.receive_event): c.send_event for c in channels}

    @classmethod
    def from_model(cls, model: SystemModel) -> "IndependenceRelation":
        return cls([d.id for d in model.devices], model.channels)

    def annotate(self, steps: Iterable[Step]) -> list[Annotated]:
        local: dict[str, int] = {}
        sends: dict[str, int] = {}
        recvs: dict[str, int] = {}
        out = []
        for s in steps:
            i = local.get(s.device, 0)
            local[s.device] = i + 1
            match = None
            if s.event is not None:
                key = (s.device, s.event.name)
                if key in self._send:
                    ch = self._send[key]
                    match = (ch, sends.get(ch, 0))
                    sends[ch] = match[1] + 1
                elif key in self._recv:
                    ch = self._recv[key]
                    match = (ch, recvs.get(ch, 0))
                    recvs[ch] = match[1] + 1
            pos = self.device_order.get(s.device, len(self.device_order))
            out.append(Annotated(s, pos, i, match))
        return out

    @staticmethod
    def independent(a: Annotated, b: Annotated) -> bool:
        if a.step.device == b.step.device:
            return False
        return a.match is None or a.match != b.match


def canonicalize(tc: TestCase, indep: IndependenceRelation) -> TestCase:
    """Least representative of ``tc``'s class under adjacent independent swaps."""
    ann = indep.annotate(tc.steps)
    n = len(ann)
    # each step waits for its same-device predecessor and for an earlier matched partner
    preds: list[list[int]] = [[] for _ in range(n)]
    last_on: dict[str, int] = {}
    partner: dict[tuple[str, int], int] = {}
    for j, a in enumerate(ann):
        if a.step.device in last_on:
            preds[j].append(last_on[a.step.device])
        last_on[a.step.device] = j
        if a.match is not None:
            if a.match in partner:
                preds[j].append(partner[a.match])
            else:
                partner[a.match] = j
    placed = [False] * n
    order: list[int] = []
    for _ in range(n):
        best = None
        for j in range(n):
            if placed[j] or not all(placed[p] for p in preds[j]):
                continue
            key = (ann[j].device_pos, ann[j].local_index)
            if best is None or key < best[0]:
                best = (key, j)
        placed[best[1]] = True
        order.append(best[1])
    return TestCase(tuple(tc.steps[j] for j in order), tc.complete)

