"""Independent reference implementations used by the tests.

Nothing here imports the semantics, explorer or reduction modules: the
enumerator below re-derives the device rules directly from the model data
so the two implementations can be compared.
"""

from __future__ import annotations

import random
from itertools import count

from droidmbt.model import (
    CallEventAttributes,
    ChannelBinding,
    ConnectionEdge,
    Device,
    EventKind,
    EventLabel,
    SystemModel,
    Transition,
    ViewStateMachine,
)

# ---------------------------------------------------------------- enumerator


class Oracle:
    """Recursive enumeration of bounded runs of a system model.

    A device configuration is ``(current, frames)`` where ``frames`` is a
    tuple of ``(return_state, call_event)`` pairs, bottom first.
    """

    def __init__(self, model: SystemModel, relaxed: bool = False):
        self.model = model
        self.relaxed = relaxed
        self.owner = {s: m for m in model.machines for s in m.states}
        self.sends = {(c.sender, c.send_event): c.send_event for c in model.channels}
        self.recvs = {(c.receiver, c.receive_event): c.send_event for c in model.channels}

    def _attrs(self, name):
        a = self.model.call_attrs.get(name)
        return (a.reuse, a.auto_return) if a else (False, True)

    def moves(self, cfg):
        """(event or None, next configuration) pairs of one device."""
        cur, frames = cfg
        m = self.owner[cur]
        out = []
        for t in m.transitions:
            if t.source == cur:
                out.append((t.event, (t.target, frames)))
        if cur in m.connection:
            for e in self.model.connection:
                if e.source != cur:
                    continue
                reuse, _ = self._attrs(e.event.name)
                fresh = (e.target, frames + ((m.return_of[cur], e.event.name),))
                if not reuse:
                    out.append((e.event, fresh))
                    continue
                target_states = self.model.machine_by_id[e.target_machine].states
                hits = [k for k, (r, _) in enumerate(frames) if r in target_states]
                if hits:
                    k = hits[-1]
                    out.append((e.event, (frames[k][0], frames[:k])))
                else:
                    out.append((e.event, fresh))
        if cur in m.final and frames and self._attrs(frames[-1][1])[1]:
            out.append((None, (frames[-1][0], frames[:-1])))
        return out

    def finished(self, cfg) -> bool:
        return cfg[0] in self.owner[cfg[0]].final and not self.moves(cfg)

    def starts(self):
        per_device = []
        for d in self.model.devices:
            inits = sorted({s for mid in d.entry for s in self.model.machine_by_id[mid].initial})
            per_device.append([(s, ()) for s in inits])
        combos = [()]
        for opts in per_device:
            combos = [c + (o,) for c in combos for o in opts]
        return combos

    def run(self, bound: int, mode: str = "complete") -> dict[tuple, bool]:
        """Map event sequence -> whether some run with that sequence is complete.

        ``mode`` is ``complete`` (only finished runs), ``leaves`` (finished
        runs plus runs with no move left inside the bound) or ``prefixes``
        (every run with at least one event).
        """
        devices = [d.id for d in self.model.devices]
        found: dict[tuple, bool] = {}

        def record(events, complete):
            if events:
                found[events] = found.get(events, False) or complete

        def walk(cfgs, pending, counts, events):
            succ = []
            blocked_by_bound = False
            for i, cfg in enumerate(cfgs):
                dev = devices[i]
                for ev, nxt in self.moves(cfg):
                    new_pending = dict(pending)
                    if ev is not None:
                        if counts[i] >= bound:
                            blocked_by_bound = True
                            continue
                        key = (dev, ev.name)
                        if key in self.sends:
                            ch = self.sends[key]
                            new_pending[ch] = new_pending.get(ch, 0) + 1
                        elif key in self.recvs:
                            ch = self.recvs[key]
                            if new_pending.get(ch, 0) <= 0 and not self.relaxed:
                                continue
                            new_pending[ch] = new_pending.get(ch, 0) - 1
                    new_counts = counts if ev is None else counts[:i] + (counts[i] + 1,) + counts[i + 1 :]
                    new_events = events if ev is None else events + ((dev, ev.name),)
                    succ.append((cfgs[:i] + (nxt,) + cfgs[i + 1 :], new_pending, new_counts, new_events))
            complete = (
                not succ
                and not blocked_by_bound
                and all(self.finished(c) for c in cfgs)
                and all(v >= 0 for v in pending.values())
            )
            if complete:
                record(events, True)
            elif mode == "prefixes" or (mode == "leaves" and not succ):
                record(events, False)
            for args in succ:
                walk(*args)

        for cfgs in self.starts():
            walk(cfgs, {}, (0,) * len(devices), ())
        return found


def explorer_view(result) -> dict[tuple, bool]:
    return {tc.events: tc.complete for tc in result.test_cases}


# ---------------------------------------------------------------- trace closure


def swap_closure(sequences, model: SystemModel) -> set[tuple]:
    """All event sequences reachable by swapping adjacent independent events."""
    send_of = {(c.sender, c.send_event): c.send_event for c in model.channels}
    recv_of = {(c.receiver, c.receive_event): c.send_event for c in model.channels}

    def tags(seq):
        seen: dict[tuple, int] = {}
        out = []
        for ev in seq:
            if ev in send_of:
                key = ("s", send_of[ev])
            elif ev in recv_of:
                key = ("r", recv_of[ev])
            else:
                out.append(None)
                continue
            n = seen.get(key, 0)
            seen[key] = n + 1
            out.append((key[1], n))
        return out

    todo = [tuple(s) for s in sequences]
    closed = set(todo)
    while todo:
        seq = todo.pop()
        t = tags(seq)
        for i in range(len(seq) - 1):
            a, b = seq[i], seq[i + 1]
            if a[0] == b[0] or (t[i] is not None and t[i] == t[i + 1]):
                continue
            nxt = seq[:i] + (b, a) + seq[i + 2 :]
            if nxt not in closed:
                closed.add(nxt)
                todo.append(nxt)
    return closed


# ---------------------------------------------------------------- random models


def random_model(rng: random.Random, max_devices: int = 2) -> SystemModel:
    """A small well-formed system model drawn from ``rng``."""
    n_dev = rng.randint(1, max_devices)
    machines, edges, attrs, devices = [], [], {}, []
    calls = count()
    per_device_states = []
    for d in range(n_dev):
        mids = [f"d{d}m{k}" for k in range(rng.randint(1, 2))]
        built = []
        for mid in mids:
            states = [f"{mid}s{i}" for i in range(rng.randint(2, 6))]
            roles = {states[0]: "initial", states[-1]: "final"}
            for s in states[1:-1]:
                roles[s] = rng.choice(["plain", "plain", "final", "conn"])
            final = {s for s, r in roles.items() if r == "final"}
            conn = {s for s, r in roles.items() if r == "conn"}
            trans = []
            for s in states:
                if s in final:
                    continue
                for ev in rng.sample(["a", "b", "c"], rng.randint(0 if s in conn else 1, 2)):
                    # lean towards exits so that many runs complete
                    target = rng.choice(sorted(final)) if rng.random() < 0.35 else rng.choice(states)
                    trans.append(Transition(s, EventLabel(ev), target))
            ret = {s: rng.choice(states) for s in sorted(conn)}
            built.append((mid, states, conn, final, trans, ret))
        for mid, states, conn, final, trans, ret in built:
            for s in sorted(conn):
                for target in rng.sample(mids, rng.randint(1, len(mids))):
                    name = f"call{next(calls)}"
                    edges.append(ConnectionEdge(s, EventLabel(name, EventKind.CALL), f"{target}s0", mid, target))
                    attrs[name] = CallEventAttributes(name, reuse=rng.random() < 0.3, auto_return=rng.random() < 0.8)
        per_device_states.append(built)
        devices.append(Device(f"dev{d}", (mids[0],)))

    channels = []
    if n_dev == 2 and rng.random() < 0.6:
        for d, ev, kind in ((0, "snd", EventKind.USER), (1, "rcv", EventKind.SYSTEM)):
            mid, states, conn, final, trans, ret = rng.choice(per_device_states[d])
            sources = [s for s in states if s not in final]
            trans.append(Transition(rng.choice(sources), EventLabel(ev, kind), rng.choice(states)))
        channels.append(ChannelBinding("snd", "rcv", "dev0", "dev1", "ch"))

    for built in per_device_states:
        for mid, states, conn, final, trans, ret in built:
            machines.append(
                ViewStateMachine(mid, set(states), {states[0]}, conn, final, _dedup_det(trans), ret)
            )
    return SystemModel(tuple(machines), tuple(edges), attrs, tuple(devices), tuple(channels))


def _dedup_det(trans):
    seen, out = set(), []
    for t in trans:
        if (t.source, t.event.name) not in seen:
            seen.add((t.source, t.event.name))
            out.append(t)
    return out
