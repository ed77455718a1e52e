"""PROMELA rendering of a system model, for cross-checking the explorer with SPIN.

Each device is an active proctype walking app, view and state-machine
inlines; every fired transition is appended to a global trace, and a
``traceCloser`` process prints it once all devices have finished.  Trace
entries are ``device * TR_BASE + n`` where ``n`` is the number assigned by
:func:`transition_numbers`.
"""

from __future__ import annotations

import re
from collections import defaultdict

from ..model import SystemModel, ViewStateMachine, model_digest
from ..semantics import ReceivePolicy


class Mangler:
    """Maps names to ``[A-Za-z0-9_]`` identifiers, numbering collisions."""

    def __init__(self, prefix: str = ""):
        self.prefix = prefix
        self._names: dict[str, str] = {}
        self._used: set[str] = set()

    def __call__(self, raw: str) -> str:
        if raw in self._names:
            return self._names[raw]
        base = self.prefix + (re.sub(r"[^A-Za-z0-9_]", "_", raw.replace("<", "").replace(">", "")) or "x")
        ident, n = base, 1
        while ident in self._used:
            n += 1
            ident = f"{base}_{n}"
        self._used.add(ident)
        self._names[raw] = ident
        return ident


def transition_numbers(model: SystemModel) -> dict[tuple[str, str], int]:
    """Global 1-based number of each transition and call edge, keyed by (source, event)."""
    out: dict[tuple[str, str], int] = {}
    edges = defaultdict(list)
    for e in model.connection:
        edges[e.source_machine].append(e)
    n = 0
    for m in model.machines:
        for t in m.transitions:
            n += 1
            out[(t.source, t.event.name)] = n
        for e in edges[m.id]:
            n += 1
            out[(e.source, e.event.name)] = n
    return out


def _view_key(m: ViewStateMachine) -> tuple[str, str]:
    return (m.app or "", m.view or m.id)


def _call_graph(model: SystemModel):
    """Call edges as a graph, its back edges, and callee-first machine order."""
    succ = defaultdict(list)
    for e in model.connection:
        if e.target_machine not in succ[e.source_machine]:
            succ[e.source_machine].append(e.target_machine)
    colour: dict[str, int] = {}
    back: set[tuple[str, str]] = set()
    order: list[str] = []
    roots = [mid for d in model.devices for mid in d.entry] + [m.id for m in model.machines]

    for root in roots:
        if root in colour:
            continue
        colour[root] = 1
        stack = [(root, iter(succ[root]))]
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                colour[node] = 2
                order.append(node)
                stack.pop()
            elif colour.get(nxt) == 1:
                back.add((node, nxt))
            elif nxt not in colour:
                colour[nxt] = 1
                stack.append((nxt, iter(succ[nxt])))
    return succ, back, order


def _max_depth(model: SystemModel, succ, back) -> int:
    memo: dict[str, int] = {}

    def depth(mid: str) -> int:
        if mid not in memo:
            memo[mid] = 1 + max((depth(t) for t in succ[mid] if (mid, t) not in back), default=0)
        return memo[mid]

    return max((depth(mid) for d in model.devices for mid in d.entry), default=1)


def emit_promela(model: SystemModel, bound, policy: ReceivePolicy | str = ReceivePolicy.STRICT) -> str:
    """Self-contained SPIN model whose complete runs are the bounded test cases."""
    policy = ReceivePolicy(policy)
    max_tr = getattr(bound, "max_transitions", bound)
    numbers = transition_numbers(model)
    succ, back, order = _call_graph(model)
    max_bk = _max_depth(model, succ, back)

    dev_id, state_id, view_id, mach_id = Mangler("D_"), Mangler("State_"), Mangler("VIEW_"), Mangler()
    app_id, chan_id = Mangler(), Mangler("CH_")

    view_entry: dict[tuple[str, str], str] = {}
    for m in model.machines:
        view_entry.setdefault(_view_key(m), m.id)
    send_events = sorted({c.send_event for c in model.channels})

    w = []
    w.append(f"/* generated by droidmbt; model {model_digest(model)[:12]} */")
    w.append(f"#define DEVICES {len(model.devices)}")
    w.append(f"#define MAX_TR {max_tr}")
    w.append(f"#define MAX_BK {max_bk}")
    w.append(f"#define TR_BASE {max(len(numbers) + 1, 100)}")
    w.append(f"#define CHANNELS {max(len(send_events), 1)}")
    for i, d in enumerate(model.devices):
        w.append(f"#define {dev_id(d.id)} {i}")
    views = sorted({_view_key(m) for m in model.machines})
    for i, key in enumerate(views):
        w.append(f"#define {view_id('_'.join(p for p in key if p))} {i}")
    for s, i in sorted(model.state_index.items(), key=lambda kv: kv[1]):
        w.append(f"#define {state_id(s)} {i}")
    for i, ev in enumerate(send_events):
        w.append(f"#define {chan_id(ev)} {i}")
    w.append("")
    w.append("typedef Backstack { short states[MAX_BK]; short index };")
    w.append("typedef Device { short transitions[MAX_TR]; short index; bool finished; Backstack backstack };")
    w.append("Device devices[DEVICES];")
    w.append("int trace[DEVICES * MAX_TR];")
    w.append("short traceLen;")
    w.append("short pending[CHANNELS];")
    w.append("")
    w.append("#define currentBackstack devices[device].backstack")
    w.append("#define currentState currentBackstack.states[currentBackstack.index]")
    w.append("")
    w.append("inline pushToBackstack(device, s) {")
    w.append("  currentBackstack.index++;")
    w.append("  currentState = s")
    w.append("}")
    w.append("")
    w.append("inline popFromBackstack(device) {")
    w.append("  currentBackstack.index--")
    w.append("}")
    w.append("")
    w.append("inline transition(device, view, id) {")
    w.append("  if")
    w.append("  :: devices[device].index < MAX_TR ->")
    w.append("       devices[device].transitions[devices[device].index] = id;")
    w.append("       devices[device].index++;")
    w.append("       trace[traceLen] = device * TR_BASE + id;")
    w.append("       traceLen++")
    w.append("  :: else -> goto device_truncated")
    w.append("  fi")
    w.append("}")
    w.append("")

    def view_of(mid: str) -> str:
        key = _view_key(model.machine(mid))
        return view_id("_".join(p for p in key if p))

    def callee(mid: str) -> str:
        m = model.machine(mid)
        if view_entry[_view_key(m)] == mid:
            return "view_" + mach_id("_".join(p for p in _view_key(m) if p))
        return "statemachine_" + mach_id(mid)

    def channel_guard(event: str) -> str:
        if policy is ReceivePolicy.RELAXED:
            return ""
        terms = [
            f"(device != {dev_id(c.receiver)} || pending[{chan_id(c.send_event)}] > 0)"
            for c in model.channels
            if c.receive_event == event
        ]
        return "".join(f" && {t}" for t in terms)

    def channel_effect(event: str) -> str:
        parts = []
        for c in model.channels:
            ch = chan_id(c.send_event)
            if c.send_event == event:
                parts.append(f"pending[{ch}] = pending[{ch}] + (device == {dev_id(c.sender)} -> 1 : 0)")
            if c.receive_event == event:
                parts.append(f"pending[{ch}] = pending[{ch}] - (device == {dev_id(c.receiver)} -> 1 : 0)")
        return "".join(f"; {p}" for p in parts)

    emitted_views: set[str] = set()
    for mid in order:
        m = model.machine(mid)
        view = view_of(mid)
        w.append(f"inline statemachine_{mach_id(mid)}(device, start) {{")
        w.append("  pushToBackstack(device, start);")
        w.append("  do")
        for t in m.transitions:
            n = numbers[(t.source, t.event.name)]
            body = f"transition(device, {view}, {n}); currentState = {state_id(t.target)}{channel_effect(t.event.name)}"
            guard = f"currentState == {state_id(t.source)}{channel_guard(t.event.name)}"
            tail = "; break" if t.target in m.final else ""
            w.append(f"  :: atomic {{ {guard} -> {body} }}{tail}  /* ID {t.tid} */")
        for e in model.connection:
            if e.source_machine != mid:
                continue
            n = numbers[(e.source, e.event.name)]
            head = f"  :: atomic {{ currentState == {state_id(e.source)} -> transition(device, {view}, {n}) }}"
            if (mid, e.target_machine) in back:
                w.append(f"{head}; goto device_truncated  /* ID {e.tid}: recursive call */")
                continue
            attrs = model.attrs_of(e.event.name)
            start = state_id(e.target)
            if not attrs.auto_return:
                after = "goto device_finish"
            else:
                ret = m.return_of[e.source]
                after = f"currentState = {state_id(ret)}" + ("; break" if ret in m.final else "")
            w.append(f"{head}; {callee(e.target_machine)}(device, {start}); {after}  /* ID {e.tid} */")
        w.append("  od;")
        w.append("  popFromBackstack(device)")
        w.append("}")
        w.append("")
        vkey = "_".join(p for p in _view_key(m) if p)
        if view_entry[_view_key(m)] == mid and vkey not in emitted_views:
            emitted_views.add(vkey)
            w.append(f"inline view_{mach_id(vkey)}(device, start) {{")
            w.append(f"  statemachine_{mach_id(mid)}(device, start)")
            w.append("}")
            w.append("")

    for d in model.devices:
        by_app: dict[str, list[str]] = defaultdict(list)
        for mid in d.entry:
            by_app[model.machine(mid).app or "app"].append(mid)
        for app, mids in by_app.items():
            w.append(f"inline app_{app_id(d.id + '_' + app)}(device) {{")
            w.append("  if")
            for mid in mids:
                for s in sorted(model.machine(mid).initial):
                    w.append(f"  :: true -> {callee(mid)}(device, {state_id(s)})")
            w.append("  fi")
            w.append("}")
            w.append("")
        dv = dev_id(d.id)
        w.append(f"active proctype device_{dv[2:]}() {{")
        w.append(f"  short device = {dv};")
        w.append("  currentBackstack.index = -1;")
        w.append("  if")
        for app in by_app:
            w.append(f"  :: true -> app_{app_id(d.id + '_' + app)}(device)")
        w.append("  fi;")
        w.append("device_finish:")
        w.append("  devices[device].finished = true;")
        w.append("  goto device_end;")
        w.append("device_truncated:")
        w.append("  skip;")
        w.append("device_end:")
        w.append("  skip")
        w.append("}")
        w.append("")

    ready = [f"devices[{dev_id(d.id)}].finished" for d in model.devices] or ["true"]
    if policy is ReceivePolicy.RELAXED:
        ready += [f"pending[{chan_id(ev)}] >= 0" for ev in send_events]
    w.append(f"active proctype traceCloser() provided ({' && '.join(ready)}) {{")
    w.append("  short i = 0;")
    w.append("end_tc:")
    w.append('  printf("TC");')
    w.append("  do")
    w.append('  :: i < traceLen -> printf(" %d", trace[i]); i++')
    w.append("  :: else -> break")
    w.append("  od;")
    w.append('  printf("\\n")')
    w.append("}")
    return "\n".join(w) + "\n"


def parse_spin_output(text: str, model: SystemModel) -> set[tuple[tuple[str, int], ...]]:
    """Trace lines printed by ``traceCloser`` as sets of (device, transition number)."""
    base = max(len(transition_numbers(model)) + 1, 100)
    ids = [d.id for d in model.devices]
    out = set()
    for line in text.splitlines():
        line = line.strip()
        if not line.startswith("TC"):
            continue
        out.add(tuple((ids[v // base], v % base) for v in map(int, line[2:].split())))
    return out
