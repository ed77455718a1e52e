"""Bounded exhaustive generation of flows and test cases.

The search is a depth-first walk with an explicit stack.  No state is ever
merged with another one reached through a different prefix: the trace is
part of the search node, so the tree is only cut by the per-device
transition bound.  Deduplication happens on the emitted event sequences.
"""

from __future__ import annotations

import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .model import SystemModel, ViewStateMachine
from .por import IndependenceRelation, canonicalize
from .semantics import (
    Configuration,
    MultiDeviceState,
    ReceivePolicy,
    Rule,
    StepChoice,
    enabled_multi,
    enabled_single,
    encode_state,
    initial_states,
    is_complete,
    is_finished,
)
from .trace import Step, TestCase


@dataclass(frozen=True)
class ExplorationBound:
    max_transitions: int = 10
    require_all_finished: bool = True
    emit_truncated: bool = False
    # cap on expanded search nodes; None means unlimited
    global_cap: int | None = None

    def __post_init__(self):
        if self.max_transitions < 1:
            raise ValueError("max_transitions must be >= 1")
        if self.global_cap is not None and self.global_cap < 1:
            raise ValueError("global_cap must be >= 1")


class BoundTooSmall(UserWarning):
    pass


class ExplorationCapExceeded(RuntimeError):
    def __init__(self, cap: int, expanded: int):
        super().__init__(f"global expansion cap {cap} exceeded ({expanded} nodes expanded)")
        self.cap = cap
        self.expanded = expanded

    def __reduce__(self):
        return (ExplorationCapExceeded, (self.cap, self.expanded))


class ReplayError(ValueError):
    pass


@dataclass(frozen=True)
class BoundExhausted:
    truncated: int


@dataclass
class ExplorationStats:
    expanded: int = 0
    peak_live: int = 0
    truncated: int = 0
    stuck: int = 0
    max_history: int = 0
    state_size: int = 0
    elapsed: float = 0.0

    @property
    def bound_exhausted(self) -> BoundExhausted | None:
        return BoundExhausted(self.truncated) if self.truncated else None

    def merge(self, other: "ExplorationStats") -> None:
        self.expanded += other.expanded
        self.peak_live = max(self.peak_live, other.peak_live)
        self.truncated += other.truncated
        self.stuck += other.stuck
        self.max_history = max(self.max_history, other.max_history)
        self.state_size = max(self.state_size, other.state_size)


@dataclass
class ExplorationResult:
    test_cases: list[TestCase]
    stats: ExplorationStats = field(default_factory=ExplorationStats)

    def __iter__(self):
        return iter(self.test_cases)

    def __len__(self) -> int:
        return len(self.test_cases)

    @property
    def event_sequences(self) -> set[tuple[tuple[str, str], ...]]:
        return {tc.events for tc in self.test_cases}


# ---------------------------------------------------------------- flows


@dataclass(frozen=True, order=True)
class Flow:
    states: tuple[str, ...]
    events: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.states)


def flows(m: ViewStateMachine, bound: ExplorationBound) -> list[Flow]:
    """Paths from an initial state to a final or connection state, at most ``max_transitions`` long."""
    exits = m.final | m.connection
    out: list[Flow] = []
    starved = []
    for s0 in sorted(m.initial):
        found = 0
        stack = [((s0,), ())]
        while stack:
            states, events = stack.pop()
            if events and states[-1] in exits:
                out.append(Flow(states, events))
                found += 1
            if len(events) >= bound.max_transitions:
                continue
            for t in sorted(m.outgoing.get(states[-1], ()), key=lambda t: (t.event.name, t.target), reverse=True):
                stack.append((states + (t.target,), events + (t.event.name,)))
        if not found:
            starved.append(s0)
    if starved:
        warnings.warn(f"machine {m.id!r}: no flow within bound from {', '.join(starved)}", BoundTooSmall, stacklevel=2)
    return sorted(out)


# ---------------------------------------------------------------- search

COMPLETE, LEAVES, PREFIXES = "complete", "leaves", "prefixes"


class _Search:
    """One depth-first search over a successor function.

    Stack entries are ``(node, trail, counts)`` where ``trail`` is a linked
    list ``(step, parent_trail)`` and ``counts`` the per-device event counts.
    """

    def __init__(self, model, bound, mode, expand, complete, measure=None):
        self.model = model
        self.bound = bound
        self.mode = mode
        self.expand = expand
        self.complete = complete
        self.measure = measure
        self.stats = ExplorationStats()
        self.found: dict[tuple, tuple[tuple, TestCase]] = {}
        self.dev_pos = {d.id: i for i, d in enumerate(model.devices)}

    def _emit(self, trail, complete: bool) -> None:
        steps = []
        while trail is not None:
            steps.append(trail[0])
            trail = trail[1]
        if not steps:
            return
        tc = TestCase(tuple(reversed(steps)), complete)
        key, sk = tc.events, tc.sort_key()
        if not key:
            return
        prev = self.found.get(key)
        if prev is None or sk < prev[0]:
            self.found[key] = (sk, tc)

    def _step(self, choice: StepChoice, src: str, dst: str) -> Step:
        via = choice.via
        return Step(
            choice.device,
            choice.rule,
            choice.event,
            self.model.machine_of(src).id,
            src,
            dst,
            getattr(via, "tid", None),
        )

    def visit(self, node, trail, counts) -> list:
        st = self.stats
        st.expanded += 1
        cap = self.bound.global_cap
        if cap is not None and st.expanded > cap:
            raise ExplorationCapExceeded(cap, st.expanded)
        if self.measure is not None:
            hist, size = self.measure(node)
            st.max_history = max(st.max_history, hist)
            st.state_size = max(st.state_size, size)

        succs = self.expand(node)
        limit = self.bound.max_transitions
        children = []
        cut = False
        for choice, nxt in succs:
            pos = self.dev_pos.get(choice.device, 0)
            if choice.rule is not Rule.R5:
                if counts[pos] >= limit:
                    cut = True
                    continue
                new_counts = counts[:pos] + (counts[pos] + 1,) + counts[pos + 1 :]
            else:
                new_counts = counts
            src, dst = _current_of(node, pos), _current_of(nxt, pos)
            children.append((nxt, (self._step(choice, src, dst), trail), new_counts))

        done = not succs and self.complete(node)
        if cut:
            st.truncated += 1
        elif not succs and not done:
            st.stuck += 1
        if done:
            self._emit(trail, True)
        elif self.mode == PREFIXES or (self.mode == LEAVES and not children):
            self._emit(trail, False)
        return children

    def run(self, entries: Iterable) -> None:
        stack = list(entries)
        stack.reverse()
        while stack:
            node, trail, counts = stack.pop()
            children = self.visit(node, trail, counts)
            stack.extend(reversed(children))
            if len(stack) > self.stats.peak_live:
                self.stats.peak_live = len(stack)


def _current_of(node, pos: int) -> str:
    if isinstance(node, Configuration):
        return node.current
    return node.configs[pos].current


def _merge_found(into: dict, other: dict) -> None:
    for key, (sk, tc) in other.items():
        prev = into.get(key)
        if prev is None or sk < prev[0]:
            into[key] = (sk, tc)


def _multi_search(model: SystemModel, bound: ExplorationBound, policy: ReceivePolicy, mode: str) -> _Search:
    def measure(ms: MultiDeviceState):
        return max((len(c.state_history) for c in ms.configs), default=0), len(encode_state(ms, model))

    return _Search(model, bound, mode, lambda ms: enabled_multi(ms, model, policy), is_complete, measure)


def _run_chunk(model, bound, policy, mode, entries):
    search = _multi_search(model, bound, policy, mode)
    search.run(entries)
    return search.found, search.stats


def _finish(found: dict, stats: ExplorationStats, started: float) -> ExplorationResult:
    cases = [tc for _, tc in sorted(found.values(), key=lambda v: v[0])]
    stats.elapsed = time.perf_counter() - started
    return ExplorationResult(cases, stats)


def explore_device(
    entry: Iterable[Configuration],
    model: SystemModel,
    bound: ExplorationBound,
    device: str | None = None,
) -> ExplorationResult:
    """Bounded flows of one device state machine from the given configurations.

    Complete flows end in a final state that cannot evolve.  With
    ``emit_truncated`` every non-empty bounded prefix is emitted as well,
    which covers flows cut by the bound and flows stuck in a non-final state.
    """
    started = time.perf_counter()
    if device is None:
        device = model.devices[0].id if model.devices else ""
    mode = PREFIXES if bound.emit_truncated else COMPLETE

    def measure(cfg: Configuration):
        return len(cfg.state_history), len(encode_state(MultiDeviceState((cfg,)), model))

    search = _Search(
        model,
        bound,
        mode,
        lambda cfg: enabled_single(cfg, model, device),
        lambda cfg: is_finished(cfg, model),
        measure,
    )
    search.dev_pos = {device: 0}
    search.run((cfg, None, (0,)) for cfg in sorted(set(entry)))
    return _finish(search.found, search.stats, started)


def explore_multi(
    model: SystemModel,
    bound: ExplorationBound,
    policy: ReceivePolicy = ReceivePolicy.STRICT,
    reduce: bool = False,
    jobs: int = 1,
) -> ExplorationResult:
    """Enumerate interleavings of all devices of ``model`` up to the bound.

    A test case is complete when every device finished and, under the
    relaxed policy, every early receive has been paid back by its send.
    With ``require_all_finished`` only complete cases are emitted;
    otherwise maximal incomplete runs are emitted too, and with
    ``emit_truncated`` every non-empty prefix.
    """
    started = time.perf_counter()
    if bound.require_all_finished:
        mode = COMPLETE
    elif bound.emit_truncated:
        mode = PREFIXES
    else:
        mode = LEAVES
    zero = (0,) * len(model.devices)
    roots = [(ms, None, zero) for ms in initial_states(model)]

    if jobs <= 1:
        found, stats = _run_chunk(model, bound, policy, mode, roots)
    else:
        # expand the first level here so workers get disjoint subtrees
        head = _multi_search(model, bound, policy, mode)
        entries = []
        for node, trail, counts in roots:
            entries.extend(head.visit(node, trail, counts))
        found, stats = head.found, head.stats
        chunks = [entries[i::jobs] for i in range(jobs)]
        chunks = [c for c in chunks if c]
        sub_bound = bound
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_chunk, model, sub_bound, policy, mode, c) for c in chunks]
            for fut in futures:
                f, s = fut.result()
                _merge_found(found, f)
                stats.merge(s)
        if bound.global_cap is not None and stats.expanded > bound.global_cap:
            raise ExplorationCapExceeded(bound.global_cap, stats.expanded)

    if reduce:
        indep = IndependenceRelation.from_model(model)
        reduced: dict = {}
        for _, tc in found.values():
            canon = canonicalize(tc, indep)
            _merge_found(reduced, {canon.events: (canon.sort_key(), canon)})
        found = reduced
    return _finish(found, stats, started)


# ---------------------------------------------------------------- replay


def replay(
    model: SystemModel,
    steps: Sequence[Step],
    policy: ReceivePolicy = ReceivePolicy.STRICT,
    auto_return: bool = True,
) -> MultiDeviceState:
    """Re-execute ``steps`` through the semantics and return the final state.

    With ``auto_return`` missing return steps are inserted where a device
    can only take R5, and trailing returns are applied at the end.
    Raises :class:`ReplayError` if no initial state admits the sequence.
    """
    errors = []
    for ms in initial_states(model):
        try:
            return _replay_from(ms, model, steps, policy, auto_return)
        except ReplayError as exc:
            errors.append(str(exc))
    raise ReplayError(errors[0] if errors else "model has no initial state")


def _matches(choice: StepChoice, nxt, step, pos) -> bool:
    if choice.device != step.device:
        return False
    if step.rule is not None and choice.rule is not Rule(step.rule):
        return False
    if step.event is None:
        return choice.rule is Rule.R5
    if choice.event is None or choice.event.name != _event_name(step.event):
        return False
    return not step.target or nxt.configs[pos].current == step.target


def _event_name(event) -> str:
    return event if isinstance(event, str) else event.name


def _forced_return(ms, model, policy, device):
    for choice, nxt in enabled_multi(ms, model, policy):
        if choice.device == device and choice.rule is Rule.R5:
            return nxt
    return None


def _replay_from(ms, model, steps, policy, auto_return):
    pos_of = {d.id: i for i, d in enumerate(model.devices)}
    for n, step in enumerate(steps):
        if step.device not in pos_of:
            raise ReplayError(f"step {n}: unknown device {step.device!r}")
        pos = pos_of[step.device]
        while True:
            nxt = next((s for c, s in enabled_multi(ms, model, policy) if _matches(c, s, step, pos)), None)
            if nxt is not None:
                ms = nxt
                break
            forced = _forced_return(ms, model, policy, step.device) if auto_return else None
            if forced is None:
                label = _event_name(step.event) if step.event is not None else "<return>"
                raise ReplayError(f"step {n}: {label!r} on {step.device!r} is not enabled")
            ms = forced
    if auto_return:
        progressed = True
        while progressed:
            progressed = False
            for d in model.devices:
                forced = _forced_return(ms, model, policy, d.id)
                if forced is not None:
                    ms, progressed = forced, True
    return ms
