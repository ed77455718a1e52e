"""Generated test cases: tagged step sequences with device attribution."""

from __future__ import annotations

from dataclasses import dataclass

from .model import EventKind, EventLabel
from .semantics import Rule


@dataclass(frozen=True)
class Step:
    device: str
    rule: Rule
    event: EventLabel | None
    machine: str
    source: str
    target: str
    tid: str | None = None

    @property
    def is_return(self) -> bool:
        return self.rule is Rule.R5

    @property
    def kind(self) -> EventKind | None:
        return self.event.kind if self.event is not None else None

    def sort_key(self) -> tuple:
        return (self.device, self.event.name if self.event else "", self.rule.value, self.source, self.target)


@dataclass(frozen=True)
class TestCase:
    """One generated test case.

    ``steps`` keeps return markers (rule R5, no event) so emitters can
    surface them; :attr:`events` drops them and is the identity used for
    deduplication.
    """

    __test__ = False  # not a pytest class

    steps: tuple[Step, ...]
    complete: bool = True

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))

    @property
    def events(self) -> tuple[tuple[str, str], ...]:
        return tuple((s.device, s.event.name) for s in self.steps if s.event is not None)

    @property
    def event_names(self) -> tuple[str, ...]:
        return tuple(name for _, name in self.events)

    def per_device_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for s in self.steps:
            if s.event is not None:
                counts[s.device] = counts.get(s.device, 0) + 1
        return counts

    def sort_key(self) -> tuple:
        return (self.events, not self.complete, tuple(s.sort_key() for s in self.steps))

    def __len__(self) -> int:
        return len(self.events)
