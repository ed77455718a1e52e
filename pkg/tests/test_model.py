import warnings

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from droidmbt.model import (
    CallEventAttributes,
    ChannelBinding,
    ConnectionEdge,
    Device,
    EventKind,
    EventLabel,
    NoExitWarning,
    SystemModel,
    Transition,
    ViewStateMachine,
    model_digest,
    validate_system,
    validate_view_machine,
)


def ev(name, kind=EventKind.USER):
    return EventLabel(name, kind)


def kinds(violations):
    return [v.kind for v in violations]


def minimal():
    return ViewStateMachine("M", {"i", "f"}, {"i"}, (), {"f"}, [Transition("i", ev("a"), "f")])


def test_minimal_machine_is_legal():
    assert validate_view_machine(minimal()) == []


def test_determinism_violation_names_source_and_event():
    m = ViewStateMachine(
        "M", {"s", "s1", "s2", "f"}, {"s"}, (), {"f"},
        [Transition("s", ev("e"), "s1"), Transition("s", ev("e"), "s2"), Transition("s1", ev("x"), "f")],
    )
    out = validate_view_machine(m)
    assert kinds(out) == ["DeterminismViolation"]
    assert out[0].subject == ("s", "e")


def test_same_event_same_target_is_not_a_violation():
    m = ViewStateMachine("M", {"s", "f"}, {"s"}, (), {"f"}, [Transition("s", ev("e"), "f")] * 2)
    assert validate_view_machine(m) == []


def test_disjointness_violation():
    m = ViewStateMachine("M", {"x", "f"}, {"x"}, (), {"x", "f"}, [])
    assert kinds(validate_view_machine(m)) == ["DisjointnessViolation"]


def test_each_defect_kind_is_reported():
    cases = {
        "EmptyInitial": ViewStateMachine("M", {"f"}, set(), (), {"f"}),
        "FinalOutgoing": ViewStateMachine("M", {"i", "f"}, {"i"}, (), {"f"}, [Transition("f", ev("a"), "i")]),
        "UnknownState": ViewStateMachine("M", {"i", "f"}, {"i"}, (), {"f"}, [Transition("i", ev("a"), "z")]),
        "MissingReturn": ViewStateMachine("M", {"i", "c", "f"}, {"i"}, {"c"}, {"f"}),
        "ReturnNotConnection": ViewStateMachine("M", {"i", "f"}, {"i"}, (), {"f"}, return_of={"i": "f"}),
        "CallEventInMachine": ViewStateMachine("M", {"i", "f"}, {"i"}, (), {"f"}, [Transition("i", ev("k", EventKind.CALL), "f")]),
        "EventNameConflict": ViewStateMachine(
            "M", {"i", "s", "f"}, {"i"}, (), {"f"},
            [Transition("i", ev("a"), "s"), Transition("s", ev("a", EventKind.SYSTEM), "f")],
        ),
    }
    for kind, m in cases.items():
        assert kinds(validate_view_machine(m)) == [kind], kind


def test_machine_without_exit_warns_but_is_not_rejected():
    m = ViewStateMachine("M", {"i", "s"}, {"i"}, (), (), [Transition("i", ev("a"), "s")])
    with pytest.warns(NoExitWarning):
        assert validate_view_machine(m) == []


def test_validation_is_pure():
    m = ViewStateMachine("M", {"x", "f"}, {"x"}, (), {"x", "f"}, [Transition("f", ev("a"), "x")])
    assert validate_view_machine(m) == validate_view_machine(m)


# ---------------------------------------------------------------- system


def two_machines(target="j0", attrs=True):
    caller = ViewStateMachine("A", {"a0", "c", "af"}, {"a0"}, {"c"}, {"af"}, [Transition("a0", ev("go"), "c")], {"c": "af"})
    callee = ViewStateMachine("B", {"j0", "j1"}, {"j0"}, (), {"j1"}, [Transition("j0", ev("done"), "j1")])
    call = EventLabel("open", EventKind.CALL)
    edge = ConnectionEdge("c", call, target, "A", "B")
    return SystemModel(
        (caller, callee),
        (edge,),
        {"open": CallEventAttributes("open")} if attrs else {},
        (Device("d", ("A",)),),
    )


def test_well_formed_system():
    assert validate_system(two_machines()) == []


def test_connection_to_non_initial_state():
    assert kinds(validate_system(two_machines(target="j1"))) == ["ConnectionTargetViolation"]


def test_missing_call_attributes():
    assert kinds(validate_system(two_machines(attrs=False))) == ["MissingCallAttributes"]


def test_missing_attributes_default_to_push_and_return():
    a = two_machines(attrs=False).attrs_of("open")
    assert (a.reuse, a.auto_return) == (False, True)


def test_self_call_is_allowed():
    m = ViewStateMachine("A", {"a0", "c", "af"}, {"a0"}, {"c"}, {"af"}, [Transition("a0", ev("go"), "c")], {"c": "af"})
    model = SystemModel(
        (m,), (ConnectionEdge("c", EventLabel("again", EventKind.CALL), "a0", "A", "A"),),
        {"again": CallEventAttributes("again")}, (Device("d", ("A",)),),
    )
    assert validate_system(model) == []


def test_channel_binding_checks():
    send = ViewStateMachine("S", {"s0", "sf"}, {"s0"}, (), {"sf"}, [Transition("s0", ev("x"), "sf")])
    recv = ViewStateMachine("R", {"r0", "rf"}, {"r0"}, (), {"rf"}, [Transition("r0", ev("y", EventKind.SYSTEM), "rf")])
    devices = (Device("A", ("S",)), Device("B", ("R",)))
    ok = SystemModel((send, recv), devices=devices, channels=(ChannelBinding("x", "y", "A", "B"),))
    assert validate_system(ok) == []
    same = SystemModel((send, recv), devices=devices, channels=(ChannelBinding("x", "y", "A", "A"),))
    assert kinds(validate_system(same)) == ["ChannelBinding"]
    wrong_kind = SystemModel((send, recv), devices=devices, channels=(ChannelBinding("y", "x", "A", "B"),))
    assert set(kinds(validate_system(wrong_kind))) == {"ChannelBinding"}


def test_fixture_validates(facebook):
    assert validate_system(facebook) == []
    assert {m.view for m in facebook.machines} == {"HomeView", "CommentView", "MovieView"}


def test_digest_is_stable_and_sensitive():
    assert model_digest(two_machines()) == model_digest(two_machines())
    assert model_digest(two_machines()) != model_digest(two_machines(target="j1"))


# ---------------------------------------------------------------- mutation property

BASE_STATES = ["i", "s1", "s2", "c", "f"]


def legal_machine():
    return ViewStateMachine(
        "M", set(BASE_STATES), {"i"}, {"c"}, {"f"},
        [
            Transition("i", ev("a"), "s1"),
            Transition("s1", ev("b"), "s2"),
            Transition("s2", ev("a"), "c"),
            Transition("s1", ev("z"), "f"),
        ],
        {"c": "s1"},
    )


def mutate(m: ViewStateMachine, defect: str, pick: int) -> ViewStateMachine:
    fields = dict(
        id=m.id, states=set(m.states), initial=set(m.initial), connection=set(m.connection),
        final=set(m.final), transitions=list(m.transitions), return_of=dict(m.return_of),
    )
    non_final = ["i", "s1", "s2", "c"]
    if defect == "DeterminismViolation":
        t = m.transitions[pick % len(m.transitions)]
        other = next(s for s in BASE_STATES if s != t.target)
        fields["transitions"].append(Transition(t.source, t.event, other))
    elif defect == "DisjointnessViolation":
        if pick % 2:
            fields["initial"].add("c")
        else:
            fields["states"].add("x")
            fields["initial"].add("x")
            fields["final"].add("x")
    elif defect == "FinalOutgoing":
        fields["transitions"].append(Transition("f", ev("q"), BASE_STATES[pick % 5]))
    elif defect == "MissingReturn":
        fields["return_of"] = {}
    elif defect == "UnknownState":
        src = non_final[pick % 4]
        fields["transitions"].append(Transition(src, ev("q"), "ghost"))
    elif defect == "EmptyInitial":
        fields["initial"] = set()
    elif defect == "CallEventInMachine":
        fields["transitions"].append(Transition(non_final[pick % 4], ev("k", EventKind.CALL), "f"))
    return ViewStateMachine(**fields)


DEFECTS = [
    "DeterminismViolation", "DisjointnessViolation", "FinalOutgoing", "MissingReturn",
    "UnknownState", "EmptyInitial", "CallEventInMachine",
]


@settings(max_examples=150, deadline=None)
@given(st.sampled_from(DEFECTS), st.integers(0, 20))
def test_single_defect_yields_exactly_its_kind(defect, pick):
    assert validate_view_machine(legal_machine()) == []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NoExitWarning)
        out = validate_view_machine(mutate(legal_machine(), defect, pick))
    assert set(kinds(out)) == {defect}
