import random

import pytest

from droidmbt import ExplorationBound, ReceivePolicy, explore_multi
from droidmbt.model import ChannelBinding, EventKind, EventLabel
from droidmbt.por import IndependenceRelation, canonicalize
from droidmbt.semantics import Rule
from droidmbt.trace import Step, TestCase
from oracle import random_model, swap_closure


def step(device, name, kind=EventKind.USER):
    return Step(device, Rule.R1, EventLabel(name, kind), "M", "s", "t")


INDEP = IndependenceRelation(["dev1", "dev2"], [ChannelBinding("x+", "x-", "dev1", "dev2")])


def test_independent_steps_are_reordered():
    tc = TestCase((step("dev2", "b"), step("dev1", "a")))
    assert canonicalize(tc, INDEP).events == (("dev1", "a"), ("dev2", "b"))


def test_matched_pair_is_never_swapped():
    tc = TestCase((step("dev1", "x+"), step("dev2", "x-", EventKind.SYSTEM)))
    assert canonicalize(tc, INDEP) == tc
    early = TestCase((step("dev2", "x-", EventKind.SYSTEM), step("dev1", "x+")))
    assert canonicalize(early, INDEP) == early


def test_empty_trace():
    assert canonicalize(TestCase(()), INDEP) == TestCase(())


def test_unmatched_instances_of_a_channel_commute():
    # the second send is unrelated to the first receive, so it moves ahead of it
    tc = TestCase((
        step("dev1", "x+"), step("dev2", "x-", EventKind.SYSTEM),
        step("dev2", "y"), step("dev1", "x+"),
    ))
    canon = canonicalize(tc, INDEP)
    assert canon.events == (("dev1", "x+"), ("dev1", "x+"), ("dev2", "x-"), ("dev2", "y"))


def test_relation_is_symmetric_and_irreflexive():
    steps = [step("dev1", "x+"), step("dev2", "x-", EventKind.SYSTEM), step("dev2", "b"), step("dev1", "a")]
    ann = INDEP.annotate(steps)
    for a in ann:
        assert not INDEP.independent(a, a)
        for b in ann:
            assert INDEP.independent(a, b) == INDEP.independent(b, a)
    assert not INDEP.independent(ann[0], ann[1])


def brute_force_least(tc, model):
    order = {d.id: i for i, d in enumerate(model.devices)}
    cls = swap_closure([tc.events], model)

    def key(seq):
        seen = {}
        out = []
        for dev, _ in seq:
            out.append((order[dev], seen.get(dev, 0)))
            seen[dev] = seen.get(dev, 0) + 1
        return out

    return min(cls, key=key)


@pytest.mark.parametrize("seed", range(30))
def test_reduction_is_sound_on_random_models(seed):
    rng = random.Random(5000 + seed)
    model = random_model(rng)
    bound = rng.randint(1, 4)
    policy = ReceivePolicy.RELAXED if rng.random() < 0.5 else ReceivePolicy.STRICT
    full = explore_multi(model, ExplorationBound(bound), policy)
    reduced = explore_multi(model, ExplorationBound(bound), policy, reduce=True)
    assert len(reduced) <= len(full)
    assert swap_closure(reduced.event_sequences, model) == full.event_sequences
    indep = IndependenceRelation.from_model(model)
    for tc in reduced:
        assert canonicalize(tc, indep) == tc
        assert tc.events == brute_force_least(tc, model)
