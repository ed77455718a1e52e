"""Model-based test-case generation from composed view state machines."""

from .explorer import ExplorationBound, explore_device, explore_multi, flows, replay
from .model import (
    CallEventAttributes,
    ChannelBinding,
    ConnectionEdge,
    Device,
    EventKind,
    EventLabel,
    SystemModel,
    Transition,
    ViewStateMachine,
    validate_system,
    validate_view_machine,
)
from .semantics import Configuration, MultiDeviceState, ReceivePolicy, Rule, enabled_multi, enabled_single
from .trace import Step, TestCase

__version__ = "0.1.0"
