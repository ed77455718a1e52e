"""Reading and writing application models and control definition files.

The model dialect is the ``Application/Views/View/StateMachines`` XML used
by the modelling tool; a JSON mirror with the same field names is accepted
too.  Control files are UIAutomatorViewer ``node`` hierarchies annotated
with a ``controlGroup`` (or ``testGroup``) attribute.
"""

from __future__ import annotations

import json
import xml.etree.ElementTree as ET
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping
from xml.parsers import expat

from .model import (
    CallEventAttributes,
    ChannelBinding,
    ConnectionEdge,
    ControlBinding,
    Device,
    EventKind,
    EventLabel,
    SystemModel,
    Transition,
    ViewStateMachine,
)

TRANSITION_TYPES = ("Simple", "View", "StateMachine")
ACTIONS = ("click", "swipe", "setText", "waitEvent", "back")
TRUE = ("true", "1", "yes")


class ModelError(Exception):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


class SchemaError(ModelError):
    pass


class DanglingReference(ModelError):
    pass


class BindError(ModelError):
    pass


class ConfigError(ModelError):
    pass


class NotSupported(ModelError):
    pass


# ---------------------------------------------------------------- document


@dataclass
class TransitionElem:
    id: str
    event: str
    prev: str
    next: str
    through: str | None = None
    type: str = "Simple"
    attrs: dict[str, str] = field(default_factory=dict)
    line: int | None = field(default=None, compare=False, repr=False)


@dataclass
class StateMachineElem:
    name: str
    states: list[str] = field(default_factory=list)
    transitions: list[TransitionElem] = field(default_factory=list)
    attrs: dict[str, str] = field(default_factory=dict)
    line: int | None = field(default=None, compare=False, repr=False)


@dataclass
class ViewElem:
    name: str
    controls_file: str | None = None
    state_machines: list[StateMachineElem] = field(default_factory=list)
    attrs: dict[str, str] = field(default_factory=dict)
    line: int | None = field(default=None, compare=False, repr=False)


@dataclass
class ApplicationElem:
    name: str
    package: str | None = None
    views: list[ViewElem] = field(default_factory=list)
    attrs: dict[str, str] = field(default_factory=dict)


@dataclass
class DeviceElem:
    id: str
    apps: list[str] = field(default_factory=list)


@dataclass
class ChannelElem:
    name: str
    sender: str | None = None
    receiver: str | None = None


@dataclass
class ModelDocument:
    applications: list[ApplicationElem] = field(default_factory=list)
    devices: list[DeviceElem] = field(default_factory=list)
    channels: list[ChannelElem] = field(default_factory=list)

    def views(self) -> Iterator[tuple[ApplicationElem, ViewElem]]:
        for app in self.applications:
            for view in app.views:
                yield app, view

    def machines(self) -> Iterator[tuple[ApplicationElem, ViewElem, StateMachineElem]]:
        for app, view in self.views():
            for sm in view.state_machines:
                yield app, view, sm

    def transitions(self) -> Iterator[TransitionElem]:
        for _, _, sm in self.machines():
            yield from sm.transitions


def _parse_xml(text: str | bytes) -> tuple[ET.Element, dict[int, int]]:
    """ElementTree parse that also records the source line of every element."""
    parser = expat.ParserCreate()
    lines: dict[int, int] = {}
    stack: list[ET.Element] = []
    root: list[ET.Element] = []

    def start(tag, attrs):
        el = ET.Element(tag, attrs)
        lines[id(el)] = parser.CurrentLineNumber
        if stack:
            stack[-1].append(el)
        else:
            root.append(el)
        stack.append(el)

    def end(tag):
        stack.pop()

    parser.StartElementHandler = start
    parser.EndElementHandler = end
    try:
        parser.Parse(text, True)
    except expat.ExpatError as exc:
        raise SchemaError(f"malformed XML: {expat.errors.messages[exc.code]}", exc.lineno) from None
    if not root:
        raise SchemaError("empty document")
    return root[0], lines


def _req(el: ET.Element, name: str, lines, what: str) -> str:
    value = el.get(name)
    if value is None:
        raise SchemaError(f"<{el.tag}> {what}: missing required attribute {name!r}", lines.get(id(el)))
    return value


def _extra(el: ET.Element, known: tuple[str, ...]) -> dict[str, str]:
    return {k: v for k, v in el.attrib.items() if k not in known}


def parse_model(text: str | bytes, resolve: bool = True) -> ModelDocument:
    """Parse the XML model dialect and check it for schema and reference errors.

    ``resolve=False`` skips the ``through`` lookup so a single application
    excerpt can be read on its own.
    """
    root, lines = _parse_xml(text)
    doc = ModelDocument()
    if root.tag == "Application":
        apps = [root]
    elif root.tag == "Model":
        apps = root.findall("Application")
    else:
        raise SchemaError(f"unexpected root element <{root.tag}>", lines.get(id(root)))

    for a in apps:
        app = ApplicationElem(_req(a, "name", lines, "application"), a.get("package"), attrs=_extra(a, ("name", "package")))
        for v in a.findall("Views/View"):
            view = ViewElem(
                _req(v, "name", lines, "view"),
                v.get("controlsFile"),
                attrs=_extra(v, ("name", "controlsFile")),
                line=lines.get(id(v)),
            )
            for s in v.findall("StateMachines/StateMachine"):
                sm = StateMachineElem(_req(s, "name", lines, "state machine"), attrs=_extra(s, ("name",)), line=lines.get(id(s)))
                sm.states = [_req(st, "name", lines, f"state of {sm.name}") for st in s.findall("States/State")]
                for t in s.findall("Transitions/Transition"):
                    where = f"transition in {sm.name}"
                    sm.transitions.append(
                        TransitionElem(
                            _req(t, "ID", lines, where),
                            _req(t, "event", lines, where),
                            _req(t, "prev", lines, where),
                            _req(t, "next", lines, where),
                            t.get("through"),
                            t.get("type", "Simple"),
                            _extra(t, ("ID", "event", "prev", "next", "through", "type")),
                            lines.get(id(t)),
                        )
                    )
                view.state_machines.append(sm)
            app.views.append(view)
        doc.applications.append(app)

    for d in root.findall("Devices/Device"):
        doc.devices.append(DeviceElem(_req(d, "id", lines, "device"), d.get("apps", "").split()))
    for c in root.findall("Channels/Channel"):
        doc.channels.append(ChannelElem(_req(c, "name", lines, "channel"), c.get("sender"), c.get("receiver")))
    check_document(doc, resolve)
    return doc


def check_document(doc: ModelDocument, resolve: bool = True) -> None:
    """Schema-level checks shared by the XML and JSON readers."""
    view_names = defaultdict(list)
    machine_names = defaultdict(list)
    for app, view in doc.views():
        view_names[view.name].append(app.name)
    for app, view, sm in doc.machines():
        machine_names[sm.name].append(app.name)

    for app, view in doc.views():
        ids: set[str] = set()
        for sm in view.state_machines:
            declared = set(sm.states)
            for t in sm.transitions:
                if t.id in ids:
                    raise SchemaError(f"duplicate transition ID {t.id!r} in view {view.name!r}", t.line)
                ids.add(t.id)
                if t.type not in TRANSITION_TYPES:
                    raise SchemaError(f"transition {t.id}: unknown type {t.type!r}", t.line)
                if t.type == "Simple" and t.through:
                    raise SchemaError(f"transition {t.id}: Simple transitions take no 'through'", t.line)
                if t.type != "Simple":
                    if not t.through:
                        raise SchemaError(f"transition {t.id}: type {t.type} needs 'through'", t.line)
                    pool = view_names if t.type == "View" else machine_names
                    if resolve and t.through not in pool:
                        raise DanglingReference(f"transition {t.id}: no {t.type} named {t.through!r}", t.line)
                for end in (t.prev, t.next):
                    if end and end not in declared:
                        raise DanglingReference(f"transition {t.id}: unknown state {end!r} in {sm.name!r}", t.line)
                kind = t.attrs.get("kind", "user")
                if kind not in ("user", "system"):
                    raise SchemaError(f"transition {t.id}: kind must be user or system, not {kind!r}", t.line)


def serialize_model(doc: ModelDocument) -> str:
    root = ET.Element("Model")
    for app in doc.applications:
        a = ET.SubElement(root, "Application", _attrs(("name", app.name), ("package", app.package)) | app.attrs)
        views = ET.SubElement(a, "Views")
        for view in app.views:
            v = ET.SubElement(views, "View", _attrs(("name", view.name), ("controlsFile", view.controls_file)) | view.attrs)
            sms = ET.SubElement(v, "StateMachines")
            for sm in view.state_machines:
                s = ET.SubElement(sms, "StateMachine", {"name": sm.name} | sm.attrs)
                states = ET.SubElement(s, "States")
                for st in sm.states:
                    ET.SubElement(states, "State", {"name": st})
                ts = ET.SubElement(s, "Transitions")
                for t in sm.transitions:
                    base = _attrs(("ID", t.id), ("event", t.event), ("prev", t.prev), ("next", t.next), ("through", t.through), ("type", t.type))
                    ET.SubElement(ts, "Transition", base | t.attrs)
    if doc.devices:
        devs = ET.SubElement(root, "Devices")
        for d in doc.devices:
            ET.SubElement(devs, "Device", {"id": d.id, "apps": " ".join(d.apps)})
    if doc.channels:
        chs = ET.SubElement(root, "Channels")
        for c in doc.channels:
            ET.SubElement(chs, "Channel", _attrs(("name", c.name), ("sender", c.sender), ("receiver", c.receiver)))
    ET.indent(root, space="  ")
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(root, encoding="unicode") + "\n"


def _attrs(*pairs) -> dict[str, str]:
    return {k: v for k, v in pairs if v is not None}


# ---------------------------------------------------------------- JSON mirror


def parse_model_json(text: str | bytes) -> ModelDocument:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"malformed JSON: {exc.msg}", exc.lineno) from None

    def req(obj, key, what):
        if not isinstance(obj, dict) or key not in obj:
            raise SchemaError(f"{what}: missing required field {key!r}")
        return str(obj[key])

    def extra(obj, known):
        return {k: str(v) for k, v in obj.items() if k not in known}

    doc = ModelDocument()
    for a in raw.get("applications", []):
        app = ApplicationElem(req(a, "name", "application"), a.get("package"), attrs=extra(a, ("name", "package", "views")))
        for v in a.get("views", []):
            view = ViewElem(req(v, "name", "view"), v.get("controlsFile"), attrs=extra(v, ("name", "controlsFile", "stateMachines")))
            for s in v.get("stateMachines", []):
                sm = StateMachineElem(req(s, "name", "state machine"), [str(x) for x in s.get("states", [])], attrs=extra(s, ("name", "states", "transitions")))
                for t in s.get("transitions", []):
                    where = f"transition in {sm.name}"
                    sm.transitions.append(
                        TransitionElem(
                            req(t, "ID", where),
                            req(t, "event", where),
                            req(t, "prev", where),
                            req(t, "next", where),
                            t.get("through"),
                            t.get("type", "Simple"),
                            extra(t, ("ID", "event", "prev", "next", "through", "type")),
                        )
                    )
                view.state_machines.append(sm)
            app.views.append(view)
        doc.applications.append(app)
    for d in raw.get("devices", []):
        doc.devices.append(DeviceElem(req(d, "id", "device"), [str(x) for x in d.get("apps", [])]))
    for c in raw.get("channels", []):
        doc.channels.append(ChannelElem(req(c, "name", "channel"), c.get("sender"), c.get("receiver")))
    check_document(doc)
    return doc


def serialize_model_json(doc: ModelDocument) -> str:
    def drop_none(d):
        return {k: v for k, v in d.items() if v is not None}

    out = {
        "applications": [
            drop_none({"name": app.name, "package": app.package, **app.attrs, "views": [
                drop_none({"name": v.name, "controlsFile": v.controls_file, **v.attrs, "stateMachines": [
                    {"name": sm.name, **sm.attrs, "states": list(sm.states), "transitions": [
                        drop_none({"ID": t.id, "event": t.event, "prev": t.prev, "next": t.next, "through": t.through, "type": t.type, **t.attrs})
                        for t in sm.transitions
                    ]}
                    for sm in v.state_machines
                ]})
                for v in app.views
            ]})
            for app in doc.applications
        ],
        "devices": [{"id": d.id, "apps": list(d.apps)} for d in doc.devices],
        "channels": [drop_none({"name": c.name, "sender": c.sender, "receiver": c.receiver}) for c in doc.channels],
    }
    return json.dumps(out, indent=2) + "\n"


def load_model(path: str | Path) -> ModelDocument:
    path = Path(path)
    data = path.read_bytes()
    if path.suffix.lower() == ".json":
        return parse_model_json(data)
    return parse_model(data)


# ---------------------------------------------------------------- controls


@dataclass
class ControlNode:
    group: str | None = None
    class_name: str = ""
    index: int = 0
    text: str = ""
    resource_id: str = ""
    clickable: bool = False
    long_clickable: bool = False
    scrollable: bool = False
    is_fixed_value: str = ""
    pattern_or_value: str = ""
    children: list["ControlNode"] = field(default_factory=list)

    def walk(self) -> Iterator["ControlNode"]:
        yield self
        for c in self.children:
            yield from c.walk()


@dataclass
class ControlDefinition:
    nodes: list[ControlNode] = field(default_factory=list)

    def walk(self) -> Iterator[ControlNode]:
        for n in self.nodes:
            yield from n.walk()

    def find_group(self, group: str) -> ControlNode | None:
        return next((n for n in self.walk() if n.group == group), None)

    @property
    def groups(self) -> list[str]:
        return [n.group for n in self.walk() if n.group]


def parse_controls(text: str | bytes) -> ControlDefinition:
    root, lines = _parse_xml(text)

    def node(el: ET.Element) -> ControlNode:
        if el.tag != "node":
            raise SchemaError(f"unexpected <{el.tag}> inside control hierarchy", lines.get(id(el)))
        try:
            index = int(el.get("index", "0") or 0)
        except ValueError:
            raise SchemaError(f"non-integer index {el.get('index')!r}", lines.get(id(el))) from None
        group = el.get("controlGroup") or el.get("testGroup") or None
        return ControlNode(
            group=group,
            class_name=el.get("class", ""),
            index=index,
            text=el.get("text", ""),
            resource_id=el.get("resource-id", ""),
            clickable=el.get("clickable", "false").lower() in TRUE,
            long_clickable=el.get("long-clickable", "false").lower() in TRUE,
            scrollable=el.get("scrollable", "false").lower() in TRUE,
            is_fixed_value=el.get("IsFixedValue", ""),
            pattern_or_value=el.get("PatternOrValue", ""),
            children=[node(c) for c in el],
        )

    if root.tag == "hierarchy":
        return ControlDefinition([node(c) for c in root])
    return ControlDefinition([node(root)])


def load_controls(doc: ModelDocument, controls_dir: str | Path) -> dict[str, ControlDefinition]:
    """Read each view's ``controlsFile`` from ``controls_dir``; views without one are skipped."""
    out = {}
    base = Path(controls_dir)
    for _, view in doc.views():
        if view.controls_file:
            out[view.name] = parse_controls((base / view.controls_file).read_bytes())
    return out


# ---------------------------------------------------------------- lowering


def machine_id(app: str, view: str, machine: str) -> str:
    return f"{app}/{view}/{machine}"


def _bool_attr(t: TransitionElem, name: str, default: bool) -> bool:
    raw = t.attrs.get(name)
    if raw is None:
        return default
    if raw.lower() not in ("true", "false"):
        raise SchemaError(f"transition {t.id}: {name} must be true or false", t.line)
    return raw.lower() == "true"


def _infer_action(node: ControlNode) -> str:
    if node.pattern_or_value and node.is_fixed_value.lower() in TRUE:
        return "setText"
    if node.clickable:
        return "click"
    if node.scrollable:
        return "swipe"
    return "click"


def _bind(t: TransitionElem, label: EventLabel, controls: ControlDefinition | None, view: str) -> ControlBinding:
    action = t.attrs.get("action")
    if action is None and label.kind is EventKind.SYSTEM:
        action = "waitEvent"
    if action is not None and action not in ACTIONS:
        raise BindError(f"transition {t.id}: unknown action {action!r}", t.line)
    if action in ("waitEvent", "back"):
        return ControlBinding(t.attrs.get("controlGroup"), action)
    group = t.attrs.get("controlGroup") or t.event
    node = controls.find_group(group) if controls is not None else None
    if node is None:
        raise BindError(f"transition {t.id} ({t.event}): no control group {group!r} in view {view!r}", t.line)
    action = action or _infer_action(node)
    if action == "click" and not node.clickable:
        raise BindError(f"transition {t.id}: control group {group!r} is not clickable", t.line)
    parameter = None
    if node.pattern_or_value:
        if node.is_fixed_value.lower() in TRUE:
            parameter = node.pattern_or_value
        elif action == "setText":
            raise NotSupported(f"transition {t.id}: pattern-generated values are not supported ({node.pattern_or_value!r})", t.line)
    if action == "setText" and parameter is None:
        raise BindError(f"transition {t.id}: control group {group!r} has no fixed value to enter", t.line)
    return ControlBinding(group, action, parameter, node.class_name, node.index, node.text)


def build_system_model(
    doc: ModelDocument,
    controls: Mapping[str, ControlDefinition] | None = None,
    device_assignments: Mapping[str, list[str]] | None = None,
    channels: list[ChannelBinding] | None = None,
    call_attrs: Mapping[str, CallEventAttributes] | None = None,
) -> SystemModel:
    """Lower a parsed document to a :class:`SystemModel`.

    Simple transitions become in-machine transitions; View and StateMachine
    transitions become connection edges labelled ``event#through`` whose
    caller resumes at ``next``.  ``prev=""`` and ``next=""`` map to fresh
    ``<init>`` and ``<end>`` states.  When ``controls`` is given every
    event is bound to a control group.
    """
    views = {}
    machines_by_name = defaultdict(list)
    for app, view in doc.views():
        views.setdefault(view.name, (app, view))
    for app, view, sm in doc.machines():
        machines_by_name[sm.name].append(machine_id(app.name, view.name, sm.name))

    def entry_of_view(name: str) -> str | None:
        app, view = views[name]
        return machine_id(app.name, view.name, view.state_machines[0].name) if view.state_machines else None

    machines: list[ViewStateMachine] = []
    edges: list[ConnectionEdge] = []
    attrs: dict[str, CallEventAttributes] = {}
    bindings: dict[tuple[str, str], ControlBinding] = {}
    channel_events: dict[str, dict[str, set[tuple[str, str]]]] = defaultdict(lambda: {"send": set(), "recv": set()})

    for app, view, sm in doc.machines():
        mid = machine_id(app.name, view.name, sm.name)
        init, end = f"{mid}/<init>", f"{mid}/<end>"

        def st(name: str, fresh: str) -> str:
            return f"{mid}/{name}" if name else fresh

        states = {f"{mid}/{s}" for s in sm.states}
        initial, final, connection = set(), set(), set()
        trans: list[Transition] = []
        returns: dict[str, str] = {}
        for t in sm.transitions:
            src, dst = st(t.prev, init), st(t.next, end)
            states |= {src, dst}
            if not t.prev:
                initial.add(src)
            if not t.next:
                final.add(dst)
            if t.type == "Simple":
                kind = EventKind(t.attrs.get("kind", "user"))
                label = EventLabel(t.event, kind)
                trans.append(Transition(src, label, dst, t.id))
                if "channel" in t.attrs:
                    side = "send" if kind is EventKind.USER else "recv"
                    channel_events[t.attrs["channel"]][side].add((mid, t.event))
            else:
                callee = entry_of_view(t.through) if t.type == "View" else machines_by_name[t.through][0]
                if callee is None:
                    raise DanglingReference(f"transition {t.id}: view {t.through!r} has no state machine", t.line)
                label = EventLabel(f"{t.event}#{t.through}", EventKind.CALL)
                edges.append(ConnectionEdge(src, label, f"{callee}/<init>", mid, callee, t.id))
                connection.add(src)
                if returns.setdefault(src, dst) != dst:
                    raise SchemaError(f"transition {t.id}: state {t.prev!r} already returns to another state", t.line)
                record = CallEventAttributes(label.name, _bool_attr(t, "reuse", False), _bool_attr(t, "autoReturn", True))
                if attrs.setdefault(label.name, record) != record:
                    raise SchemaError(f"transition {t.id}: conflicting reuse/autoReturn for {label.name!r}", t.line)
            if controls is not None:
                key = (mid, label.name)
                b = _bind(t, label, controls.get(view.name), view.name)
                if bindings.setdefault(key, b) != b:
                    raise BindError(f"transition {t.id}: event {t.event!r} bound to two different controls", t.line)
        machines.append(ViewStateMachine(mid, states, initial, connection, final, trans, returns, app.name, view.name))

    if call_attrs:
        attrs.update(call_attrs)

    apps = {app.name: app for app in doc.applications}
    if device_assignments is None:
        device_assignments = {d.id: d.apps for d in doc.devices} or {"device0": list(apps)}
    devices = []
    for dev, names in device_assignments.items():
        if not names:
            raise ConfigError(f"device {dev!r} has no assigned application")
        entry = []
        for name in names:
            if name not in apps:
                raise ConfigError(f"device {dev!r}: unknown application {name!r}")
            app = apps[name]
            if not app.views or not app.views[0].state_machines:
                raise ConfigError(f"application {name!r} has no entry state machine")
            entry.append(machine_id(app.name, app.views[0].name, app.views[0].state_machines[0].name))
        devices.append(Device(dev, tuple(entry)))

    model = SystemModel(machines, edges, attrs, devices, (), bindings)
    if channels is None:
        channels = _lower_channels(doc, model, channel_events)
    return SystemModel(machines, edges, attrs, devices, channels, bindings)


def _reachable_devices(model: SystemModel, machine: str) -> list[str]:
    out = []
    for d in model.devices:
        seen, todo = set(d.entry), list(d.entry)
        while todo:
            m = todo.pop()
            for e in model.connection:
                if e.source_machine == m and e.target_machine not in seen:
                    seen.add(e.target_machine)
                    todo.append(e.target_machine)
        if machine in seen:
            out.append(d.id)
    return out


def _lower_channels(doc: ModelDocument, model: SystemModel, events) -> list[ChannelBinding]:
    declared = {c.name: c for c in doc.channels}
    out = []
    for name in sorted(set(events) | set(declared)):
        sides = events.get(name, {"send": set(), "recv": set()})
        sends = {e for _, e in sides["send"]}
        recvs = {e for _, e in sides["recv"]}
        if len(sends) != 1 or len(recvs) != 1:
            raise ConfigError(f"channel {name!r} needs exactly one send (user) and one receive (system) event")
        decl = declared.get(name)

        def device_for(side: str, given: str | None) -> str:
            if given:
                return given
            found = sorted({d for mid, _ in sides[side] for d in _reachable_devices(model, mid)})
            if len(found) != 1:
                raise ConfigError(f"channel {name!r}: cannot infer the {side} device, declare it in <Channels>")
            return found[0]

        out.append(
            ChannelBinding(
                sends.pop(),
                recvs.pop(),
                device_for("send", decl.sender if decl else None),
                device_for("recv", decl.receiver if decl else None),
                name,
            )
        )
    return out
