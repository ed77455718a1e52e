"""Action scripts for generated test cases.

User and call events become non-blocking control actions; system events
become a blocking ``waitEvent`` on their channel label.
"""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, field

from ..model import EventKind, SystemModel, model_digest
from ..modelio import ACTIONS, BindError, SchemaError
from ..semantics import ReceivePolicy, Rule
from ..trace import Step, TestCase


@dataclass
class ScriptStep:
    deviceId: str
    action: str
    controlGroup: str | None = None
    classname: str = ""
    index: int = 0
    text: str = ""
    parameter: str | None = None
    event: str | None = None
    rule: str = "R1"
    machine: str = ""
    transitionId: str | None = None
    source: str = ""
    target: str = ""


@dataclass
class ActionScript:
    header: dict
    steps: list[ScriptStep] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps({"header": self.header, "steps": [asdict(s) for s in self.steps]}, indent=2) + "\n"


def script_header(model: SystemModel, bound: int | None = None, policy: ReceivePolicy | str | None = None, complete: bool = True) -> dict:
    return {
        "modelHash": model_digest(model),
        "bound": bound,
        "policy": ReceivePolicy(policy).value if policy is not None else None,
        "devices": [d.id for d in model.devices],
        "complete": complete,
    }


def script_step(step: Step, model: SystemModel) -> ScriptStep:
    base = dict(
        deviceId=step.device,
        event=step.event.name if step.event else None,
        rule=step.rule.value,
        machine=step.machine,
        transitionId=step.tid,
        source=step.source,
        target=step.target,
    )
    if step.event is None:
        return ScriptStep(action="back", **base)
    if step.event.kind is EventKind.SYSTEM:
        chan = model.receive_index.get((step.device, step.event.name))
        return ScriptStep(action="waitEvent", parameter=chan.label if chan else step.event.name, **base)
    binding = model.control_bindings.get((step.machine, step.event.name))
    if binding is None:
        raise BindError(f"event {step.event.name!r} of {step.machine!r} is not bound to a control")
    if binding.action not in ACTIONS:
        raise BindError(f"event {step.event.name!r}: unknown action {binding.action!r}")
    return ScriptStep(
        action=binding.action,
        controlGroup=binding.control_group,
        classname=binding.class_name,
        index=binding.index,
        text=binding.text,
        parameter=binding.parameter,
        **base,
    )


def to_action_script(tc: TestCase, model: SystemModel, bound=None, policy=None, surface_returns: bool = False) -> ActionScript:
    steps = [script_step(s, model) for s in tc.steps if surface_returns or not s.is_return]
    return ActionScript(script_header(model, bound, policy, tc.complete), steps)


def emit_script(
    tc: TestCase,
    model: SystemModel,
    format: str = "json",
    bound: int | None = None,
    policy: ReceivePolicy | str | None = None,
    surface_returns: bool = False,
) -> str:
    script = to_action_script(tc, model, bound, policy, surface_returns)
    if format == "json":
        return script.to_json()
    if format == "uiauto":
        return render_uiautomator(script, model)
    raise ValueError(f"unknown script format {format!r}")


def parse_script(text: str | bytes) -> ActionScript:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"malformed action script: {exc.msg}", exc.lineno) from None
    if not isinstance(raw, dict) or "header" not in raw or "steps" not in raw:
        raise SchemaError("action script needs 'header' and 'steps'")
    known = set(ScriptStep.__dataclass_fields__)
    steps = []
    for i, s in enumerate(raw["steps"]):
        if not isinstance(s, dict) or "deviceId" not in s or "action" not in s:
            raise SchemaError(f"step {i}: needs deviceId and action")
        if s["action"] not in ACTIONS:
            raise SchemaError(f"step {i}: unknown action {s['action']!r}")
        steps.append(ScriptStep(**{k: v for k, v in s.items() if k in known}))
    return ActionScript(raw["header"], steps)


@dataclass(frozen=True)
class _ReplayStep:
    device: str
    rule: str | None
    event: str | None
    target: str


def replay_steps(script: ActionScript) -> list[_ReplayStep]:
    """Steps in the shape :func:`droidmbt.explorer.replay` expects."""
    out = []
    for s in script.steps:
        if s.rule == Rule.R5.value:
            out.append(_ReplayStep(s.deviceId, s.rule, None, s.target))
        else:
            out.append(_ReplayStep(s.deviceId, s.rule, s.event, s.target))
    return out


# ---------------------------------------------------------------- UiAutomator

_JAVA_HEAD = """\
import com.android.uiautomator.core.UiObject;
import com.android.uiautomator.core.UiObjectNotFoundException;
import com.android.uiautomator.core.UiSelector;
import com.android.uiautomator.testrunner.UiAutomatorTestCase;
"""


def _java_ident(text: str) -> str:
    return re.sub(r"[^0-9A-Za-z_]", "", text) or "Event"


def _java_str(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _selector(s: ScriptStep) -> str:
    sel = f"new UiSelector().className({_java_str(s.classname)}).index({s.index})"
    if s.text:
        sel += f".textContains({_java_str(s.text)})"
    return sel


def _action_body(s: ScriptStep) -> list[str]:
    if s.action == "waitEvent":
        return [f"waitEvent({_java_str(s.parameter or '')});"]
    if s.action == "back":
        return ["getUiDevice().pressBack();"]
    lines = [f"UiObject control = new UiObject({_selector(s)});"]
    if s.action == "click":
        lines.append("control.click();")
    elif s.action == "swipe":
        lines.append("control.swipeLeft(10);")
    elif s.action == "setText":
        lines.append(f"control.setText({_java_str(s.parameter or '')});")
    return lines


def render_uiautomator(script: ActionScript, model: SystemModel) -> str:
    """One UiAutomatorTestCase class per device, one method per step."""
    out = [f"// model {script.header.get('modelHash', '')[:12]} bound {script.header.get('bound')} policy {script.header.get('policy')}", _JAVA_HEAD]
    for n, dev in enumerate(script.header.get("devices") or [d.id for d in model.devices], start=1):
        methods, calls = [], []
        for i, s in enumerate(script.steps, start=1):
            if s.deviceId != dev:
                continue
            m = model.machine_by_id.get(s.machine)
            app = _java_ident(m.app or "") if m else ""
            view = (m.view if m and m.view else s.machine)
            label = s.controlGroup or (s.event or "Back").split("#")[0]
            name = f"Test{app}{_java_ident(label)}{i}"
            resume = s.target
            if m is not None and s.rule in ("R2", "R3", "R4") and s.source in m.return_of:
                resume = m.return_of[s.source]  # call steps show where the caller resumes
            prev, nxt = _local(s.source, s.machine), _local(resume, s.machine)
            where = " ".join(p for p in ("previous", prev, "next", nxt) if p)
            methods.append(f"    // Transition {s.transitionId or '-'}: {where} on view {view}")
            methods.append(f"    public void {name}() throws UiObjectNotFoundException {{")
            methods.extend(f"        {line}" for line in _action_body(s))
            methods.append("    }")
            calls.append(f"        {name}();")
        out.append(f"public class TestDevice{n} extends UiAutomatorTestCase {{")
        out.append(f"    // device {dev}")
        out.extend(methods)
        out.append("    public void testRun() throws UiObjectNotFoundException {")
        out.extend(calls)
        out.append("    }")
        out.append("    private void waitEvent(String label) {")
        out.append("        getUiDevice().waitForIdle();")
        out.append("    }")
        out.append("}")
        out.append("")
    return "\n".join(out)


def _local(state: str, machine: str) -> str:
    if state.startswith(machine + "/"):
        state = state[len(machine) + 1 :]
    return "" if state in ("<init>", "<end>") else state
