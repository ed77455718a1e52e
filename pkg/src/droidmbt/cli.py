"""Command-line pipeline: ingest, validate, explore, emit.

Exit codes: 0 ok, 1 invalid model, 2 I/O or parse error, 3 expansion cap
hit, 4 overwrite refused, 5 ``--verify`` found a script that does not replay.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

from .emitters import GenerationReport, emit_promela, emit_report, parse_script, replay_steps, to_action_script
from .emitters.script import render_uiautomator
from .explorer import ExplorationBound, ExplorationCapExceeded, ReplayError, explore_multi, replay
from .model import NoExitWarning, SystemModel, validate_system
from .modelio import BindError, ConfigError, ModelError, NotSupported, build_system_model, load_controls, load_model
from .semantics import ReceivePolicy, is_complete

EXIT_OK, EXIT_INVALID, EXIT_IO, EXIT_CAP, EXIT_OVERWRITE, EXIT_VERIFY = 0, 1, 2, 3, 4, 5
FORMATS = ("json", "uiauto", "promela")


@dataclass
class RunConfig:
    model: Path
    controls_dir: Path | None = None
    out: Path = Path("out")
    max_transitions: int = 10
    global_cap: int | None = None
    policy: ReceivePolicy = ReceivePolicy.STRICT
    reduce: bool = False
    formats: tuple[str, ...] = ("json",)
    require_all_finished: bool = True
    emit_truncated: bool = False
    jobs: int = 1
    force: bool = False
    verify: bool = False
    verbose: int = 0

    def bound(self) -> ExplorationBound:
        return ExplorationBound(self.max_transitions, self.require_all_finished, self.emit_truncated, self.global_cap)


class _Exit(Exception):
    def __init__(self, code: int, message: str = ""):
        super().__init__(message)
        self.code = code


def _load(cfg: RunConfig, bind: bool) -> SystemModel:
    """Parse and lower the model; with ``bind`` every event must have a control."""
    try:
        doc = load_model(cfg.model)
    except OSError as exc:
        raise _Exit(EXIT_IO, f"{cfg.model}: {exc.strerror or exc}") from None
    except ModelError as exc:
        raise _Exit(EXIT_IO, f"{cfg.model}:{exc.line or 0}: {exc}") from None
    controls = None
    if bind:
        try:
            controls = load_controls(doc, cfg.controls_dir or cfg.model.parent)
        except OSError as exc:
            raise _Exit(EXIT_IO, f"controls: {exc.filename}: {exc.strerror}") from None
        except ModelError as exc:
            raise _Exit(EXIT_IO, f"controls: {exc}") from None
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NoExitWarning)
            return build_system_model(doc, controls)
    except (BindError, ConfigError, NotSupported) as exc:
        raise _Exit(EXIT_INVALID, f"{cfg.model}:{exc.line or 0}: {type(exc).__name__}: {exc}") from None
    except ModelError as exc:
        raise _Exit(EXIT_IO, f"{cfg.model}:{exc.line or 0}: {exc}") from None


def _check(model: SystemModel, cfg: RunConfig) -> list[str]:
    return [f"{cfg.model}: {v.kind}: {v.message}" for v in validate_system(model)]


def _guard_out(out: Path, names: list[str], force: bool) -> None:
    out.mkdir(parents=True, exist_ok=True)
    clash = [p for p in sorted(out.iterdir()) if p.name in names or p.name.startswith("test_")]
    if clash and not force:
        raise _Exit(EXIT_OVERWRITE, f"{out}: refusing to overwrite {clash[0].name} (use --force)")
    for p in clash:
        if p.is_file():
            p.unlink()


def cmd_validate(cfg: RunConfig) -> int:
    model = _load(cfg, bind=False)
    problems = _check(model, cfg)
    for line in problems:
        print(line)
    if problems:
        return EXIT_INVALID
    print(f"{cfg.model}: ok ({len(model.machines)} machines, {len(model.devices)} devices)")
    return EXIT_OK


def cmd_generate(cfg: RunConfig) -> int:
    scripts = any(f in cfg.formats for f in ("json", "uiauto"))
    model = _load(cfg, bind=scripts)
    problems = _check(model, cfg)
    if problems:
        for line in problems:
            print(line, file=sys.stderr)
        return EXIT_INVALID
    bound = cfg.bound()
    try:
        result = explore_multi(model, bound, cfg.policy, cfg.reduce, cfg.jobs)
    except ExplorationCapExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP

    files: dict[str, str] = {}
    for n, tc in enumerate(result.test_cases, start=1):
        script = to_action_script(tc, model, bound.max_transitions, cfg.policy)
        if "json" in cfg.formats:
            files[f"test_{n:04d}.json"] = script.to_json()
        if "uiauto" in cfg.formats:
            files[f"test_{n:04d}.java"] = render_uiautomator(script, model)
    if "promela" in cfg.formats:
        files["model.pml"] = emit_promela(model, bound, cfg.policy)
    report = GenerationReport.from_result(result, [d.id for d in model.devices], bound)
    files["report.csv"] = emit_report(report, "csv")
    files["report.json"] = emit_report(report, "json")

    _guard_out(cfg.out, list(files), cfg.force)
    for name, text in files.items():
        (cfg.out / name).write_text(text, encoding="utf-8", newline="\n")
    print(f"{len(result.test_cases)} test cases written to {cfg.out}")

    if cfg.verify:
        bad = _verify(cfg.out, model, cfg.policy)
        if bad:
            for line in bad:
                print(line, file=sys.stderr)
            return EXIT_VERIFY
        print(f"verified {len(result.test_cases)} scripts")
    return EXIT_OK


def _verify(out: Path, model: SystemModel, policy: ReceivePolicy) -> list[str]:
    bad = []
    for path in sorted(out.glob("test_*.json")):
        try:
            script = parse_script(path.read_bytes())
            final = replay(model, replay_steps(script), policy)
        except (ModelError, ReplayError) as exc:
            bad.append(f"{path.name}: {exc}")
            continue
        if script.header.get("complete") and not is_complete(final):
            bad.append(f"{path.name}: replay does not end in a completed state")
    return bad


def cmd_emit_promela(cfg: RunConfig) -> int:
    model = _load(cfg, bind=False)
    problems = _check(model, cfg)
    if problems:
        for line in problems:
            print(line, file=sys.stderr)
        return EXIT_INVALID
    text = emit_promela(model, cfg.bound(), cfg.policy)
    cfg.out.mkdir(parents=True, exist_ok=True)
    target = cfg.out / "model.pml"
    if target.exists() and not cfg.force:
        raise _Exit(EXIT_OVERWRITE, f"{target}: exists (use --force)")
    target.write_text(text, encoding="utf-8", newline="\n")
    print(target)
    return EXIT_OK


def _formats(raw: str) -> tuple[str, ...]:
    items = tuple(dict.fromkeys(f.strip() for f in raw.split(",") if f.strip()))
    unknown = [f for f in items if f not in FORMATS]
    if unknown or not items:
        raise argparse.ArgumentTypeError(f"formats must be drawn from {','.join(FORMATS)}")
    return items


def _positive(raw: str) -> int:
    value = int(raw)
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="droidmbt", description="Generate GUI test cases from composed view state machines.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", type=Path, required=True, help="model file (.xml or .json)")
    common.add_argument("--controls-dir", type=Path, help="directory of controls files (default: the model's directory)")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--max-transitions", type=_positive, default=10, help="events per device (default 10)")
    common.add_argument("--global-cap", type=_positive, help="abort after expanding this many states")
    common.add_argument("--policy", choices=[p.value for p in ReceivePolicy], default="strict")
    common.add_argument("--force", action="store_true", help="replace existing outputs")
    common.add_argument("-v", "--verbose", action="count", default=0)

    sub.add_parser("validate", parents=[common], help="check model well-formedness")
    gen = sub.add_parser("generate", parents=[common], help="write one script per test case plus a report")
    gen.add_argument("--reduce", action="store_true", help="keep one interleaving per equivalence class")
    gen.add_argument("--format", type=_formats, default=("json",), help="comma list of json, uiauto, promela")
    gen.add_argument("--require-all-finished", action=argparse.BooleanOptionalAction, default=True)
    gen.add_argument("--emit-truncated", action="store_true", help="also emit bounded prefixes")
    gen.add_argument("--jobs", type=_positive, default=1)
    gen.add_argument("--verify", action="store_true", help="replay every written script")
    sub.add_parser("emit-promela", parents=[common], help="write model.pml")
    return parser


def _config(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        model=args.model,
        controls_dir=args.controls_dir,
        out=args.out,
        max_transitions=args.max_transitions,
        global_cap=args.global_cap,
        policy=ReceivePolicy(args.policy),
        reduce=getattr(args, "reduce", False),
        formats=getattr(args, "format", ("json",)),
        require_all_finished=getattr(args, "require_all_finished", True),
        emit_truncated=getattr(args, "emit_truncated", False),
        jobs=getattr(args, "jobs", 1),
        force=args.force,
        verify=getattr(args, "verify", False),
        verbose=args.verbose,
    )


COMMANDS = {"validate": cmd_validate, "generate": cmd_generate, "emit-promela": cmd_emit_promela}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    cfg = _config(args)
    try:
        return COMMANDS[args.command](cfg)
    except _Exit as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
