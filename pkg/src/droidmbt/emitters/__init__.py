from .promela import Mangler, emit_promela, parse_spin_output, transition_numbers
from .report import CSV_COLUMNS, GenerationReport, emit_report
from .script import ActionScript, ScriptStep, emit_script, parse_script, replay_steps, to_action_script

__all__ = [
    "ActionScript",
    "CSV_COLUMNS",
    "GenerationReport",
    "Mangler",
    "ScriptStep",
    "emit_promela",
    "emit_report",
    "emit_script",
    "parse_script",
    "parse_spin_output",
    "replay_steps",
    "to_action_script",
    "transition_numbers",
]
