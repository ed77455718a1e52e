"""Generation statistics in the shape of a results table row."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass

CSV_COLUMNS = ("devices", "backstack", "transitions", "test_cases", "time_s", "states", "state_size_b", "memory_mb")


@dataclass(frozen=True)
class GenerationReport:
    devices: tuple[str, ...] = ()
    backstack: int = 0
    transitions: int = 0
    test_cases: int = 0
    time_s: float = 0.0
    states: int = 0
    state_size_b: int = 0
    peak_memory_b: int = 0

    @property
    def memory_mb(self) -> float:
        return self.peak_memory_b / 1e6

    @classmethod
    def from_result(cls, result, devices, bound) -> "GenerationReport":
        st = result.stats
        return cls(
            devices=tuple(devices),
            backstack=st.max_history,
            transitions=getattr(bound, "max_transitions", bound),
            test_cases=len(result.test_cases),
            time_s=st.elapsed,
            states=st.expanded,
            state_size_b=st.state_size,
            peak_memory_b=st.peak_live * st.state_size,
        )

    def row(self) -> dict[str, str]:
        return {
            "devices": ";".join(self.devices),
            "backstack": str(self.backstack),
            "transitions": str(self.transitions),
            "test_cases": str(self.test_cases),
            "time_s": f"{self.time_s:.3f}",
            "states": str(self.states),
            "state_size_b": str(self.state_size_b),
            "memory_mb": f"{self.memory_mb:.6f}",
        }


def emit_report(report: GenerationReport, format: str = "text") -> str:
    if format == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerow(report.row())
        return buf.getvalue()
    if format == "json":
        data = asdict(report)
        data["devices"] = list(report.devices)
        data["memory_mb"] = report.memory_mb
        return json.dumps(data, indent=2) + "\n"
    if format == "text":
        row = report.row()
        width = max(map(len, CSV_COLUMNS))
        return "".join(f"{k:<{width}}  {row[k]}\n" for k in CSV_COLUMNS)
    raise ValueError(f"unknown report format {format!r}")
