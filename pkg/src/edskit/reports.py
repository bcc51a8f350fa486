"""Structured reports and their serialization.

Every CLI command produces a Report; ``emit`` renders it as deterministic
text or as JSON conforming to the eds-report/1 schema shipped in
``schemas/eds_report_v1.json``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Optional

SCHEMA_ID = "eds-report/1"


@dataclass
class Report:
    command: str
    verdict: Optional[str] = None
    fields: dict = field(default_factory=dict)
    assumptions: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    has_unknown: bool = False

    def exit_code(self) -> int:
        if self.has_unknown:
            return 2
        if self.verdict in ("unknown", "unknown_up_to_depth", "unchecked"):
            return 2
        return 0

    def to_json_dict(self) -> dict:
        out: dict[str, Any] = {"schema": SCHEMA_ID, "command": self.command}
        if self.verdict is not None:
            out["verdict"] = self.verdict
        out.update(self.fields)
        out["assumptions"] = list(self.assumptions)
        if self.notes:
            out["notes"] = list(self.notes)
        return out


def _text_value(v: Any, indent: int = 0) -> list[str]:
    pad = "  " * indent
    if isinstance(v, dict):
        lines = []
        for k, val in v.items():
            if isinstance(val, (dict, list)) and val:
                lines.append(f"{pad}{k}:")
                lines.extend(_text_value(val, indent + 1))
            else:
                lines.append(f"{pad}{k}: {_scalar_text(val)}")
        return lines
    if isinstance(v, list):
        lines = []
        for item in v:
            if isinstance(item, (dict, list)):
                lines.append(f"{pad}-")
                lines.extend(_text_value(item, indent + 1))
            else:
                lines.append(f"{pad}- {_scalar_text(item)}")
        return lines
    return [f"{pad}{_scalar_text(v)}"]


def _scalar_text(v: Any) -> str:
    if v is None:
        return "-"
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def emit(report: Report, fmt: str = "text") -> bytes:
    if fmt == "json":
        return (
            json.dumps(report.to_json_dict(), indent=2, sort_keys=False) + "\n"
        ).encode()
    lines = [f"{report.command}: {report.verdict}" if report.verdict else report.command]
    for k, v in report.fields.items():
        if isinstance(v, (dict, list)) and v:
            lines.append(f"{k}:")
            lines.extend(_text_value(v, 1))
        else:
            lines.append(f"{k}: {_scalar_text(v)}")
    if report.assumptions:
        lines.append("assumptions:")
        lines.extend(f"  - {a}" for a in report.assumptions)
    if report.notes:
        lines.append("notes:")
        lines.extend(f"  - {n}" for n in report.notes)
    return ("\n".join(lines) + "\n").encode()


def error_report(command: str, exc: Exception) -> Report:
    return Report(
        command=command,
        verdict="error",
        fields={"error": type(exc).__name__, "message": str(exc)},
    )
