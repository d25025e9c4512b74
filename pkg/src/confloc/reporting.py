"""End-user diagnosis reports: verdict, suspects, evidence, flow provenance.

Suspects born in the verification phase carry "name hits"/"value hits"
explanations keyed to how they were matched; suspects from indirect
inference carry the model explanation verbatim. The JSON rendering is a
stable schema with dense suspect ranks and contains nothing volatile, so
repeated runs over the same inputs are byte-identical; the wall-clock
timestamp appears only in the text rendering.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

from .llm import Suspect, SuspectOrigin, SuspectSet

SCHEMA_VERSION = 1
EVIDENCE_EXCERPT_CHARS = 500

VERDICT_FAULT_FREE = "configuration-fault-free"
VERDICT_CONFIG_ERROR = "configuration-error"


class Flow:
    NONE = "none"
    FAST = "fast-flow"
    DIRECT = "direct-flow"
    COMPLETE = "complete-flow"

    ALL = (NONE, FAST, DIRECT, COMPLETE)


@dataclass(frozen=True)
class EvidenceMessage:
    file: str
    line: int
    excerpt: str


@dataclass(frozen=True)
class ToolMeta:
    version: str
    store_fingerprint: int
    created_at: float = field(default_factory=time.time, compare=False)


@dataclass(frozen=True)
class DiagnosisReport:
    verdict: str
    flow: str
    suspect_set: SuspectSet | None
    evidence: dict[str, tuple[EvidenceMessage, ...]]
    context_messages: tuple[EvidenceMessage, ...]
    phase_notes: tuple[str, ...]
    tool_meta: ToolMeta

    def __post_init__(self) -> None:
        if self.verdict == VERDICT_FAULT_FREE:
            if self.suspect_set is not None or self.flow != Flow.NONE:
                raise ValueError("fault-free reports carry no suspects and no flow")
        if self.flow == Flow.FAST and self.suspect_set is not None:
            if self.suspect_set.suspects and self.suspect_set.origin_phase != SuspectOrigin.VERIFICATION:
                raise ValueError("fast-flow suspects must originate from verification")
        if self.flow in (Flow.DIRECT, Flow.COMPLETE) and self.suspect_set is not None:
            if self.suspect_set.suspects and self.suspect_set.origin_phase != SuspectOrigin.INDIRECT_INFERENCE:
                raise ValueError("direct/complete-flow suspects must originate from indirect inference")

    @property
    def suspects(self) -> tuple[Suspect, ...]:
        return self.suspect_set.suspects if self.suspect_set else ()

    def is_conclusive(self) -> bool:
        return bool(self.suspects)


def excerpt_of(text: str, limit: int = EVIDENCE_EXCERPT_CHARS) -> str:
    return text if len(text) <= limit else text[:limit] + "..."


def _evidence_to_json(messages: tuple[EvidenceMessage, ...]) -> list[dict]:
    return [{"file": m.file, "line": m.line, "excerpt": m.excerpt} for m in messages]


def _evidence_from_json(items: list[dict]) -> tuple[EvidenceMessage, ...]:
    return tuple(EvidenceMessage(file=i["file"], line=int(i["line"]), excerpt=i["excerpt"]) for i in items)


def to_dict(report: DiagnosisReport) -> dict:
    """Stable machine view of a report; excludes volatile timestamps."""
    return {
        "schema_version": SCHEMA_VERSION,
        "verdict": report.verdict,
        "flow": report.flow,
        "origin_phase": report.suspect_set.origin_phase if report.suspect_set else None,
        "max_suspects": report.suspect_set.max_suspects if report.suspect_set else None,
        "suspects": [
            {
                "rank": s.rank,
                "property": s.property,
                "value": s.value,
                "explanation": s.explanation,
            }
            for s in report.suspects
        ],
        "evidence": [
            {"property": name, "messages": _evidence_to_json(messages)}
            for name, messages in report.evidence.items()
        ],
        "context_messages": _evidence_to_json(report.context_messages),
        "phase_notes": list(report.phase_notes),
        "tool": {
            "version": report.tool_meta.version,
            "store_fingerprint": f"{report.tool_meta.store_fingerprint:016x}",
        },
    }


def from_dict(data: dict) -> DiagnosisReport:
    """Rebuild a report from its JSON form (timestamp is reset)."""
    suspect_set = None
    if data.get("origin_phase") is not None:
        suspect_set = SuspectSet(
            suspects=tuple(
                Suspect(
                    property=s["property"],
                    value=s["value"],
                    explanation=s["explanation"],
                    rank=int(s["rank"]),
                )
                for s in data["suspects"]
            ),
            origin_phase=data["origin_phase"],
            max_suspects=int(data["max_suspects"]),
        )
    return DiagnosisReport(
        verdict=data["verdict"],
        flow=data["flow"],
        suspect_set=suspect_set,
        evidence={
            block["property"]: _evidence_from_json(block["messages"])
            for block in data["evidence"]
        },
        context_messages=_evidence_from_json(data["context_messages"]),
        phase_notes=tuple(data["phase_notes"]),
        tool_meta=ToolMeta(
            version=data["tool"]["version"],
            store_fingerprint=int(data["tool"]["store_fingerprint"], 16),
        ),
    )


def render(report: DiagnosisReport, format: str = "text") -> bytes:
    """Render a report as human-ordered text or stable JSON bytes."""
    if format == "json":
        return (json.dumps(to_dict(report), indent=2, ensure_ascii=True) + "\n").encode("utf-8")
    if format != "text":
        raise ValueError(f"unknown report format {format!r}")

    lines = [
        "confloc diagnosis report",
        "========================",
        f"VERDICT: {report.verdict}",
        f"FLOW: {report.flow}",
    ]
    if report.verdict == VERDICT_FAULT_FREE:
        lines.append("no configuration error occurs in the supplied logs")
    elif not report.suspects:
        lines.append("anomaly detected, but no configuration error trigger could be named")
    else:
        lines.append("")
        lines.append("SUSPECTED CONFIGURATION ERROR TRIGGERS:")
        for s in report.suspects:
            shown_value = "" if s.value is None else s.value
            lines.append(f"  {s.rank}. {s.property} = {shown_value}")
            lines.append(f"     explanation: {s.explanation}")
    if report.evidence:
        lines.append("")
        lines.append("EVIDENCE:")
        for name, messages in report.evidence.items():
            lines.append(f"  {name}:")
            for m in messages:
                lines.append(f"    {m.file}:{m.line}: {m.excerpt}")
    if report.context_messages:
        lines.append("")
        lines.append("KEY LOG MESSAGES (context):")
        for m in report.context_messages:
            lines.append(f"  {m.file}:{m.line}: {m.excerpt}")
    if report.phase_notes:
        lines.append("")
        lines.append("NOTES:")
        for note in report.phase_notes:
            lines.append(f"  - {note}")
    lines.append("")
    lines.append(
        f"tool version {report.tool_meta.version}; "
        f"store fingerprint {report.tool_meta.store_fingerprint:016x}; "
        f"generated at {time.strftime('%Y-%m-%dT%H:%M:%S', time.gmtime(report.tool_meta.created_at))}Z"
    )
    return ("\n".join(lines) + "\n").encode("utf-8")
