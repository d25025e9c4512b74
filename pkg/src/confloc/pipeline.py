"""The two-stage analysis flow, shared by the CLI and the benchmark harness.

Stage 1 classifies the parsed bundle. On an anomalous verdict, direct
inference runs first; an empty match set skips straight to indirect
inference (direct flow), a verified match set ends the run (fast flow), a
rejected one falls through to indirect inference (complete flow). Each run
records its executed phases in the report's notes so the assigned flow
label can be audited.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import __version__
from .anomaly import VerdictKind, WeightedTokenSet, classify
from .configs import ConfigSettings, HotTermFilter, PropertyCatalog
from .errors import BackendError, InconclusiveError
from .llm import (
    DEFAULT_MAX_SUSPECTS,
    DEFAULT_MODEL,
    DEFAULT_SCORE_THRESHOLD,
    Backend,
    Suspect,
    SuspectOrigin,
    SuspectSet,
    heuristic_verify,
    infer_indirect,
    verify,
)
from .matching import MatchSet, run_direct
from .parsing import ParsedLog
from .reporting import (
    VERDICT_CONFIG_ERROR,
    VERDICT_FAULT_FREE,
    DiagnosisReport,
    EvidenceMessage,
    Flow,
    ToolMeta,
    excerpt_of,
)
from .store import TemplateStore

EXIT_FAULT_FREE = 0
EXIT_SUSPECTS = 10
EXIT_INCONCLUSIVE = 11
EXIT_BACKEND_FAILED = 69

LLM_MOCK = "mock"
LLM_REMOTE = "remote"
LLM_HEURISTIC = "heuristic"


@dataclass
class PipelineOptions:
    llm_mode: str = LLM_MOCK
    no_verify: bool = False
    verify_threshold: int = DEFAULT_SCORE_THRESHOLD
    max_suspects: int = DEFAULT_MAX_SUSPECTS
    model_id: str = DEFAULT_MODEL
    use_name_match: bool = True
    use_value_match: bool = True


@dataclass
class AnalysisResult:
    report: DiagnosisReport
    exit_code: int
    match_set: MatchSet | None = None
    verdict_kind: VerdictKind = VerdictKind.FAULT_FREE


def _evidence_message(record) -> EvidenceMessage:
    return EvidenceMessage(
        file=record.origin[0], line=record.origin[1], excerpt=excerpt_of(record.message)
    )


def _kind_explanation(kinds: set[str]) -> str:
    parts = []
    if "name" in kinds:
        parts.append("name hits")
    if "value" in kinds:
        parts.append("value hits")
    return "; ".join(parts)


def suspects_from_matches(
    match_set: MatchSet,
    plausible_properties: list[str] | None,
    max_suspects: int,
    ranking: dict[str, int] | None = None,
) -> SuspectSet:
    """Suspects straight from direct-inference matches.

    Used by the verified fast flow (restricted to plausible properties,
    ranked by score) and by the no-verify variant (every matched property).
    """
    names = match_set.properties()
    if plausible_properties is not None:
        names = [n for n in names if n in plausible_properties]
    if ranking:
        names.sort(key=lambda n: (-ranking.get(n, 0), n))
    else:
        names.sort(
            key=lambda n: (
                -len({m.key_message.record.origin for m in match_set.for_property(n)}),
                n,
            )
        )
    suspects = []
    for name in names[:max_suspects]:
        entries = match_set.for_property(name)
        kinds = {m.kind.kind_label for m in entries}
        suspects.append(
            Suspect(
                property=name,
                value=entries[0].entry.value,
                explanation=_kind_explanation(kinds),
                rank=len(suspects) + 1,
            )
        )
    return SuspectSet(
        suspects=tuple(suspects),
        origin_phase=SuspectOrigin.VERIFICATION,
        max_suspects=max_suspects,
    )


def analyze(
    parsed: ParsedLog,
    store: TemplateStore,
    settings: ConfigSettings,
    catalog: PropertyCatalog,
    tokens: WeightedTokenSet,
    hot: HotTermFilter,
    backend: Backend | None,
    options: PipelineOptions,
) -> AnalysisResult:
    notes: list[str] = []
    meta = ToolMeta(version=__version__, store_fingerprint=store.parser_config_fingerprint)

    verdict = classify(parsed, store, tokens)
    notes.append(
        f"stage1: {verdict.specific_template_count} specific templates, "
        f"{len(verdict.key_messages)} key messages"
    )
    if verdict.kind is VerdictKind.FAULT_FREE:
        report = DiagnosisReport(
            verdict=VERDICT_FAULT_FREE,
            flow=Flow.NONE,
            suspect_set=None,
            evidence={},
            context_messages=(),
            phase_notes=tuple(notes),
            tool_meta=meta,
        )
        return AnalysisResult(report=report, exit_code=EXIT_FAULT_FREE, verdict_kind=verdict.kind)

    msgs = list(verdict.key_messages)
    match_set = run_direct(
        msgs,
        settings,
        hot,
        use_names=options.use_name_match,
        use_values=options.use_value_match,
    )
    notes.append(f"direct-inference: {len(match_set)} matched entries")

    suspect_set: SuspectSet | None = None
    flow = Flow.DIRECT
    backend_failed = False

    try:
        if options.llm_mode == LLM_HEURISTIC:
            # nl-variant: heuristic verification, no indirect inference at all.
            if match_set:
                suspect_set = heuristic_verify(match_set)
                flow = Flow.FAST
                notes.append("verification: heuristic argmax over matched entries")
            else:
                suspect_set = None
                flow = Flow.DIRECT
                notes.append("verification: heuristic requires direct matches; none found")
        elif not match_set:
            notes.append("verification: skipped (no direct matches)")
            flow = Flow.DIRECT
            suspect_set = _run_indirect(msgs, settings, catalog, backend, options, notes)
        elif options.no_verify:
            notes.append("verification: skipped (--no-verify)")
            flow = Flow.FAST
            suspect_set = suspects_from_matches(match_set, None, options.max_suspects)
            notes.append(f"direct-inference accepted as suspects: {len(suspect_set.suspects)}")
        else:
            flow = Flow.FAST
            verification = verify(
                match_set,
                catalog,
                backend,
                threshold=options.verify_threshold,
                model_id=options.model_id,
            )
            notes.extend(verification.warnings)
            if verification.passed:
                plausible = sorted(
                    {
                        match_set.matches[idx - 1].entry.property
                        for idx in verification.plausible_indices()
                    }
                )
                scores: dict[str, int] = {}
                for idx, score, ok in verification.per_entry:
                    if ok:
                        name = match_set.matches[idx - 1].entry.property
                        scores[name] = max(scores.get(name, 0), score)
                suspect_set = suspects_from_matches(
                    match_set, plausible, options.max_suspects, ranking=scores
                )
                notes.append(f"verification: passed with {len(plausible)} plausible properties")
            else:
                flow = Flow.COMPLETE
                notes.append("verification: failed; continuing to indirect inference")
                suspect_set = _run_indirect(msgs, settings, catalog, backend, options, notes)
    except BackendError as exc:
        # Preserve the partial run: the report still carries the trace and
        # every key message as context; the exit code signals the outage.
        backend_failed = True
        suspect_set = None
        notes.append(f"llm backend failure: {exc}")

    evidence: dict[str, tuple[EvidenceMessage, ...]] = {}
    context: tuple[EvidenceMessage, ...] = ()
    if suspect_set is not None and suspect_set.suspects:
        for suspect in suspect_set.suspects:
            if suspect_set.origin_phase == SuspectOrigin.VERIFICATION:
                records = [m.key_message.record for m in match_set.for_property(suspect.property)]
            else:
                records = [m.record for m in msgs]
            unique = []
            seen = set()
            for record in records:
                if record.origin not in seen:
                    seen.add(record.origin)
                    unique.append(_evidence_message(record))
            evidence[suspect.property] = tuple(unique)
        exit_code = EXIT_SUSPECTS
    else:
        # Inconclusive: carry every key message as context instead.
        suspect_set = SuspectSet(
            suspects=(),
            origin_phase=(
                suspect_set.origin_phase if suspect_set else SuspectOrigin.INDIRECT_INFERENCE
            ),
            max_suspects=options.max_suspects,
        )
        context = tuple(_evidence_message(m.record) for m in msgs)
        exit_code = EXIT_BACKEND_FAILED if backend_failed else EXIT_INCONCLUSIVE

    report = DiagnosisReport(
        verdict=VERDICT_CONFIG_ERROR,
        flow=flow,
        suspect_set=suspect_set,
        evidence=evidence,
        context_messages=context,
        phase_notes=tuple(notes),
        tool_meta=meta,
    )
    return AnalysisResult(
        report=report, exit_code=exit_code, match_set=match_set, verdict_kind=verdict.kind
    )


def _run_indirect(msgs, settings, catalog, backend, options, notes) -> SuspectSet | None:
    try:
        suspect_set = infer_indirect(
            msgs,
            settings,
            catalog,
            backend,
            max_suspects=options.max_suspects,
            model_id=options.model_id,
        )
    except InconclusiveError as exc:
        notes.append(f"indirect-inference: {exc}")
        return None
    notes.extend(suspect_set.warnings)
    notes.append(f"indirect-inference: {len(suspect_set.suspects)} suspects")
    return suspect_set
