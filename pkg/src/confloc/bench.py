"""Desk-scale benchmark: value mutation, decoy injection, synthetic corpora.

Numeric values are mutated either within their datatype (positive,
negative, zero) or against it (a 5-letter string, an empty value). Each
generated case mutates one property as the ground-truth trigger and
fabricates nine decoy properties with mutated values in a separate file,
so inference has to discriminate. Synthetic corpora embed the trigger
directly (name/value named in an anomalous line), indirectly (anomalous
line plus stack block, trigger never named), or not at all.

Everything is driven by seeded generators; identical seeds produce
byte-identical case directories.
"""

from __future__ import annotations

import enum
import json
import random
import re
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

from .anomaly import WeightedTokenSet, classify
from .configs import (
    ConfigEntry,
    ConfigSettings,
    EntrySource,
    PropertyCatalog,
    build_hot_filter,
    load_settings,
    segment_name,
)
from .errors import EmptyDenominatorError, NotApplicableError, UniverseTooSmallError
from .llm import MockBackend
from .matching import run_direct
from .parsing import ParserConfig, RawLine, parse_log_file
from .pipeline import AnalysisResult, PipelineOptions, analyze
from .reporting import VERDICT_CONFIG_ERROR, VERDICT_FAULT_FREE, Flow
from .store import TemplateStore

MAX_FLOAT = 3.4e38
DECOY_COUNT = 9
_LETTERS = "abcdefghijklmnopqrstuvwxyz"


class MutateType(enum.Enum):
    COMPLIANCE = "compliance"
    VIOLATION = "violation"


class ValueType(enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    ZERO = "zero"
    STRING_VIOLATION = "string-violation"
    EMPTY = "empty"


_COMPLIANCE_TYPES = (ValueType.POSITIVE, ValueType.NEGATIVE, ValueType.ZERO)
_VIOLATION_TYPES = (ValueType.STRING_VIOLATION, ValueType.EMPTY)


@dataclass(frozen=True)
class MutationStrategy:
    mutate_type: MutateType
    value_type: ValueType
    datatype: str = "numeric"

    def __post_init__(self) -> None:
        if self.mutate_type is MutateType.COMPLIANCE and self.value_type not in _COMPLIANCE_TYPES:
            raise ValueError(f"{self.value_type} is not a compliance mutation")
        if self.mutate_type is MutateType.VIOLATION and self.value_type not in _VIOLATION_TYPES:
            raise ValueError(f"{self.value_type} is not a violation mutation")

    @classmethod
    def of(cls, value_type: ValueType) -> "MutationStrategy":
        mutate_type = (
            MutateType.COMPLIANCE if value_type in _COMPLIANCE_TYPES else MutateType.VIOLATION
        )
        return cls(mutate_type=mutate_type, value_type=value_type)


def mutate_value(strategy: MutationStrategy, rng: random.Random) -> str:
    """Draw one mutated value text for the strategy.

    Compliance values are finite decimals inside the open float range;
    violation values never parse as a number.
    """
    kind = strategy.value_type
    if kind is ValueType.ZERO:
        return "0"
    if kind is ValueType.EMPTY:
        return ""
    if kind is ValueType.STRING_VIOLATION:
        return "".join(rng.choice(_LETTERS) for _ in range(5))
    # Spread compliance draws across magnitudes; 10**38 stays inside MAX_FLOAT.
    magnitude = 10.0 ** rng.uniform(-3, 38)
    if kind is ValueType.POSITIVE:
        return repr(magnitude)
    return repr(-magnitude)


@dataclass(frozen=True)
class GroundTruth:
    trigger: ConfigEntry
    strategy: MutationStrategy
    decoys: tuple[ConfigEntry, ...]

    def __post_init__(self) -> None:
        names = [d.property for d in self.decoys]
        if len(set(names)) != len(names):
            raise ValueError("decoy properties must be pairwise distinct")
        if self.trigger.property in names:
            raise ValueError("the trigger may not appear among the decoys")


def make_mutated_case(
    base: ConfigSettings,
    universe: PropertyCatalog,
    rng: random.Random,
) -> tuple[ConfigSettings, ConfigSettings, GroundTruth]:
    """Mutate one property as the trigger and fabricate nine decoys.

    Returns (mutated user settings, fabricated decoy settings, truth).
    """
    if len(universe.universe) < DECOY_COUNT + 1:
        raise UniverseTooSmallError(
            f"need at least {DECOY_COUNT + 1} properties, catalog has {len(universe.universe)}"
        )
    trigger_name = rng.choice(universe.universe)
    strategy = MutationStrategy.of(rng.choice(list(ValueType)))
    trigger_value = mutate_value(strategy, rng)
    trigger = ConfigEntry(property=trigger_name, value=trigger_value, source=EntrySource.USER_DEFINED)

    mutated_entries = []
    replaced = False
    for entry in base.entries:
        if entry.property == trigger_name:
            mutated_entries.append(trigger)
            replaced = True
        else:
            mutated_entries.append(entry)
    if not replaced:
        mutated_entries.append(trigger)
    mutated = ConfigSettings(entries=tuple(mutated_entries))

    others = [name for name in universe.universe if name != trigger_name]
    decoy_names = rng.sample(others, DECOY_COUNT)
    decoys = tuple(
        ConfigEntry(
            property=name,
            value=mutate_value(MutationStrategy.of(rng.choice(list(ValueType))), rng),
            source=EntrySource.FABRICATED,
        )
        for name in decoy_names
    )
    truth = GroundTruth(trigger=trigger, strategy=strategy, decoys=decoys)
    return mutated, ConfigSettings(entries=decoys), truth


class SymptomProfile(enum.Enum):
    DIRECT = "direct"
    INDIRECT = "indirect"
    CLEAN = "clean"


#: Fault-free line shapes: (component, message format). Each emits several
#: lines with distinct numeric fills so the variable slots always abstract
#: to placeholders, keeping clean corpora template-identical to the store.
DEFAULT_TEMPLATE_POOL: tuple[tuple[str, str], ...] = (
    ("JobClient", "Running job job_{}"),
    ("TaskTracker", "Launching task attempt_{} on slot {}"),
    ("Scheduler", "Assigned container container_{} to host node{}"),
    ("JobClient", "Job job_{} completed successfully"),
    ("MemoryMonitor", "Allocated {} MB for shuffle buffer pool"),
    ("LeaseManager", "Session {} renewed lease window {}"),
    ("ReduceFetcher", "Reducer {} fetched {} map outputs"),
    ("BlockManager", "Block blk_{} replicated to {} nodes"),
    ("StagingCleaner", "Cleaning staging area staging_{}"),
    ("Heartbeater", "Heartbeat received from worker {}"),
)

_LINES_PER_PATTERN = 3
_NOISE_CONSTANT = "[node01/72.30.116.100:50020]"

_INDIRECT_STACK = (
    "\tat com.acme.gridworks.dispatch.AppMaster.launch(AppMaster.java:214)",
    "\tat com.acme.gridworks.dispatch.Bootstrap.run(Bootstrap.java:77)",
    "Caused by: java.lang.NullPointerException",
    "\tat com.acme.gridworks.dispatch.ContextWalker.descend(ContextWalker.java:132)",
    "\t... 3 more",
)


def _timestamp(index: int) -> str:
    minute, second = divmod(index, 60)
    hour, minute = divmod(10 * 60 + minute, 60)
    return f"2024-04-01 {hour:02d}:{minute:02d}:{second:02d}"


def _mask_trigger(text: str, truth: GroundTruth) -> str:
    """Remove any trace of the trigger from an indirect symptom line."""
    for segment in segment_name(truth.trigger.property):
        text = re.sub(
            rf"(?<![0-9A-Za-z]){re.escape(segment)}(?![0-9A-Za-z])",
            "XXXX",
            text,
            flags=re.IGNORECASE,
        )
    value = truth.trigger.value.strip()
    if value:
        text = text.replace(value, "XXXX")
    return text


def gen_synthetic_logs(
    truth: GroundTruth | None,
    profile: SymptomProfile,
    template_pool: Sequence[tuple[str, str]],
    rng: random.Random,
) -> str:
    """Emit one log corpus as text.

    Clean corpora contain only pool lines. Direct corpora add anomalous
    lines naming the trigger and its value; indirect corpora add an
    anomalous line with a stack block and no trace of the trigger.
    """
    if profile is not SymptomProfile.CLEAN and truth is None:
        raise ValueError("symptom profiles need a ground truth")

    lines: list[str] = []
    index = 0
    for component, pattern in template_pool:
        slots = pattern.count("{}")
        fills = [rng.sample(range(100, 100000), _LINES_PER_PATTERN) for _ in range(slots)]
        for i in range(_LINES_PER_PATTERN):
            message = pattern.format(*(fills[s][i] for s in range(slots)))
            lines.append(f"{_timestamp(index)} INFO {component}: {message}")
            index += 1

    if profile is SymptomProfile.DIRECT:
        assert truth is not None
        for attempt in (1, 2):
            message = (
                f"Error while applying configuration: property {truth.trigger.property} "
                f"set to '{truth.trigger.value}' rejected at {_NOISE_CONSTANT}, attempt {attempt}"
            )
            lines.append(f"{_timestamp(index)} ERROR ConfigAudit: {message}")
            index += 1
    elif profile is SymptomProfile.INDIRECT:
        assert truth is not None
        message = _mask_trigger(
            f"Error while launching application master on {_NOISE_CONSTANT}", truth
        )
        lines.append(f"{_timestamp(index)} ERROR AppMaster: {message}")
        index += 1
        for stack_line in _INDIRECT_STACK:
            lines.append(_mask_trigger(stack_line, truth))

    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class EvalResult:
    case_id: str
    stage1_correct: bool
    stage2_correct: bool
    suspect_count: int
    flow: str
    fp_direct: Fraction | None = None
    fp_verified: Fraction | None = None


def accuracy(results: Sequence[EvalResult], phase: str) -> Fraction:
    """Correct cases over cases that flowed into the selected phase/stage."""
    if phase == "stage1":
        entered = list(results)
        correct = sum(1 for r in entered if r.stage1_correct)
    elif phase == "stage2":
        entered = [r for r in results if r.flow != Flow.NONE]
        correct = sum(1 for r in entered if r.stage2_correct)
    elif phase == "direct":
        entered = [r for r in results if r.flow in (Flow.FAST, Flow.COMPLETE)]
        correct = sum(1 for r in entered if r.stage2_correct)
    elif phase == "indirect":
        entered = [r for r in results if r.flow in (Flow.DIRECT, Flow.COMPLETE)]
        correct = sum(1 for r in entered if r.stage2_correct)
    else:
        raise ValueError(f"unknown phase selector {phase!r}")
    if not entered:
        raise EmptyDenominatorError(f"no test case flowed into {phase}")
    return Fraction(correct, len(entered))


def fp_rate(suspect_count: int, contains_truth: bool = True) -> Fraction:
    """(n - 1) / n over a suspect set that contains the ground truth."""
    if not contains_truth:
        raise NotApplicableError(
            "false-positive rate is undefined when the truth was not suspected"
        )
    if suspect_count < 1:
        raise ValueError("a suspect set containing the truth has at least one suspect")
    return Fraction(suspect_count - 1, suspect_count)


# --- case directories -------------------------------------------------------

_SCRIPTED_EXPLANATION = (
    "Scripted diagnosis: the mutated value of this property violates the "
    "range its component expects, which matches the observed anomaly."
)


def settings_to_xml(settings: ConfigSettings) -> str:
    parts = ['<?xml version="1.0" encoding="UTF-8"?>', "<configuration>"]
    for entry in settings.entries:
        parts.append("  <property>")
        parts.append(f"    <name>{escape(entry.property)}</name>")
        parts.append(f"    <value>{escape(entry.value)}</value>")
        parts.append("  </property>")
    parts.append("</configuration>")
    return "\n".join(parts) + "\n"


def truth_to_json(case_id: str, profile: SymptomProfile, truth: GroundTruth | None) -> str:
    data: dict = {"case_id": case_id, "profile": profile.value}
    if truth is not None:
        data["trigger"] = {
            "property": truth.trigger.property,
            "value": truth.trigger.value,
            "mutate_type": truth.strategy.mutate_type.value,
            "value_type": truth.strategy.value_type.value,
        }
        data["decoys"] = [{"property": d.property, "value": d.value} for d in truth.decoys]
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def _parse_text(text: str, file_id: str, config: ParserConfig):
    lines = [
        RawLine(file_id=file_id, line_no=i, text=line)
        for i, line in enumerate(text.splitlines(), start=1)
    ]
    return parse_log_file(lines, config)


def gen_case(
    base: ConfigSettings,
    catalog: PropertyCatalog,
    seed: int,
    profile: SymptomProfile,
    out_dir: str | Path,
    template_pool: Sequence[tuple[str, str]] = DEFAULT_TEMPLATE_POOL,
) -> Path:
    """Write one self-contained benchmark case directory.

    Besides the corpus and configuration files, the case carries a
    fault-free baseline corpus (to build the store from), a copy of the
    catalog, and scripted verification/indirect fixtures for the mock
    backend, computed from the deterministic front half of the pipeline.
    """
    case_id = f"{profile.value}-{seed:05d}"
    case_dir = Path(out_dir) / case_id
    case_dir.mkdir(parents=True, exist_ok=True)

    if profile is SymptomProfile.CLEAN:
        mutated, decoys, truth = base, ConfigSettings(entries=()), None
    else:
        mutated, decoys, truth = make_mutated_case(
            base, catalog, random.Random(f"{seed}:mutate")
        )

    faultfree_text = gen_synthetic_logs(
        None, SymptomProfile.CLEAN, template_pool, random.Random(f"{seed}:faultfree")
    )
    logs_text = gen_synthetic_logs(truth, profile, template_pool, random.Random(f"{seed}:logs"))

    (case_dir / "faultfree.txt").write_text(faultfree_text, encoding="utf-8")
    (case_dir / "logs.txt").write_text(logs_text, encoding="utf-8")
    (case_dir / "mutated.xml").write_text(settings_to_xml(mutated), encoding="utf-8")
    (case_dir / "decoys.xml").write_text(settings_to_xml(decoys), encoding="utf-8")
    (case_dir / "truth.json").write_text(truth_to_json(case_id, profile, truth), encoding="utf-8")
    (case_dir / "catalog.json").write_text(
        json.dumps(
            [
                {"name": name, "description": catalog.description_of(name)}
                for name in catalog.universe
            ],
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )

    fixtures = case_dir / "fixtures"
    fixtures.mkdir(exist_ok=True)
    if truth is not None:
        _write_scripted_fixtures(fixtures, truth, mutated, decoys, catalog, faultfree_text, logs_text)
    return case_dir


def _write_scripted_fixtures(
    fixtures_dir: Path,
    truth: GroundTruth,
    mutated: ConfigSettings,
    decoys: ConfigSettings,
    catalog: PropertyCatalog,
    faultfree_text: str,
    logs_text: str,
) -> None:
    """Script mock responses emulating a well-behaved verification model.

    The verification script scores the true trigger high and everything
    else low; the indirect script names the trigger. Entry order mirrors
    the deterministic direct-inference ordering.
    """
    config = ParserConfig()
    store = TemplateStore(parser_config_fingerprint=config.fingerprint())
    store.ingest(_parse_text(faultfree_text, "faultfree.txt", config))
    parsed = _parse_text(logs_text, "logs.txt", config)

    verdict = classify(parsed, store, WeightedTokenSet.default())
    settings = mutated.merged_with(decoys)
    hot = build_hot_filter(catalog)
    match_set = run_direct(list(verdict.key_messages), settings, hot)

    if match_set:
        lines = []
        for i, match in enumerate(match_set, start=1):
            score = 95 if match.entry.property == truth.trigger.property else 30
            lines.append(f"ENTRY {i}: SCORE={score}")
        (fixtures_dir / "verify.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")

    (fixtures_dir / "indirect.txt").write_text(
        f"SUSPECT 1: {truth.trigger.property} | {_SCRIPTED_EXPLANATION}\n", encoding="utf-8"
    )


@dataclass
class CaseOutcome:
    result: EvalResult
    analysis: AnalysisResult


def eval_case(case_dir: str | Path, no_verify: bool = False) -> CaseOutcome:
    """Run the pipeline over one generated case against its own baseline."""
    case_dir = Path(case_dir)
    truth_data = json.loads((case_dir / "truth.json").read_text(encoding="utf-8"))
    profile = SymptomProfile(truth_data["profile"])
    trigger_name = truth_data.get("trigger", {}).get("property")

    config = ParserConfig()
    store = TemplateStore(parser_config_fingerprint=config.fingerprint())
    store.ingest(
        _parse_text((case_dir / "faultfree.txt").read_text(encoding="utf-8"), "faultfree.txt", config)
    )
    parsed = _parse_text((case_dir / "logs.txt").read_text(encoding="utf-8"), "logs.txt", config)

    user = load_settings(case_dir / "mutated.xml", source=EntrySource.USER_DEFINED)
    fabricated = load_settings(case_dir / "decoys.xml", source=EntrySource.FABRICATED)
    settings = user.merged_with(fabricated)
    catalog = PropertyCatalog.from_json(case_dir / "catalog.json")
    hot = build_hot_filter(catalog)
    backend = MockBackend.from_dir(case_dir / "fixtures")

    analysis = analyze(
        parsed,
        store,
        settings,
        catalog,
        WeightedTokenSet.default(),
        hot,
        backend,
        PipelineOptions(no_verify=no_verify),
    )

    if profile is SymptomProfile.CLEAN:
        stage1_correct = analysis.report.verdict == VERDICT_FAULT_FREE
        stage2_correct = True
    else:
        stage1_correct = analysis.report.verdict == VERDICT_CONFIG_ERROR
        stage2_correct = trigger_name in {s.property for s in analysis.report.suspects}

    fp_verified = None
    suspects = analysis.report.suspects
    if trigger_name and suspects and trigger_name in {s.property for s in suspects}:
        fp_verified = fp_rate(len(suspects))

    fp_direct = None
    if trigger_name and analysis.match_set:
        direct_props = analysis.match_set.properties()
        if trigger_name in direct_props:
            fp_direct = fp_rate(len(direct_props))

    result = EvalResult(
        case_id=truth_data["case_id"],
        stage1_correct=stage1_correct,
        stage2_correct=stage2_correct,
        suspect_count=len(suspects),
        flow=analysis.report.flow,
        fp_direct=fp_direct,
        fp_verified=fp_verified,
    )
    return CaseOutcome(result=result, analysis=analysis)


def eval_cases(cases_dir: str | Path, no_verify: bool = False) -> list[CaseOutcome]:
    """Evaluate every case under a directory in case-id order."""
    case_dirs = sorted(
        (p.parent for p in Path(cases_dir).glob("*/truth.json")), key=lambda p: p.name
    )
    if not case_dirs:
        raise FileNotFoundError(f"no case directories under {cases_dir}")
    return [eval_case(d, no_verify=no_verify) for d in case_dirs]


def metrics_to_json(outcomes: Sequence[CaseOutcome]) -> str:
    results = [o.result for o in outcomes]

    def safe_accuracy(phase: str) -> float | None:
        try:
            return float(accuracy(results, phase))
        except EmptyDenominatorError:
            return None

    def mean_fp(values: list[Fraction]) -> float | None:
        return float(sum(values) / len(values)) if values else None

    data = {
        "schema_version": 1,
        "cases": [
            {
                "case_id": r.case_id,
                "stage1_correct": r.stage1_correct,
                "stage2_correct": r.stage2_correct,
                "suspect_count": r.suspect_count,
                "flow": r.flow,
                "fp_direct": None if r.fp_direct is None else float(r.fp_direct),
                "fp_verified": None if r.fp_verified is None else float(r.fp_verified),
            }
            for r in results
        ],
        "summary": {
            "accuracy": {phase: safe_accuracy(phase) for phase in ("stage1", "stage2", "direct", "indirect")},
            "mean_fp": {
                "direct_unverified": mean_fp([r.fp_direct for r in results if r.fp_direct is not None]),
                "verified": mean_fp([r.fp_verified for r in results if r.fp_verified is not None]),
            },
        },
    }
    return json.dumps(data, indent=2) + "\n"
