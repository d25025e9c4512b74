"""Stage 1: specific-template extraction, anomaly scoring, key-message recovery.

A template is "specific" when its hash is absent from the fault-free store.
Each specific template is scored by summing the weights of diagnostic
tokens present in its pattern; each token's weight counts once no matter
how often it occurs. A bundle of logs is anomalous as soon as one specific
template scores above zero. For each such template the single record whose
run-time variables (plus stack lines) score highest is recovered as the
"key log message" handed to stage 2.

Weights are exact scaled integers (granularity 1e-6) so tie-breaking and
oracle comparisons never depend on float rounding.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping

from .errors import ConfigMismatchError
from .parsing import LogRecord, LogTemplate, ParsedLog
from .store import TemplateStore


def token_present(text_lower: str, token: str) -> bool:
    """Whole-token containment: boundaries are non-alphanumeric characters.

    Both arguments are expected pre-lowercased. "false" is present in
    "false," and in "is_false" but not in "falsehood".
    """
    start = 0
    n = len(token)
    while True:
        idx = text_lower.find(token, start)
        if idx < 0:
            return False
        before_ok = idx == 0 or not text_lower[idx - 1].isalnum()
        after = idx + n
        after_ok = after >= len(text_lower) or not text_lower[after].isalnum()
        if before_ok and after_ok:
            return True
        start = idx + 1

WEIGHT_SCALE = 10**6

DEFAULT_TOKEN_WEIGHT = "0.1"
DEFAULT_TOKENS = (
    "error",
    "exception",
    "invalid",
    "failure",
    "disable",
    "false",
    "fault",
    "warn",
    "because",
    "exit",
)


def weight_to_micros(weight: object) -> int:
    """Convert a weight (int/float/str/Decimal/Fraction) to scaled integer units."""
    if isinstance(weight, int):
        micros = weight * WEIGHT_SCALE
    elif isinstance(weight, Fraction):
        scaled_fraction = weight * WEIGHT_SCALE
        if scaled_fraction.denominator != 1:
            raise ValueError(f"weight {weight} is finer than the 1e-6 granularity")
        micros = scaled_fraction.numerator
    else:
        scaled = Decimal(str(weight)) * WEIGHT_SCALE
        if scaled != scaled.to_integral_value():
            raise ValueError(f"weight {weight} is finer than the 1e-6 granularity")
        micros = int(scaled)
    if micros < 0:
        raise ValueError(f"weight {weight} is negative")
    return micros


@dataclass(frozen=True, order=True)
class AnomalyDegree:
    """Weighted-token score; ordered and compared on exact integer units."""

    micros: int

    def __post_init__(self) -> None:
        if self.micros < 0:
            raise ValueError("anomaly degree cannot be negative")

    @property
    def value(self) -> Fraction:
        return Fraction(self.micros, WEIGHT_SCALE)

    def __float__(self) -> float:
        return self.micros / WEIGHT_SCALE

    def is_positive(self) -> bool:
        return self.micros > 0


ZERO_DEGREE = AnomalyDegree(0)


class WeightedTokenSet:
    """Diagnostic tokens with non-negative weights.

    Tokens must be lowercase, non-empty, and whitespace-free; weights are
    stored as exact multiples of 1e-6.
    """

    def __init__(self, weights: Mapping[str, object] | Iterable[tuple[str, object]]):
        pairs = weights.items() if isinstance(weights, Mapping) else weights
        micros: dict[str, int] = {}
        for token, weight in pairs:
            if not token or token != token.lower() or any(ch.isspace() for ch in token):
                raise ValueError(
                    f"token {token!r} must be lowercase, non-empty, and whitespace-free"
                )
            micros[token] = weight_to_micros(weight)
        self._micros = micros

    @classmethod
    def default(cls) -> "WeightedTokenSet":
        return cls({token: DEFAULT_TOKEN_WEIGHT for token in DEFAULT_TOKENS})

    @classmethod
    def from_file(cls, path: str | Path) -> "WeightedTokenSet":
        """Load a JSON array of [token, weight] pairs."""
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(data, list):
            raise ValueError(f"token set file {path} must hold a JSON array of pairs")
        return cls([(str(t), w) for t, w in data])

    def items(self) -> list[tuple[str, int]]:
        return list(self._micros.items())

    def weight_micros(self, token: str) -> int:
        return self._micros[token]

    def total_micros(self) -> int:
        return sum(self._micros.values())

    def __len__(self) -> int:
        return len(self._micros)

    def degree_micros(self, text: str) -> int:
        lowered = text.lower()
        total = 0
        for token, micros in self._micros.items():
            if token_present(lowered, token):
                total += micros
        return total


def anomaly_degree(text: str, tokens: WeightedTokenSet) -> AnomalyDegree:
    """Sum the weights of tokens present in the text.

    Presence is case-insensitive and bounded by non-alphanumeric characters
    on both sides, so "false," scores but "falsehood" does not. Multiple
    occurrences of one token still add its weight once.
    """
    return AnomalyDegree(tokens.degree_micros(text))


class VerdictKind(enum.Enum):
    FAULT_FREE = "fault-free"
    ANOMALOUS = "anomalous"


@dataclass(frozen=True)
class KeyLogMessage:
    """Per specific template, the record with the highest variable score."""

    record: LogRecord
    template_degree: AnomalyDegree
    variable_degree: AnomalyDegree


@dataclass(frozen=True)
class IdentificationVerdict:
    kind: VerdictKind
    key_messages: tuple[KeyLogMessage, ...]
    specific_template_count: int


def extract_specific(parsed: ParsedLog, store: TemplateStore) -> frozenset[LogTemplate]:
    """Templates of the parsed bundle whose hash is absent from the store."""
    if parsed.config_fingerprint != store.parser_config_fingerprint:
        raise ConfigMismatchError(
            "parsed log fingerprint does not match the store's parser config"
        )
    return frozenset(t for h, t in parsed.templates.items() if not store.contains(h))


def recover_key_messages(
    specific: Iterable[LogTemplate],
    parsed: ParsedLog,
    tokens: WeightedTokenSet,
) -> list[KeyLogMessage]:
    """One key message per positive-degree specific template.

    The chosen record maximizes the degree of its variables plus stack
    lines; ties go to the earliest (file, line). Output is ordered by
    descending template degree, then origin.
    """
    by_template: dict[int, list[LogRecord]] = {}
    for record in parsed.records:
        by_template.setdefault(record.template_id, []).append(record)

    chosen: list[KeyLogMessage] = []
    for template in specific:
        template_degree = anomaly_degree(template.pattern, tokens)
        if not template_degree.is_positive():
            continue
        records = by_template.get(template.hash, [])
        if not records:
            continue
        best = min(
            records,
            key=lambda r: (-tokens.degree_micros(parsed.variable_text(r)), r.origin),
        )
        chosen.append(
            KeyLogMessage(
                record=best,
                template_degree=template_degree,
                variable_degree=anomaly_degree(parsed.variable_text(best), tokens),
            )
        )
    chosen.sort(key=lambda k: (-k.template_degree.micros, k.record.origin))
    return chosen


def classify(
    parsed: ParsedLog,
    store: TemplateStore,
    tokens: WeightedTokenSet,
) -> IdentificationVerdict:
    """Stage-1 verdict: fault-free unless a specific template scores above zero."""
    specific = extract_specific(parsed, store)
    key_messages = recover_key_messages(specific, parsed, tokens)
    kind = VerdictKind.ANOMALOUS if key_messages else VerdictKind.FAULT_FREE
    return IdentificationVerdict(
        kind=kind,
        key_messages=tuple(key_messages),
        specific_template_count=len(specific),
    )
