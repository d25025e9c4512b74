"""Stage 2, phase 1: rule-based matching of properties against key messages.

Name matching works on period-separated segments: a property matches a key
message when its full dotted name appears in the message, or when at least
one segment outside the hot-term filter occurs as a whole token. Value
matching is a raw substring search, deliberately permissive (a value of
"0" will match inside "50020"); the verification phase exists to weed
those out. Stack lines never participate in either strategy.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

from .anomaly import KeyLogMessage, token_present
from .configs import ConfigEntry, ConfigSettings, HotTermFilter, segment_name


@dataclass(frozen=True)
class NameHit:
    matched_segments: tuple[str, ...]
    full_name_hit: bool

    kind_label = "name"


@dataclass(frozen=True)
class ValueHit:
    matched_span: tuple[int, int]

    kind_label = "value"


MatchKind = Union[NameHit, ValueHit]


@dataclass(frozen=True)
class MatchedEntry:
    key_message: KeyLogMessage
    entry: ConfigEntry
    kind: MatchKind

    def sort_key(self) -> tuple:
        return (self.key_message.record.origin, self.entry.property, self.kind.kind_label)

    def identity(self) -> tuple:
        """Dedup key: (message origin, property, match kind)."""
        return (self.key_message.record.origin, self.entry.property, self.kind.kind_label)


@dataclass(frozen=True)
class MatchSet:
    matches: tuple[MatchedEntry, ...]

    def __len__(self) -> int:
        return len(self.matches)

    def __bool__(self) -> bool:
        return bool(self.matches)

    def __iter__(self):
        return iter(self.matches)

    def properties(self) -> list[str]:
        """Distinct matched property names, first-seen order."""
        seen: list[str] = []
        for match in self.matches:
            if match.entry.property not in seen:
                seen.append(match.entry.property)
        return seen

    def for_property(self, name: str) -> list[MatchedEntry]:
        return [m for m in self.matches if m.entry.property == name]


def match_names(
    msgs: Sequence[KeyLogMessage],
    settings: ConfigSettings,
    hot: HotTermFilter,
) -> list[MatchedEntry]:
    """Segment-level name matching over message text (stack lines excluded)."""
    out: list[MatchedEntry] = []
    for msg in msgs:
        text = msg.record.message
        lowered = text.lower()
        for entry in settings.entries:
            segments = segment_name(entry.property)
            non_hot = [s for s in segments if not hot.is_hot(s)]
            if not non_hot:
                continue
            if entry.property.lower() in lowered:
                out.append(
                    MatchedEntry(msg, entry, NameHit(tuple(non_hot), full_name_hit=True))
                )
                continue
            matched = [s for s in non_hot if token_present(lowered, s.lower())]
            if matched:
                out.append(
                    MatchedEntry(msg, entry, NameHit(tuple(matched), full_name_hit=False))
                )
    return out


def match_values(
    msgs: Sequence[KeyLogMessage],
    settings: ConfigSettings,
) -> list[MatchedEntry]:
    """Raw substring search for each non-empty value (stack lines excluded)."""
    out: list[MatchedEntry] = []
    for msg in msgs:
        text = msg.record.message
        for entry in settings.entries:
            value = entry.value.strip()
            if not value:
                continue
            idx = text.find(value)
            if idx >= 0:
                out.append(
                    MatchedEntry(msg, entry, ValueHit(matched_span=(idx, idx + len(value))))
                )
    return out


def run_direct(
    msgs: Sequence[KeyLogMessage],
    settings: ConfigSettings,
    hot: HotTermFilter,
    use_names: bool = True,
    use_values: bool = True,
) -> MatchSet:
    """Deduplicated union of both strategies in deterministic order."""
    candidates: list[MatchedEntry] = []
    if use_names:
        candidates.extend(match_names(msgs, settings, hot))
    if use_values:
        candidates.extend(match_values(msgs, settings))
    deduped: dict[tuple, MatchedEntry] = {}
    for match in candidates:
        deduped.setdefault(match.identity(), match)
    ordered = sorted(deduped.values(), key=MatchedEntry.sort_key)
    return MatchSet(matches=tuple(ordered))
