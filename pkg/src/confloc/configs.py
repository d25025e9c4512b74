"""Configuration settings, property catalog, and the hot-term filter.

Settings load from Hadoop-style XML property files or flat ``key=value``
files. The catalog carries every known property name plus its
documentation description; the hot-term filter is the top-k most frequent
period-separated name segments across the catalog, excluded from name
matching to cut false positives.
"""

from __future__ import annotations

import enum
import json
import xml.etree.ElementTree as ET
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from .errors import DuplicatePropertyError, EmptySegmentError, MalformedConfigError

DEFAULT_HOT_K = 20


class EntrySource(enum.Enum):
    USER_DEFINED = "user-defined"
    FABRICATED = "fabricated"


class SettingsFormat(enum.Enum):
    XML_PROPERTIES = "xml"
    FLAT_KEY_VALUE = "flat"


@dataclass(frozen=True)
class ConfigEntry:
    property: str
    value: str
    source: EntrySource = EntrySource.USER_DEFINED

    def __post_init__(self) -> None:
        segment_name(self.property)


@dataclass(frozen=True)
class ConfigSettings:
    """Ordered configuration entries; names unique within each source."""

    entries: tuple[ConfigEntry, ...]

    def __post_init__(self) -> None:
        seen: set[tuple[EntrySource, str]] = set()
        for entry in self.entries:
            key = (entry.source, entry.property)
            if key in seen:
                raise DuplicatePropertyError(
                    f"property {entry.property!r} appears twice in the {entry.source.value} settings"
                )
            seen.add(key)

    def property_names(self) -> set[str]:
        return {entry.property for entry in self.entries}

    def lookup(self, name: str) -> ConfigEntry | None:
        for entry in self.entries:
            if entry.property == name:
                return entry
        return None

    def merged_with(self, other: "ConfigSettings") -> "ConfigSettings":
        return ConfigSettings(entries=self.entries + other.entries)


def segment_name(property_name: str) -> list[str]:
    """Split a dotted property name on periods, preserving casing."""
    if not property_name:
        raise EmptySegmentError("property name is empty")
    segments = property_name.split(".")
    if any(not seg for seg in segments):
        raise EmptySegmentError(f"property name {property_name!r} has an empty segment")
    return segments


def load_settings(
    path: str | Path,
    format: SettingsFormat | None = None,
    source: EntrySource = EntrySource.USER_DEFINED,
) -> ConfigSettings:
    """Load a settings file; format defaults by extension (.xml or flat)."""
    path = Path(path)
    if format is None:
        format = SettingsFormat.XML_PROPERTIES if path.suffix == ".xml" else SettingsFormat.FLAT_KEY_VALUE
    text = path.read_text(encoding="utf-8", errors="replace")
    if format is SettingsFormat.XML_PROPERTIES:
        pairs = _parse_xml_properties(text, str(path))
    else:
        pairs = _parse_flat(text, str(path))
    entries = []
    seen = set()
    for name, value in pairs:
        if name in seen:
            raise DuplicatePropertyError(f"duplicate property {name!r} in {path}")
        seen.add(name)
        entries.append(ConfigEntry(property=name, value=value, source=source))
    return ConfigSettings(entries=tuple(entries))


def _parse_xml_properties(text: str, locus: str) -> list[tuple[str, str]]:
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise MalformedConfigError(f"cannot parse XML settings: {exc}", locus=locus) from exc
    pairs = []
    for i, prop in enumerate(root.iter("property"), start=1):
        name = (prop.findtext("name") or "").strip()
        if not name:
            raise MalformedConfigError(
                f"property element #{i} has no <name>", locus=locus
            )
        value = (prop.findtext("value") or "").strip()
        pairs.append((name, value))
    return pairs


def _parse_flat(text: str, locus: str) -> list[tuple[str, str]]:
    pairs = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise MalformedConfigError(
                f"line {line_no} is not key=value", locus=locus
            )
        name, value = stripped.split("=", 1)
        name = name.strip()
        if not name:
            raise MalformedConfigError(f"line {line_no} has an empty key", locus=locus)
        pairs.append((name, value.strip()))
    return pairs


@dataclass(frozen=True)
class PropertyCatalog:
    """Known property names plus their documentation descriptions."""

    universe: tuple[str, ...]
    descriptions: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        known = set(self.universe)
        for name in self.descriptions:
            if name not in known:
                raise MalformedConfigError(
                    f"described property {name!r} is not in the catalog universe"
                )

    @classmethod
    def from_json(cls, path: str | Path) -> "PropertyCatalog":
        """Load a JSON array of {"name": ..., "description": ...} objects."""
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(data, list):
            raise MalformedConfigError(f"catalog {path} must hold a JSON array")
        universe = []
        descriptions = {}
        for i, item in enumerate(data, start=1):
            if not isinstance(item, dict) or "name" not in item:
                raise MalformedConfigError(f"catalog entry #{i} lacks a name", locus=str(path))
            name = str(item["name"])
            segment_name(name)
            if name not in descriptions:
                universe.append(name)
            descriptions[name] = str(item.get("description", ""))
        return cls(universe=tuple(universe), descriptions=descriptions)

    @classmethod
    def empty(cls) -> "PropertyCatalog":
        return cls(universe=(), descriptions={})

    def description_of(self, name: str) -> str:
        return self.descriptions.get(name, "")


@dataclass(frozen=True)
class HotTermFilter:
    """Top-k most frequent name segments, excluded from name matching."""

    terms: frozenset[str]
    k: int

    def __post_init__(self) -> None:
        if len(self.terms) > self.k:
            raise ValueError("hot-term filter holds more terms than its size bound")

    @classmethod
    def empty(cls) -> "HotTermFilter":
        return cls(terms=frozenset(), k=0)

    def is_hot(self, segment: str) -> bool:
        return segment.lower() in self.terms


def build_hot_filter(catalog: PropertyCatalog, k: int = DEFAULT_HOT_K) -> HotTermFilter:
    """Count lowercase segments across the catalog universe and keep the top k.

    Ties at the cut are broken lexicographically ascending.
    """
    if not catalog.universe:
        raise ValueError("cannot build a hot-term filter from an empty universe")
    if k <= 0:
        return HotTermFilter(terms=frozenset(), k=max(k, 0))
    counts: Counter[str] = Counter()
    for name in catalog.universe:
        for segment in segment_name(name):
            counts[segment.lower()] += 1
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    return HotTermFilter(terms=frozenset(term for term, _ in ranked[:k]), k=k)
