"""Log parsing: raw lines to structured records plus mined templates.

Each input line is classified as the start of a log event or as a stack
continuation. Stack continuations attach to the nearest preceding record
and never take part in template mining. Messages are grouped with a
fixed-depth parse tree (length, then leading tokens, then token-similarity
clustering); positions that vary within a group become the ``<*>``
placeholder and the displaced tokens are kept per record as run-time
variables.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_U64 = 0xFFFFFFFFFFFFFFFF

PLACEHOLDER = "<*>"

#: Hadoop-style header: timestamp, level, component, then the free message.
DEFAULT_HEADER_PATTERN = (
    r"^(?P<timestamp>\d{4}-\d{2}-\d{2}[ T]\d{2}:\d{2}:\d{2}(?:[.,]\d+)?)\s+"
    r"(?P<level>TRACE|DEBUG|INFO|WARN|ERROR|FATAL)\s+"
    r"(?:(?P<component>[A-Za-z][\w.$\[\]-]*):\s+)?"
)

_STACK_AT_RE = re.compile(r"^\s+at\s")
_STACK_MORE_RE = re.compile(r"^\s*\.\.\. \d+ more")


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a over a byte sequence."""
    h = FNV64_OFFSET
    for b in data:
        h = ((h ^ b) * FNV64_PRIME) & _U64
    return h


def canonicalize_pattern(pattern: str) -> str:
    """Trim and collapse internal whitespace so equal templates collide."""
    return " ".join(pattern.split())


def template_hash(pattern: str) -> int:
    """Stable 64-bit hash of a template pattern (canonicalized first)."""
    return fnv1a64(canonicalize_pattern(pattern).encode("utf-8"))


class LineKind(enum.Enum):
    LOG_START = "log-start"
    STACK_CONTINUATION = "stack-continuation"


@dataclass(frozen=True)
class RawLine:
    """One raw input line with its source locus."""

    file_id: str
    line_no: int
    text: str


@dataclass(frozen=True)
class Header:
    timestamp: str
    level: str
    component: str


@dataclass(frozen=True)
class LogRecord:
    """One parsed log event: optional header, message, attached stack lines."""

    header: Header | None
    message: str
    stack_lines: tuple[str, ...]
    template_id: int
    variables: tuple[str, ...]
    origin: tuple[str, int]


@dataclass(frozen=True)
class LogTemplate:
    """The constant pattern shared by a group of records."""

    pattern: str
    hash: int
    support: int


@dataclass(frozen=True)
class ParsedLog:
    """All records of one parse invocation plus the mined template table."""

    records: tuple[LogRecord, ...]
    templates: dict[int, LogTemplate]
    config_fingerprint: int

    def variable_text(self, record: LogRecord) -> str:
        """Space-joined run-time variables plus stack lines of a record."""
        return " ".join(list(record.variables) + list(record.stack_lines))


@dataclass(frozen=True)
class ParserConfig:
    """Parse-tree and header settings; fingerprinted for store compatibility."""

    depth: int = 4
    similarity: float = 0.4
    max_children: int = 100
    header_pattern: str = DEFAULT_HEADER_PATTERN

    def __post_init__(self) -> None:
        if self.depth < 3:
            raise ValueError("parse tree depth must be at least 3")
        if not 0.0 < self.similarity <= 1.0:
            raise ValueError("similarity threshold must be in (0, 1]")
        if self.max_children < 1:
            raise ValueError("max children per node must be positive")
        re.compile(self.header_pattern)

    def fingerprint(self) -> int:
        key = f"{self.depth}|{self.similarity!r}|{self.max_children}|{self.header_pattern}"
        return fnv1a64(key.encode("utf-8"))

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> "ParserConfig":
        """Load settings from a TOML or JSON file; keyword overrides win."""
        raw = Path(path).read_bytes()
        if str(path).endswith(".toml"):
            try:
                import tomllib as toml_loader  # Python >= 3.11
            except ImportError:
                import tomli as toml_loader
            data = toml_loader.loads(raw.decode("utf-8"))
        else:
            data = json.loads(raw.decode("utf-8"))
        if not isinstance(data, dict):
            raise ValueError(f"parser config file {path} must hold a table/object")
        data = dict(data.get("parser", data))
        data.update(overrides)
        allowed = {"depth", "similarity", "max_children", "header_pattern"}
        unknown = set(data) - allowed
        if unknown:
            raise ValueError(f"unknown parser config keys: {sorted(unknown)}")
        return cls(**data)


def classify_line(line: RawLine, prev: LineKind | None = None) -> LineKind:
    """Decide whether a line starts a log event or continues a stack trace.

    The rules are context-free; ``prev`` is accepted for callers that track
    it but does not influence the current rules.
    """
    del prev
    text = line.text
    if _STACK_AT_RE.match(text):
        return LineKind.STACK_CONTINUATION
    if text.startswith("Caused by:"):
        return LineKind.STACK_CONTINUATION
    if _STACK_MORE_RE.match(text):
        return LineKind.STACK_CONTINUATION
    return LineKind.LOG_START


class _Group:
    __slots__ = ("tokens", "count")

    def __init__(self, tokens: list[str]):
        self.tokens = tokens
        self.count = 1


class _Node:
    __slots__ = ("children", "groups")

    def __init__(self):
        self.children: dict[object, _Node] = {}
        self.groups: list[_Group] | None = None


class _TemplateMiner:
    """Fixed-depth parse tree: length level, token levels, then clustering."""

    def __init__(self, config: ParserConfig):
        self._config = config
        self._root = _Node()
        self.groups: list[_Group] = []

    def add(self, message: str) -> _Group:
        tokens = message.split()
        node = self._descend(tokens)
        if node.groups is None:
            node.groups = []

        best: _Group | None = None
        best_sim = 0.0
        for group in node.groups:
            sim = self._similarity(tokens, group.tokens)
            if sim >= self._config.similarity and sim > best_sim:
                best_sim = sim
                best = group

        if best is None:
            best = _Group(list(tokens))
            node.groups.append(best)
            self.groups.append(best)
        else:
            best.count += 1
            for i, token in enumerate(tokens):
                if best.tokens[i] != token:
                    best.tokens[i] = PLACEHOLDER
        return best

    def _descend(self, tokens: list[str]) -> _Node:
        node = self._child(self._root, len(tokens))
        for depth in range(self._config.depth - 2):
            if depth >= len(tokens):
                key: object = None
            else:
                token = tokens[depth]
                key = PLACEHOLDER if any(ch.isdigit() for ch in token) else token
            if key not in node.children and len(node.children) >= self._config.max_children:
                key = PLACEHOLDER
            node = self._child(node, key)
        return node

    @staticmethod
    def _child(node: _Node, key: object) -> _Node:
        child = node.children.get(key)
        if child is None:
            child = _Node()
            node.children[key] = child
        return child

    @staticmethod
    def _similarity(tokens: list[str], template: list[str]) -> float:
        if not tokens:
            return 1.0
        same = sum(1 for a, b in zip(tokens, template) if a == b)
        return same / len(tokens)


def parse_log_file(lines: Sequence[RawLine] | Iterable[RawLine], config: ParserConfig) -> ParsedLog:
    """Parse one file's lines into records and mined templates.

    Every log-start line yields one record; stack continuations attach to
    the nearest preceding record (a synthetic headerless record is created
    when a file opens mid-stack). Templates are mined from messages only.
    """
    header_re = re.compile(config.header_pattern)

    drafts: list[dict] = []
    for raw in lines:
        kind = classify_line(raw)
        if kind is LineKind.STACK_CONTINUATION:
            if not drafts:
                drafts.append(
                    {"header": None, "message": "", "stack": [], "origin": (raw.file_id, raw.line_no)}
                )
            drafts[-1]["stack"].append(raw.text)
            continue
        match = header_re.match(raw.text)
        if match:
            header = Header(
                timestamp=match.group("timestamp") or "",
                level=match.group("level") or "",
                component=match.group("component") or "",
            )
            message = raw.text[match.end():].strip()
        else:
            header = None
            message = raw.text.strip()
        drafts.append(
            {"header": header, "message": message, "stack": [], "origin": (raw.file_id, raw.line_no)}
        )

    miner = _TemplateMiner(config)
    memberships = [miner.add(draft["message"]) for draft in drafts]

    # Groups can converge to one pattern; aggregate supports by final hash.
    patterns: dict[int, tuple[str, int]] = {}
    for group in miner.groups:
        pattern = canonicalize_pattern(" ".join(group.tokens))
        h = template_hash(pattern)
        prior = patterns.get(h)
        patterns[h] = (pattern, group.count + (prior[1] if prior else 0))
    templates = {h: LogTemplate(pattern=p, hash=h, support=n) for h, (p, n) in patterns.items()}

    records = []
    for draft, group in zip(drafts, memberships):
        message_tokens = draft["message"].split()
        variables = tuple(
            tok for tok, tpl in zip(message_tokens, group.tokens) if tpl == PLACEHOLDER
        )
        records.append(
            LogRecord(
                header=draft["header"],
                message=draft["message"],
                stack_lines=tuple(draft["stack"]),
                template_id=template_hash(" ".join(group.tokens)),
                variables=variables,
                origin=draft["origin"],
            )
        )

    return ParsedLog(
        records=tuple(records),
        templates=templates,
        config_fingerprint=config.fingerprint(),
    )


def read_raw_lines(path: str | Path) -> list[RawLine]:
    """Read a log file as RawLines; undecodable bytes become U+FFFD."""
    file_id = str(path)
    out = []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for i, line in enumerate(fh, start=1):
            out.append(RawLine(file_id=file_id, line_no=i, text=line.rstrip("\r\n")))
    return out


def parse_path(path: str | Path, config: ParserConfig) -> ParsedLog:
    return parse_log_file(read_raw_lines(path), config)


def merge_parsed(parts: Sequence[ParsedLog]) -> ParsedLog:
    """Combine independently parsed files; supports accumulate by hash."""
    if not parts:
        raise ValueError("merge_parsed needs at least one ParsedLog")
    fingerprint = parts[0].config_fingerprint
    for part in parts[1:]:
        if part.config_fingerprint != fingerprint:
            raise ValueError("cannot merge ParsedLogs from different parser configs")
    records: list[LogRecord] = []
    merged: dict[int, LogTemplate] = {}
    for part in parts:
        records.extend(part.records)
        for h, template in part.templates.items():
            prior = merged.get(h)
            support = template.support + (prior.support if prior else 0)
            merged[h] = LogTemplate(pattern=template.pattern, hash=h, support=support)
    return ParsedLog(records=tuple(records), templates=merged, config_fingerprint=fingerprint)
