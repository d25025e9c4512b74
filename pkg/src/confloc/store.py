"""Persistent store of fault-free log template hashes.

Membership is exact: a may-fault template is "specific" when its hash is
absent here. The on-disk format is a single self-describing file:

    magic "CFLT" | version u16 | parser fingerprint u64 | entry count u64 |
    entries sorted by ascending hash (hash u64, support u64,
    pattern length u32, pattern utf-8) | crc32 u32 of everything before

Identical ingest sequences produce byte-identical files.
"""

from __future__ import annotations

import os
import struct
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigMismatchError, CorruptStoreError, VersionMismatchError
from .parsing import ParsedLog, template_hash

MAGIC = b"CFLT"
FORMAT_VERSION = 1

_HEADER = struct.Struct(">4sHQQ")
_ENTRY_FIXED = struct.Struct(">QQI")
_CRC = struct.Struct(">I")


@dataclass
class StoreEntry:
    pattern: str
    support: int


@dataclass
class TemplateStore:
    """Hash-keyed template table tied to one parser configuration."""

    parser_config_fingerprint: int
    entries: dict[int, StoreEntry] = field(default_factory=dict)
    created_at: float = field(default_factory=time.time, compare=False)

    def ingest(self, parsed: ParsedLog) -> int:
        """Union the parsed templates into the store; returns new-template count.

        Supports accumulate for templates already present.
        """
        if parsed.config_fingerprint != self.parser_config_fingerprint:
            raise ConfigMismatchError(
                "parsed log fingerprint does not match the store's parser config"
            )
        added = 0
        for h, template in parsed.templates.items():
            entry = self.entries.get(h)
            if entry is None:
                self.entries[h] = StoreEntry(pattern=template.pattern, support=template.support)
                added += 1
            else:
                entry.support += template.support
        return added

    def contains(self, hash_value: int) -> bool:
        return hash_value in self.entries

    def persist(self, path: str | Path) -> None:
        """Write the store atomically (temp file + rename)."""
        payload = self._serialize()
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(payload)
        os.replace(tmp, path)

    def _serialize(self) -> bytes:
        out = bytearray()
        out += _HEADER.pack(MAGIC, FORMAT_VERSION, self.parser_config_fingerprint, len(self.entries))
        for h in sorted(self.entries):
            entry = self.entries[h]
            pattern = entry.pattern.encode("utf-8")
            out += _ENTRY_FIXED.pack(h, entry.support, len(pattern))
            out += pattern
        out += _CRC.pack(zlib.crc32(bytes(out)))
        return bytes(out)

    @classmethod
    def load(cls, path: str | Path) -> "TemplateStore":
        data = Path(path).read_bytes()
        if len(data) < _HEADER.size + _CRC.size:
            raise CorruptStoreError(f"store file {path} is truncated")
        magic, version, fingerprint, count = _HEADER.unpack_from(data, 0)
        if magic != MAGIC:
            raise CorruptStoreError(f"store file {path} has bad magic bytes")
        if version != FORMAT_VERSION:
            raise VersionMismatchError(
                f"store file {path} has format version {version}; expected {FORMAT_VERSION}"
            )
        (crc,) = _CRC.unpack_from(data, len(data) - _CRC.size)
        if zlib.crc32(data[: -_CRC.size]) != crc:
            raise CorruptStoreError(f"store file {path} failed its checksum")

        entries: dict[int, StoreEntry] = {}
        offset = _HEADER.size
        end = len(data) - _CRC.size
        for _ in range(count):
            if offset + _ENTRY_FIXED.size > end:
                raise CorruptStoreError(f"store file {path} ends mid-entry")
            h, support, pattern_len = _ENTRY_FIXED.unpack_from(data, offset)
            offset += _ENTRY_FIXED.size
            if offset + pattern_len > end:
                raise CorruptStoreError(f"store file {path} ends mid-pattern")
            pattern = data[offset : offset + pattern_len].decode("utf-8")
            offset += pattern_len
            if template_hash(pattern) != h:
                raise CorruptStoreError(
                    f"store file {path}: stored pattern does not rehash to its key"
                )
            entries[h] = StoreEntry(pattern=pattern, support=support)
        if offset != end:
            raise CorruptStoreError(f"store file {path} has trailing bytes")
        return cls(parser_config_fingerprint=fingerprint, entries=entries)
