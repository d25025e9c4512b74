"""Stage 2, phases 2-3: LLM verification and indirect inference.

Three interchangeable backends sit behind one ``complete`` call: a remote
HTTP chat-completion endpoint (temperature pinned to 0, retried with
exponential backoff), a mock backend that replays scripted responses from
fixture files, and a local heuristic that needs no model at all. Prompts
are pure functions of their inputs and a template version, so runs against
the mock backend are bit-deterministic end to end.
"""

from __future__ import annotations

import json
import os
import re
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Protocol, Sequence

from .anomaly import KeyLogMessage
from .configs import ConfigSettings, PropertyCatalog
from .errors import (
    AuthFailureError,
    InconclusiveError,
    MissingFixtureError,
    NetworkFailureError,
    RateLimitedError,
)
from .matching import MatchSet, NameHit

PROMPT_VERSION = "v1"
DEFAULT_MODEL = "gpt-4-0613"
DEFAULT_SCORE_THRESHOLD = 50
DEFAULT_MAX_SUSPECTS = 3
DEFAULT_MAX_RETRIES = 3

# Hard cap on assembled user prompts; oldest key messages are evicted first.
MAX_PROMPT_CHARS = 120_000
_MESSAGE_EXCERPT_CHARS = 2_000

TASK_VERIFY = "verify"
TASK_INDIRECT = "indirect"

_ENTRY_LINE_RE = re.compile(r"^\s*ENTRY\s+(\d+)\s*:\s*SCORE\s*=\s*(-?\d+)\s*$", re.IGNORECASE)
_SUSPECT_LINE_RE = re.compile(r"^\s*SUSPECT\s+(\d+)\s*:\s*([^|]+?)\s*\|\s*(.+?)\s*$", re.IGNORECASE)


@dataclass(frozen=True)
class CompletionRequest:
    system_prompt: str
    user_prompt: str
    temperature: float = 0.0
    model_id: str = DEFAULT_MODEL
    max_retries: int = DEFAULT_MAX_RETRIES

    def __post_init__(self) -> None:
        if self.temperature != 0:
            raise ValueError("temperature must be 0; runs must be reproducible")


class Backend(Protocol):
    def complete(self, request: CompletionRequest, task: str) -> str: ...


def complete(backend: Backend, request: CompletionRequest, task: str) -> str:
    """Dispatch a request to a backend after validating the contract."""
    if request.temperature != 0:
        raise ValueError("temperature must be 0; runs must be reproducible")
    return backend.complete(request, task)


class MockBackend:
    """Replays scripted fixture text; one file per task key.

    Files are looked up as ``<key>-<task>.txt`` when a key is set, else
    ``<task>.txt``. Calls are counted per task for tests and flow audits.
    """

    def __init__(
        self,
        scripts: dict[str, str] | None = None,
        fixtures_dir: str | Path | None = None,
        key: str | None = None,
    ):
        self._scripts = dict(scripts or {})
        self._dir = Path(fixtures_dir) if fixtures_dir is not None else None
        self._key = key
        self.calls: dict[str, int] = {}

    @classmethod
    def from_dir(cls, fixtures_dir: str | Path, key: str | None = None) -> "MockBackend":
        return cls(fixtures_dir=fixtures_dir, key=key)

    def fixture_name(self, task: str) -> str:
        return f"{self._key}-{task}" if self._key else task

    def complete(self, request: CompletionRequest, task: str) -> str:
        self.calls[task] = self.calls.get(task, 0) + 1
        name = self.fixture_name(task)
        if name in self._scripts:
            return self._scripts[name]
        if task in self._scripts:
            return self._scripts[task]
        if self._dir is not None:
            path = self._dir / f"{name}.txt"
            if path.exists():
                return path.read_text(encoding="utf-8")
        raise MissingFixtureError(f"no scripted response for task key {name!r}")


class HeuristicBackend:
    """Local stand-in; never fails and never produces text."""

    def complete(self, request: CompletionRequest, task: str) -> str:
        return ""


def _default_transport(url: str, headers: dict[str, str], body: bytes, timeout: float) -> tuple[int, bytes]:
    req = urllib.request.Request(url, data=body, headers=headers, method="POST")
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return resp.status, resp.read()
    except urllib.error.HTTPError as exc:
        return exc.code, exc.read()
    except (urllib.error.URLError, OSError) as exc:
        raise NetworkFailureError(f"request to {url} failed: {exc}") from exc


class RemoteBackend:
    """Vendor-agnostic HTTP chat-completion client.

    Sends {model, temperature, messages} to ``<base>/chat/completions``
    with a bearer key. Rate limits and 5xx responses are retried with
    exponential backoff up to the request's retry budget; auth failures
    are surfaced immediately.
    """

    def __init__(
        self,
        api_base: str | None = None,
        api_key: str | None = None,
        timeout: float = 60.0,
        transport: Callable[[str, dict[str, str], bytes, float], tuple[int, bytes]] | None = None,
        sleeper: Callable[[float], None] = time.sleep,
        backoff_base: float = 1.0,
    ):
        self.api_base = (api_base or os.environ.get("LLM_API_BASE") or "https://api.openai.com/v1").rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get("LLM_API_KEY", "")
        self.timeout = timeout
        self._transport = transport or _default_transport
        self._sleep = sleeper
        self._backoff_base = backoff_base

    def complete(self, request: CompletionRequest, task: str) -> str:
        url = f"{self.api_base}/chat/completions"
        headers = {
            "Content-Type": "application/json",
            "Authorization": f"Bearer {self.api_key}",
        }
        body = json.dumps(
            {
                "model": request.model_id,
                "temperature": request.temperature,
                "messages": [
                    {"role": "system", "content": request.system_prompt},
                    {"role": "user", "content": request.user_prompt},
                ],
            }
        ).encode("utf-8")

        last_error: Exception | None = None
        for attempt in range(request.max_retries + 1):
            if attempt:
                self._sleep(self._backoff_base * (2 ** (attempt - 1)))
            try:
                status, payload = self._transport(url, headers, body, self.timeout)
            except NetworkFailureError as exc:
                last_error = exc
                continue
            if status in (401, 403):
                raise AuthFailureError(f"endpoint rejected credentials (HTTP {status})")
            if status == 429:
                last_error = RateLimitedError("endpoint rate-limited the request (HTTP 429)")
                continue
            if status >= 500:
                last_error = NetworkFailureError(f"endpoint returned HTTP {status}")
                continue
            if status != 200:
                raise NetworkFailureError(f"endpoint returned HTTP {status}")
            try:
                parsed = json.loads(payload.decode("utf-8"))
                return parsed["choices"][0]["message"]["content"]
            except (KeyError, IndexError, ValueError) as exc:
                raise NetworkFailureError(f"endpoint returned an unparseable body: {exc}") from exc
        assert last_error is not None
        raise last_error


def _load_prompt_asset(name: str) -> str:
    return resources.files("confloc.prompts").joinpath(name).read_text(encoding="utf-8")


def _excerpt(text: str, limit: int = _MESSAGE_EXCERPT_CHARS) -> str:
    return text if len(text) <= limit else text[:limit] + "..."


@dataclass(frozen=True)
class VerificationVerdict:
    """Per-entry plausibility scores from the verification task."""

    per_entry: tuple[tuple[int, int, bool], ...]
    passed: bool
    threshold: int
    warnings: tuple[str, ...] = ()

    def plausible_indices(self) -> list[int]:
        return [idx for idx, _, plausible in self.per_entry if plausible]


@dataclass(frozen=True)
class Suspect:
    property: str
    value: str | None
    explanation: str
    rank: int

    def __post_init__(self) -> None:
        if not self.explanation:
            raise ValueError("suspect explanation must be non-empty")
        if self.rank < 1:
            raise ValueError("suspect rank is 1-based")


class SuspectOrigin:
    VERIFICATION = "verification"
    INDIRECT_INFERENCE = "indirect-inference"


@dataclass(frozen=True)
class SuspectSet:
    suspects: tuple[Suspect, ...]
    origin_phase: str
    max_suspects: int = DEFAULT_MAX_SUSPECTS
    warnings: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if len(self.suspects) > self.max_suspects:
            raise ValueError("suspect set exceeds its size bound")


def build_verify_prompt(
    matches: MatchSet,
    catalog: PropertyCatalog,
    prompt_version: str = PROMPT_VERSION,
    model_id: str = DEFAULT_MODEL,
) -> CompletionRequest:
    """One prompt enumerating every matched entry with its description."""
    system = _load_prompt_asset(f"verify_system_{prompt_version}.txt")
    blocks = []
    for i, match in enumerate(matches, start=1):
        description = catalog.description_of(match.entry.property) or "(no description available)"
        blocks.append(
            "\n".join(
                (
                    f"ENTRY {i}:",
                    f"  LOG MESSAGE: {_excerpt(match.key_message.record.message)}",
                    f"  PROPERTY: {match.entry.property}",
                    f"  VALUE: {match.entry.value}",
                    f"  DESCRIPTION: {description}",
                    f"  MATCH KIND: {match.kind.kind_label}",
                )
            )
        )
    return CompletionRequest(
        system_prompt=system, user_prompt="\n\n".join(blocks), model_id=model_id
    )


def verify(
    matches: MatchSet,
    catalog: PropertyCatalog,
    backend: Backend,
    threshold: int = DEFAULT_SCORE_THRESHOLD,
    prompt_version: str = PROMPT_VERSION,
    model_id: str = DEFAULT_MODEL,
) -> VerificationVerdict:
    """Binary-classify each matched entry; pass when any entry is plausible.

    Output lines that fail to parse score 0 with a warning; a fully
    malformed response fails the verdict (fail-open toward indirect
    inference) rather than raising.
    """
    if not matches:
        raise ValueError("verification requires a non-empty match set")
    request = build_verify_prompt(matches, catalog, prompt_version, model_id)
    response = complete(backend, request, TASK_VERIFY)

    scores: dict[int, int] = {}
    warnings: list[str] = []
    for line in response.splitlines():
        m = _ENTRY_LINE_RE.match(line)
        if not m:
            continue
        idx, score = int(m.group(1)), int(m.group(2))
        if not 1 <= idx <= len(matches) or idx in scores:
            continue
        if not 0 <= score <= 100:
            warnings.append(f"entry {idx}: score {score} clamped into 0-100")
            score = min(max(score, 0), 100)
        scores[idx] = score

    if not scores:
        warnings.append("verification output malformed; no score lines parsed, treating as failed")
        per_entry = tuple((i, 0, False) for i in range(1, len(matches) + 1))
        return VerificationVerdict(per_entry=per_entry, passed=False, threshold=threshold, warnings=tuple(warnings))

    per_entry = []
    for i in range(1, len(matches) + 1):
        if i not in scores:
            warnings.append(f"entry {i}: no parseable score line, defaulting to 0")
        score = scores.get(i, 0)
        per_entry.append((i, score, score >= threshold))
    passed = any(plausible for _, _, plausible in per_entry)
    return VerificationVerdict(
        per_entry=tuple(per_entry), passed=passed, threshold=threshold, warnings=tuple(warnings)
    )


def build_indirect_prompt(
    msgs: Sequence[KeyLogMessage],
    settings: ConfigSettings,
    catalog: PropertyCatalog,
    max_suspects: int = DEFAULT_MAX_SUSPECTS,
    prompt_version: str = PROMPT_VERSION,
    model_id: str = DEFAULT_MODEL,
) -> tuple[CompletionRequest, list[str]]:
    """Prompt with key messages (stack included), settings, and descriptions.

    When the assembled prompt exceeds the hard size cap, the oldest key
    messages are evicted first; evictions are reported as warnings.
    """
    system = _load_prompt_asset(f"indirect_system_{prompt_version}.txt").replace(
        "{max_suspects}", str(max_suspects)
    )
    warnings: list[str] = []
    kept = list(msgs)
    while True:
        sections = ["KEY LOG MESSAGES:"]
        for i, msg in enumerate(kept, start=1):
            sections.append(f"MESSAGE {i}: {_excerpt(msg.record.message)}")
            for stack_line in msg.record.stack_lines:
                sections.append(f"    {stack_line.strip()}")
        sections.append("")
        sections.append("CONFIGURATION SETTINGS:")
        for entry in settings.entries:
            sections.append(f"{entry.property}={entry.value}")
        sections.append("")
        sections.append("PROPERTY DESCRIPTIONS:")
        for entry in settings.entries:
            description = catalog.description_of(entry.property)
            if description:
                sections.append(f"{entry.property}: {description}")
        user = "\n".join(sections)
        if len(user) <= MAX_PROMPT_CHARS or len(kept) <= 1:
            break
        kept.pop(0)
        warnings.append("prompt size cap exceeded; evicted the oldest key message")
    return CompletionRequest(system_prompt=system, user_prompt=user, model_id=model_id), warnings


def infer_indirect(
    msgs: Sequence[KeyLogMessage],
    settings: ConfigSettings,
    catalog: PropertyCatalog,
    backend: Backend,
    max_suspects: int = DEFAULT_MAX_SUSPECTS,
    prompt_version: str = PROMPT_VERSION,
    model_id: str = DEFAULT_MODEL,
) -> SuspectSet:
    """Ask the backend to pick suspects from the provided settings.

    Suspects naming unknown properties are dropped with a warning and ranks
    are reassigned densely; zero surviving suspects is an Inconclusive
    error for the caller to report.
    """
    request, warnings = build_indirect_prompt(
        msgs, settings, catalog, max_suspects, prompt_version, model_id
    )
    response = complete(backend, request, TASK_INDIRECT)

    known = settings.property_names()
    suspects: list[Suspect] = []
    seen: set[str] = set()
    for line in response.splitlines():
        m = _SUSPECT_LINE_RE.match(line)
        if not m:
            continue
        name, explanation = m.group(2).strip(), m.group(3).strip()
        if name not in known:
            warnings.append(f"dropped suspect {name!r}: not in the provided settings")
            continue
        if name in seen or not explanation:
            continue
        seen.add(name)
        entry = settings.lookup(name)
        suspects.append(
            Suspect(
                property=name,
                value=entry.value if entry else None,
                explanation=explanation,
                rank=len(suspects) + 1,
            )
        )
        if len(suspects) == max_suspects:
            break
    if not suspects:
        raise InconclusiveError(
            "indirect inference produced no valid suspect from the provided settings"
        )
    return SuspectSet(
        suspects=tuple(suspects),
        origin_phase=SuspectOrigin.INDIRECT_INFERENCE,
        max_suspects=max_suspects,
        warnings=tuple(warnings),
    )


def heuristic_verify(matches: MatchSet) -> SuspectSet:
    """No-LLM fallback: the property matching the most key messages wins.

    Ties break toward more name hits, then lexicographically.
    """
    if not matches:
        raise ValueError("heuristic verification requires a non-empty match set")
    message_counts: dict[str, set] = {}
    name_hits: dict[str, int] = {}
    values: dict[str, str] = {}
    for match in matches:
        name = match.entry.property
        message_counts.setdefault(name, set()).add(match.key_message.record.origin)
        if isinstance(match.kind, NameHit):
            name_hits[name] = name_hits.get(name, 0) + 1
        values.setdefault(name, match.entry.value)
    winner = min(
        message_counts,
        key=lambda name: (-len(message_counts[name]), -name_hits.get(name, 0), name),
    )
    suspect = Suspect(
        property=winner,
        value=values[winner],
        explanation="heuristic: most anomalous log matches",
        rank=1,
    )
    return SuspectSet(suspects=(suspect,), origin_phase=SuspectOrigin.VERIFICATION, max_suspects=1)
