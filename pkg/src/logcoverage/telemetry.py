"""Raw telemetry records and JSONL corpus loading.

One raw record per line::

    {"ts": "2024-01-01T00:00:00.000Z", "host": "target", "source": "process",
     "fields": {"pid": 812, "ppid": 400, "exe": "/bin/bash", ...}}

Field values are scalars (str, int, bool). Nested objects inside ``fields``
are flattened to dotted paths (``{"headers": {"cookie": "x"}}`` becomes
``headers.cookie``).
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from enum import Enum
from pathlib import Path
from types import MappingProxyType
from typing import Any, Dict, Iterable, List, Mapping, Tuple, Union

from .errors import (
    BadTimestamp,
    CorpusEmpty,
    IoFailure,
    MalformedRecord,
    MissingMandatoryField,
)

logger = logging.getLogger(__name__)

Scalar = Union[str, int, bool]

ENVELOPE_KEYS = ("ts", "host", "source", "fields")


class Source(str, Enum):
    NETWORK = "network"
    HTTP = "http"
    PROCESS = "process"

    @classmethod
    def parse(cls, value: str) -> "Source":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise MalformedRecord(f"unknown source {value!r}") from None


MANDATORY_FIELDS: Dict[Source, Tuple[str, ...]] = {
    Source.NETWORK: ("src_ip", "dst_ip", "src_port", "dst_port", "proto", "bytes_in", "bytes_out"),
    Source.HTTP: ("method", "url_path", "status", "user_agent"),
    Source.PROCESS: ("pid", "ppid", "exe", "cmdline", "user"),
}

_TS_RE = re.compile(
    r"^(\d{4})-(\d{2})-(\d{2})T(\d{2}):(\d{2}):(\d{2})\.(\d{3})(Z|\+00:00)$"
)


def parse_timestamp(text: Any) -> datetime:
    """Parse an RFC3339 UTC timestamp with exactly millisecond precision."""
    if not isinstance(text, str):
        raise BadTimestamp(f"timestamp must be a string, got {type(text).__name__}")
    m = _TS_RE.match(text)
    if not m:
        raise BadTimestamp(f"not an RFC3339 UTC millisecond timestamp: {text!r}")
    y, mo, d, h, mi, s, ms = (int(g) for g in m.groups()[:7])
    try:
        return datetime(y, mo, d, h, mi, s, ms * 1000, tzinfo=timezone.utc)
    except ValueError as exc:
        raise BadTimestamp(f"{text!r}: {exc}") from None


def format_timestamp(ts: datetime) -> str:
    ts = ts.astimezone(timezone.utc)
    return ts.strftime("%Y-%m-%dT%H:%M:%S.") + f"{ts.microsecond // 1000:03d}Z"


def _flatten(prefix: str, value: Any, out: Dict[str, Scalar]) -> None:
    if isinstance(value, dict):
        if not value:
            raise MalformedRecord(f"empty object at field {prefix!r}")
        for k, v in value.items():
            if not isinstance(k, str) or not _valid_path(k):
                raise MalformedRecord(f"bad field name {k!r} under {prefix!r}")
            _flatten(f"{prefix}.{k}", v, out)
        return
    # bool is an int subclass; floats and nulls are rejected
    if isinstance(value, (str, int)):
        if prefix in out:
            raise MalformedRecord(f"field {prefix!r} given twice")
        out[prefix] = value
        return
    raise MalformedRecord(
        f"field {prefix!r} has non-scalar value of type {type(value).__name__}"
    )


def _valid_path(path: str) -> bool:
    return bool(path) and all(path.split("."))


@dataclass(frozen=True)
class RawEvent:
    ts: datetime
    host: str
    source: Source
    fields: Mapping[str, Scalar] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "fields", MappingProxyType(dict(self.fields)))

    def get(self, path: str, default: Any = None) -> Any:
        return self.fields.get(path, default)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "ts": format_timestamp(self.ts),
            "host": self.host,
            "source": self.source.value,
            "fields": dict(self.fields),
        }

    def __reduce__(self):
        return (RawEvent, (self.ts, self.host, self.source, dict(self.fields)))


def validate_event(event: RawEvent) -> RawEvent:
    if not event.host:
        raise MalformedRecord("host must be a non-empty string")
    for path in event.fields:
        if not _valid_path(path):
            raise MalformedRecord(f"bad field path {path!r}")
    missing = [f for f in MANDATORY_FIELDS[event.source] if f not in event.fields]
    if missing:
        raise MissingMandatoryField(
            f"{event.source.value} record lacks mandatory field(s): {', '.join(missing)}"
        )
    return event


def event_from_dict(obj: Any) -> RawEvent:
    if not isinstance(obj, dict):
        raise MalformedRecord("record is not a JSON object")
    keys = set(obj)
    if keys != set(ENVELOPE_KEYS):
        extra = sorted(keys - set(ENVELOPE_KEYS))
        missing = sorted(set(ENVELOPE_KEYS) - keys)
        raise MalformedRecord(f"envelope mismatch (missing={missing}, extra={extra})")
    host = obj["host"]
    if not isinstance(host, str):
        raise MalformedRecord("host must be a string")
    if not isinstance(obj["source"], str):
        raise MalformedRecord("source must be a string")
    if not isinstance(obj["fields"], dict):
        raise MalformedRecord("fields must be an object")
    ts = parse_timestamp(obj["ts"])
    flat: Dict[str, Scalar] = {}
    for k, v in obj["fields"].items():
        if not isinstance(k, str) or not _valid_path(k):
            raise MalformedRecord(f"bad field path {k!r}")
        _flatten(k, v, flat)
    return validate_event(RawEvent(ts, host, Source.parse(obj["source"]), flat))


def parse_raw_event(line: Union[str, bytes]) -> RawEvent:
    """Parse one JSONL line into a validated :class:`RawEvent`."""
    if isinstance(line, bytes):
        try:
            line = line.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedRecord(f"not UTF-8: {exc}") from None
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(f"invalid JSON: {exc.msg}") from None
    return event_from_dict(obj)


def serialize_event(event: RawEvent) -> str:
    """One canonical JSONL line (no trailing newline)."""
    return json.dumps(event.to_dict(), ensure_ascii=False, separators=(",", ":"))


@dataclass(frozen=True)
class SkippedLine:
    line: int
    reason: str


@dataclass(frozen=True)
class EventCorpus:
    events: Tuple[RawEvent, ...]
    origin: str = ""
    skipped: Tuple[SkippedLine, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "events", tuple(self.events))
        for a, b in zip(self.events, self.events[1:]):
            if b.ts < a.ts:
                raise ValueError("corpus events must be in non-decreasing ts order")

    @classmethod
    def from_events(cls, events: Iterable[RawEvent], origin: str = "") -> "EventCorpus":
        """Stable-sort arbitrary events by timestamp."""
        return cls(tuple(sorted(events, key=lambda e: e.ts)), origin)

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def __getitem__(self, i: int) -> RawEvent:
        return self.events[i]

    @property
    def skip_count(self) -> int:
        return len(self.skipped)

    def source_counts(self) -> Dict[Source, int]:
        counts = {s: 0 for s in Source}
        for e in self.events:
            counts[e.source] += 1
        return counts

    def to_jsonl(self) -> str:
        return "".join(serialize_event(e) + "\n" for e in self.events)


def load_corpus(path: Union[str, Path]) -> EventCorpus:
    """Load a JSONL corpus, skipping (and counting) malformed lines.

    Blank lines are ignored. Output is sorted by (ts, line number).
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IoFailure(str(exc), path=str(path)) from None

    parsed: List[Tuple[datetime, int, RawEvent]] = []
    skipped: List[SkippedLine] = []
    for lineno, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            ev = parse_raw_event(line)
        except MalformedRecord as exc:
            skipped.append(SkippedLine(lineno, f"{type(exc).__name__}: {exc.message}"))
            logger.debug("%s:%d skipped: %s", path, lineno, exc.message)
            continue
        parsed.append((ev.ts, lineno, ev))

    if skipped:
        logger.warning("%s: skipped %d malformed line(s)", path, len(skipped))
    if not parsed:
        raise CorpusEmpty("no valid events", path=str(path))
    parsed.sort(key=lambda t: (t[0], t[1]))
    return EventCorpus(tuple(ev for _, _, ev in parsed), str(path), tuple(skipped))


def write_corpus(corpus: Union[EventCorpus, Iterable[RawEvent]], path: Union[str, Path]) -> None:
    events = corpus.events if isinstance(corpus, EventCorpus) else tuple(corpus)
    Path(path).write_text("".join(serialize_event(e) + "\n" for e in events), encoding="utf-8")


def ms(n: int) -> timedelta:
    return timedelta(milliseconds=n)
