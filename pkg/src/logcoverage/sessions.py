"""CVE session tagging from attack-host timing records.

Each attack record names a CVE, its start/end time and the attacker/target
hosts. An event belongs to the record's session when its host is one of the
two and its timestamp falls inside ``[start - pre_slack, end + post_slack]``.
When windows overlap, the record with the earlier start claims the event.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from datetime import datetime, timedelta
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from .errors import InvalidAttackRecord, IoFailure, LogCoverageError
from .telemetry import EventCorpus, RawEvent, format_timestamp, parse_timestamp

CVE_RE = re.compile(r"CVE-\d{4}-\d{4,}")

DEFAULT_PRE_SLACK = timedelta(seconds=2)
DEFAULT_POST_SLACK = timedelta(seconds=5)

ATTACK_RECORD_KEYS = ("cve", "start_ts", "end_ts", "attacker_host", "target_host", "service")


class VulnClass(str, Enum):
    WEB = "web"
    SERVICE = "service"

    @property
    def label(self) -> str:
        return self.value.capitalize()


@dataclass(frozen=True)
class AttackRecord:
    cve: str
    start_ts: datetime
    end_ts: datetime
    attacker_host: str
    target_host: str
    service: str

    def __post_init__(self) -> None:
        if not CVE_RE.fullmatch(self.cve):
            raise InvalidAttackRecord(f"bad CVE identifier {self.cve!r}")
        if not self.start_ts < self.end_ts:
            raise InvalidAttackRecord(f"{self.cve}: start_ts must precede end_ts")
        if not self.attacker_host or not self.target_host:
            raise InvalidAttackRecord(f"{self.cve}: empty host name")

    @property
    def hosts(self) -> frozenset:
        return frozenset((self.attacker_host, self.target_host))

    def to_dict(self) -> dict:
        return {
            "cve": self.cve,
            "start_ts": format_timestamp(self.start_ts),
            "end_ts": format_timestamp(self.end_ts),
            "attacker_host": self.attacker_host,
            "target_host": self.target_host,
            "service": self.service,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "AttackRecord":
        if not isinstance(obj, dict):
            raise InvalidAttackRecord("attack record is not a JSON object")
        missing = [k for k in ATTACK_RECORD_KEYS if k not in obj]
        if missing:
            raise InvalidAttackRecord(f"attack record lacks key(s): {', '.join(missing)}")
        for k in ("cve", "attacker_host", "target_host", "service"):
            if not isinstance(obj[k], str):
                raise InvalidAttackRecord(f"{k} must be a string")
        try:
            start, end = parse_timestamp(obj["start_ts"]), parse_timestamp(obj["end_ts"])
        except LogCoverageError as exc:
            raise InvalidAttackRecord(exc.message) from None
        return cls(obj["cve"], start, end, obj["attacker_host"], obj["target_host"], obj["service"])


def load_attack_records(path: Union[str, Path]) -> List[AttackRecord]:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise IoFailure(str(exc), path=str(path)) from None
    records = []
    seen = set()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = AttackRecord.from_dict(json.loads(line))
        except json.JSONDecodeError as exc:
            raise InvalidAttackRecord(f"invalid JSON: {exc.msg}", str(path), lineno) from None
        except LogCoverageError as exc:
            raise exc.with_context(str(path), lineno)
        if rec.cve in seen:
            raise InvalidAttackRecord(f"duplicate CVE {rec.cve}", str(path), lineno)
        seen.add(rec.cve)
        records.append(rec)
    if not records:
        raise InvalidAttackRecord("no attack records", str(path))
    return records


def write_attack_records(records: Iterable[AttackRecord], path: Union[str, Path]) -> None:
    Path(path).write_text(
        "".join(json.dumps(r.to_dict(), separators=(",", ":")) + "\n" for r in records),
        encoding="utf-8",
    )


def classify_vuln_class(session_or_service: Union["ExploitSession", AttackRecord, str]) -> VulnClass:
    """Web iff the service label is ``HTTP`` (case-insensitive), else Service."""
    if isinstance(session_or_service, str):
        service = session_or_service
    else:
        service = session_or_service.service
    return VulnClass.WEB if service.strip().lower() == "http" else VulnClass.SERVICE


@dataclass(frozen=True)
class ExploitSession:
    record: AttackRecord
    window: Tuple[datetime, datetime]
    event_ids: Tuple[int, ...]
    events: Tuple[RawEvent, ...]
    vuln_class: VulnClass

    @property
    def cve(self) -> str:
        return self.record.cve

    @property
    def service(self) -> str:
        return self.record.service

    @property
    def hosts(self) -> frozenset:
        return self.record.hosts


@dataclass(frozen=True)
class OverlapConflict:
    first: str
    second: str
    hosts: Tuple[str, str]


@dataclass(frozen=True)
class TaggingResult:
    sessions: Tuple[ExploitSession, ...]
    untagged: Tuple[int, ...]
    conflicts: Tuple[OverlapConflict, ...]

    @property
    def untagged_count(self) -> int:
        return len(self.untagged)

    def by_cve(self) -> Dict[str, ExploitSession]:
        return {s.cve: s for s in self.sessions}


def _window(rec: AttackRecord, pre: timedelta, post: timedelta) -> Tuple[datetime, datetime]:
    return rec.start_ts - pre, rec.end_ts + post


def build_sessions(
    records: Sequence[AttackRecord],
    corpus: EventCorpus,
    slack: Tuple[timedelta, timedelta] = (DEFAULT_PRE_SLACK, DEFAULT_POST_SLACK),
) -> TaggingResult:
    """Assign every in-window, on-host event to exactly one session.

    Returns sessions sorted by CVE, the corpus indices left untagged and the
    (non-fatal) list of overlapping windows on the same host pair.
    """
    if not records:
        raise InvalidAttackRecord("no attack records")
    pre, post = slack
    if pre < timedelta(0) or post < timedelta(0):
        raise InvalidAttackRecord("slack must be non-negative")
    cves = [r.cve for r in records]
    if len(set(cves)) != len(cves):
        raise InvalidAttackRecord("duplicate CVE among attack records")

    # claim priority: earlier start first; cve breaks ties
    ordered = sorted(records, key=lambda r: (r.start_ts, r.cve))
    windows = {r.cve: _window(r, pre, post) for r in ordered}

    conflicts: List[OverlapConflict] = []
    for i, a in enumerate(ordered):
        for b in ordered[i + 1:]:
            if a.hosts != b.hosts:
                continue
            (a0, a1), (b0, b1) = windows[a.cve], windows[b.cve]
            if a0 <= b1 and b0 <= a1:
                conflicts.append(OverlapConflict(a.cve, b.cve, tuple(sorted(a.hosts))))

    assigned: Dict[str, List[int]] = {r.cve: [] for r in ordered}
    untagged: List[int] = []
    for idx, ev in enumerate(corpus.events):
        for rec in ordered:
            lo, hi = windows[rec.cve]
            if lo <= ev.ts <= hi and ev.host in rec.hosts:
                assigned[rec.cve].append(idx)
                break
        else:
            untagged.append(idx)

    sessions = tuple(
        ExploitSession(
            record=rec,
            window=windows[rec.cve],
            event_ids=tuple(assigned[rec.cve]),
            events=tuple(corpus.events[i] for i in assigned[rec.cve]),
            vuln_class=classify_vuln_class(rec.service),
        )
        for rec in sorted(records, key=lambda r: r.cve)
    )
    return TaggingResult(sessions, tuple(untagged), tuple(conflicts))


def session_from_events(
    record: AttackRecord, events: Sequence[RawEvent], event_ids: Optional[Sequence[int]] = None
) -> ExploitSession:
    """Wrap already-attributed events as a session (no window filtering)."""
    ids = tuple(event_ids) if event_ids is not None else tuple(range(len(events)))
    return ExploitSession(
        record=record,
        window=(record.start_ts, record.end_ts),
        event_ids=ids,
        events=tuple(events),
        vuln_class=classify_vuln_class(record.service),
    )
