"""Declarative attack signatures and their evaluation over raw/normalized views.

Signature file (JSON array)::

    [{"id": "SS-IA-01", "cve": "CVE-2014-6271", "phase": "initial_access",
      "fidelity": "high", "description": "...", "sources": ["http"],
      "predicate": {"all": [{"match": {"path": "user_agent", "op": "contains",
                                       "value": "() { :; };"}}]}}]

Predicate paths always name *raw* fields. Against a normalized view, a match
on raw path ``p`` consults whatever target fields the template fed from
``p``; if the template does not carry ``p`` the match is false.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import (
    Any,
    Callable,
    Dict,
    Iterable,
    Iterator,
    List,
    Mapping,
    Optional,
    Sequence,
    Tuple,
    Union,
)

from .errors import BadRegex, DuplicateId, InvariantViolation, IoFailure, SignatureParse
from .normalize import NormalizedEvent, SchemaTemplate, normalize
from .sessions import CVE_RE, ExploitSession
from .telemetry import RawEvent, Scalar, Source


class Phase(str, Enum):
    INITIAL_ACCESS = "initial_access"
    EXECUTION = "execution"
    COMMAND_AND_CONTROL = "command_and_control"

    @property
    def label(self) -> str:
        return _PHASE_LABELS[self]

    @classmethod
    def parse(cls, text: str) -> "Phase":
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower().replace("-", "_").replace(" ", "_")
        key = _PHASE_ALIASES.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise SignatureParse(f"unknown phase {text!r}") from None


_PHASE_LABELS = {
    Phase.INITIAL_ACCESS: "Initial Access",
    Phase.EXECUTION: "Execution",
    Phase.COMMAND_AND_CONTROL: "C2",
}
_PHASE_ALIASES = {"c2": "command_and_control", "ia": "initial_access", "exec": "execution"}

PHASES: Tuple[Phase, ...] = tuple(Phase)


class Fidelity(str, Enum):
    HIGH = "high"
    LOW = "low"


# --------------------------------------------------------------------------
# predicates
# --------------------------------------------------------------------------

class MatchOp(str, Enum):
    EQUALS = "equals"
    CONTAINS = "contains"
    REGEX = "regex"
    GT = "gt"
    LT = "lt"
    EXISTS = "exists"


def _is_number(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


@dataclass(frozen=True)
class Match:
    path: str
    op: MatchOp
    value: Any = None
    _compiled: Optional[re.Pattern] = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if not self.path:
            raise SignatureParse("match path must be non-empty")
        if self.op is MatchOp.REGEX:
            if not isinstance(self.value, str):
                raise BadRegex(f"regex for {self.path!r} must be a string")
            try:
                object.__setattr__(self, "_compiled", re.compile(self.value))
            except re.error as exc:
                raise BadRegex(f"bad regex {self.value!r}: {exc}") from None
        elif self.op in (MatchOp.GT, MatchOp.LT) and not _is_number(self.value):
            raise SignatureParse(f"{self.op.value} on {self.path!r} needs a numeric value")
        elif self.op is MatchOp.CONTAINS and not isinstance(self.value, str):
            raise SignatureParse(f"contains on {self.path!r} needs a string value")

    def test(self, value: Any, present: bool) -> bool:
        """Total: type mismatches are non-matches, never errors."""
        if not present:
            return False
        op = self.op
        if op is MatchOp.EXISTS:
            return True
        if op is MatchOp.EQUALS:
            return type(value) is type(self.value) and value == self.value
        if op is MatchOp.CONTAINS:
            return isinstance(value, str) and self.value in value
        if op is MatchOp.REGEX:
            return isinstance(value, str) and self._compiled.search(value) is not None
        if not _is_number(value):
            return False
        return value > self.value if op is MatchOp.GT else value < self.value

    def leaves(self) -> Iterator["Match"]:
        yield self

    def to_dict(self) -> Dict[str, Any]:
        m: Dict[str, Any] = {"path": self.path, "op": self.op.value}
        if self.op is not MatchOp.EXISTS:
            m["value"] = self.value
        return {"match": m}


@dataclass(frozen=True)
class AllOf:
    children: Tuple["Predicate", ...] = ()

    def leaves(self) -> Iterator[Match]:
        for c in self.children:
            yield from c.leaves()

    def to_dict(self) -> Dict[str, Any]:
        return {"all": [c.to_dict() for c in self.children]}


@dataclass(frozen=True)
class AnyOf:
    children: Tuple["Predicate", ...] = ()

    def leaves(self) -> Iterator[Match]:
        for c in self.children:
            yield from c.leaves()

    def to_dict(self) -> Dict[str, Any]:
        return {"any": [c.to_dict() for c in self.children]}


Predicate = Union[AllOf, AnyOf, Match]

# a lookup returns every value visible for a raw path (empty -> absent)
Lookup = Callable[[str], Sequence[Scalar]]


def evaluate(pred: Predicate, lookup: Lookup) -> bool:
    if isinstance(pred, Match):
        values = lookup(pred.path)
        if pred.op is MatchOp.EXISTS:
            return bool(values)
        return any(pred.test(v, True) for v in values)
    if isinstance(pred, AllOf):
        return all(evaluate(c, lookup) for c in pred.children)
    if isinstance(pred, AnyOf):
        return any(evaluate(c, lookup) for c in pred.children)
    raise TypeError(f"not a predicate: {pred!r}")


def raw_lookup(event: RawEvent) -> Lookup:
    fields = event.fields

    def look(path: str) -> Sequence[Scalar]:
        return (fields[path],) if path in fields else ()

    return look


def normalized_lookup(norm: NormalizedEvent, template: SchemaTemplate) -> Lookup:
    fields = norm.fields

    def look(path: str) -> Sequence[Scalar]:
        return tuple(
            fields[r.target_path]
            for r in template.rules_for(norm.source, path)
            if r.target_path in fields
        )

    return look


def predicate_from_dict(obj: Any) -> Predicate:
    if not isinstance(obj, dict) or len(obj) != 1:
        raise SignatureParse(f"predicate node must be a one-key object, got {obj!r}")
    (key, body), = obj.items()
    if key in ("all", "any"):
        if not isinstance(body, list):
            raise SignatureParse(f"{key!r} expects a list")
        kids = tuple(predicate_from_dict(c) for c in body)
        return AllOf(kids) if key == "all" else AnyOf(kids)
    if key == "match":
        if not isinstance(body, dict) or "path" not in body or "op" not in body:
            raise SignatureParse("match needs 'path' and 'op'")
        try:
            op = MatchOp(body["op"])
        except ValueError:
            raise SignatureParse(f"unknown match op {body['op']!r}") from None
        if op is not MatchOp.EXISTS and "value" not in body:
            raise SignatureParse(f"match op {op.value!r} needs a value")
        return Match(str(body["path"]), op, body.get("value"))
    raise SignatureParse(f"unknown predicate node {key!r}")


# --------------------------------------------------------------------------
# signatures
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Signature:
    id: str
    cve: str
    phase: Phase
    fidelity: Fidelity
    description: str
    applicable_sources: frozenset
    predicate: Predicate

    def __post_init__(self) -> None:
        if not self.id:
            raise SignatureParse("signature id must be non-empty")
        if not CVE_RE.fullmatch(self.cve):
            raise SignatureParse(f"{self.id}: bad CVE identifier {self.cve!r}")
        if not self.applicable_sources:
            raise SignatureParse(f"{self.id}: no applicable sources")
        if next(self.predicate.leaves(), None) is None:
            raise SignatureParse(f"{self.id}: predicate has no match leaves")

    @property
    def high(self) -> bool:
        return self.fidelity is Fidelity.HIGH

    def applies_to(self, source: Source) -> bool:
        return source in self.applicable_sources

    def match_paths(self) -> Tuple[str, ...]:
        return tuple(sorted({m.path for m in self.predicate.leaves()}))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "cve": self.cve,
            "phase": self.phase.value,
            "fidelity": self.fidelity.value,
            "description": self.description,
            "sources": [s.value for s in Source if s in self.applicable_sources],
            "predicate": self.predicate.to_dict(),
        }

    @classmethod
    def from_dict(cls, obj: Any) -> "Signature":
        if not isinstance(obj, dict):
            raise SignatureParse("signature must be a JSON object")
        for key in ("id", "cve", "phase", "fidelity", "sources", "predicate"):
            if key not in obj:
                raise SignatureParse(f"signature lacks {key!r}")
        try:
            fidelity = Fidelity(str(obj["fidelity"]).lower())
        except ValueError:
            raise SignatureParse(f"unknown fidelity {obj['fidelity']!r}") from None
        if not isinstance(obj["sources"], list):
            raise SignatureParse("sources must be a list")
        try:
            sources = frozenset(Source(str(s).lower()) for s in obj["sources"])
        except ValueError:
            raise SignatureParse(f"unknown source in {obj['sources']!r}") from None
        return cls(
            id=str(obj["id"]),
            cve=str(obj["cve"]),
            phase=Phase.parse(obj["phase"]),
            fidelity=fidelity,
            description=str(obj.get("description", "")),
            applicable_sources=sources,
            predicate=predicate_from_dict(obj["predicate"]),
        )


class SignatureSet(Mapping[str, Signature]):
    """Signatures keyed by id, iterated in id order."""

    def __init__(self, signatures: Iterable[Signature] = ()):
        by_id: Dict[str, Signature] = {}
        for s in signatures:
            if s.id in by_id:
                raise DuplicateId(f"duplicate signature id {s.id!r}")
            by_id[s.id] = s
        self._by_id = dict(sorted(by_id.items()))

    def __getitem__(self, key: str) -> Signature:
        return self._by_id[key]

    def __iter__(self) -> Iterator[str]:
        return iter(self._by_id)

    def __len__(self) -> int:
        return len(self._by_id)

    def __repr__(self) -> str:
        return f"SignatureSet({len(self)} signatures)"

    def by_cve(self) -> Dict[str, Tuple[Signature, ...]]:
        out: Dict[str, List[Signature]] = {}
        for s in self._by_id.values():
            out.setdefault(s.cve, []).append(s)
        return {k: tuple(v) for k, v in sorted(out.items())}

    def for_cve(self, cve: str) -> Tuple[Signature, ...]:
        return tuple(s for s in self._by_id.values() if s.cve == cve)

    def merged(self, other: "SignatureSet") -> "SignatureSet":
        return SignatureSet(list(self.values()) + list(other.values()))

    def to_json(self) -> str:
        return json.dumps([s.to_dict() for s in self.values()], indent=2, ensure_ascii=False) + "\n"


def load_signatures(path: Union[str, Path]) -> SignatureSet:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise IoFailure(str(exc), path=str(path)) from None
    if not text.strip():
        return SignatureSet()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SignatureParse(f"invalid JSON: {exc.msg}", str(path), exc.lineno) from None
    if not isinstance(data, list):
        raise SignatureParse("signature file must hold a JSON array", str(path))
    sigs = []
    for i, obj in enumerate(data):
        try:
            sigs.append(Signature.from_dict(obj))
        except SignatureParse as exc:
            exc.message = f"entry {i}: {exc.message}"
            raise exc.with_context(str(path))
    try:
        return SignatureSet(sigs)
    except DuplicateId as exc:
        raise exc.with_context(str(path))


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RawResult:
    matched: bool
    matches: Tuple[int, ...]  # corpus indices of matching events

    def __bool__(self) -> bool:
        return self.matched


def evaluate_raw(sig: Signature, session: ExploitSession) -> RawResult:
    hits = tuple(
        idx
        for idx, ev in zip(session.event_ids, session.events)
        if sig.applies_to(ev.source) and evaluate(sig.predicate, raw_lookup(ev))
    )
    return RawResult(bool(hits), hits)


def normalize_session(session: ExploitSession, template: SchemaTemplate) -> Tuple[NormalizedEvent, ...]:
    return tuple(normalize(ev, template, session.cve) for ev in session.events)


def _normalized_hits(
    sig: Signature,
    session: ExploitSession,
    template: SchemaTemplate,
    normalized: Optional[Sequence[NormalizedEvent]] = None,
) -> Tuple[int, ...]:
    if normalized is None:
        normalized = normalize_session(session, template)
    return tuple(
        idx
        for idx, ne in zip(session.event_ids, normalized)
        if sig.applies_to(ne.source) and evaluate(sig.predicate, normalized_lookup(ne, template))
    )


def evaluate_normalized(
    sig: Signature,
    session: ExploitSession,
    template: SchemaTemplate,
    normalized: Optional[Sequence[NormalizedEvent]] = None,
) -> bool:
    return bool(_normalized_hits(sig, session, template, normalized))


# --------------------------------------------------------------------------
# ledger
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LedgerEntry:
    cve: str
    signature: Signature
    in_raw: bool
    preserved: Mapping[str, bool]
    raw_matches: Tuple[int, ...]
    normalized_matches: Mapping[str, Tuple[int, ...]]

    @property
    def signature_id(self) -> str:
        return self.signature.id

    @property
    def phase(self) -> Phase:
        return self.signature.phase

    @property
    def fidelity(self) -> Fidelity:
        return self.signature.fidelity


@dataclass(frozen=True)
class SignatureLedger:
    entries: Tuple[LedgerEntry, ...]
    schemas: Tuple[str, ...]
    sessions: Mapping[str, ExploitSession]
    unknown_cves: Tuple[str, ...] = ()

    def for_cve(self, cve: str) -> Tuple[LedgerEntry, ...]:
        return tuple(e for e in self.entries if e.cve == cve)

    def cves(self) -> Tuple[str, ...]:
        return tuple(sorted(self.sessions))

    def check(self) -> None:
        for e in self.entries:
            for schema, ok in e.preserved.items():
                if ok and not e.in_raw:
                    raise InvariantViolation(
                        f"{e.cve}/{e.signature_id}: preserved under {schema} but absent from raw"
                    )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schemas": list(self.schemas),
            "unknown_cves": list(self.unknown_cves),
            "entries": [
                {
                    "cve": e.cve,
                    "signature": e.signature_id,
                    "phase": e.phase.value,
                    "fidelity": e.fidelity.value,
                    "in_raw": e.in_raw,
                    "preserved": dict(e.preserved),
                    "raw_matches": list(e.raw_matches),
                }
                for e in self.entries
            ],
        }


def build_ledger(
    sessions: Iterable[ExploitSession],
    sigset: SignatureSet,
    templates: Mapping[str, SchemaTemplate],
) -> SignatureLedger:
    """Cross every session with its CVE's signatures and every template.

    Signatures whose CVE has no session are skipped and listed in
    ``unknown_cves``. Entries are ordered by (cve, signature id);
    ``preserved`` maps are ordered by schema id.
    """
    by_cve = {s.cve: s for s in sessions}
    schema_ids = tuple(sorted(templates))
    grouped = sigset.by_cve()
    unknown = tuple(c for c in grouped if c not in by_cve)

    entries: List[LedgerEntry] = []
    for cve in sorted(by_cve):
        sigs = grouped.get(cve, ())
        if not sigs:
            continue
        session = by_cve[cve]
        normalized = {sid: normalize_session(session, templates[sid]) for sid in schema_ids}
        for sig in sigs:
            raw = evaluate_raw(sig, session)
            preserved: Dict[str, bool] = {}
            norm_hits: Dict[str, Tuple[int, ...]] = {}
            for sid in schema_ids:
                hits = _normalized_hits(sig, session, templates[sid], normalized[sid]) if raw.matched else ()
                norm_hits[sid] = hits
                preserved[sid] = bool(hits)
            entries.append(LedgerEntry(cve, sig, raw.matched, preserved, raw.matches, norm_hits))
    return SignatureLedger(tuple(entries), schema_ids, dict(sorted(by_cve.items())), unknown)
