"""Template-driven normalization of raw events into logging-standard views.

A template maps raw field paths to schema field paths per source class.
Normalization keeps only what the template maps; everything else is
listed in ``NormalizedEvent.dropped``. A raw path may feed several targets
(e.g. a verbatim copy and a truncated copy); a target is fed by exactly one
rule.

The bundled CIM/OCSF/ECS templates are approximations limited to each
standard's required-field core as relevant to network, HTTP and process
telemetry. They are not the official field lists.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from importlib import resources
from pathlib import Path
from types import MappingProxyType
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from .errors import (
    DuplicateTarget,
    TemplateMismatch,
    TemplateParse,
    UnknownTransform,
)
from .telemetry import RawEvent, Scalar, Source, format_timestamp

DEFAULT_SCHEMAS = ("cim", "ocsf", "ecs")


class TransformKind(str, Enum):
    COPY = "copy"
    TRUNCATE = "truncate"
    LOWERCASE = "lowercase"
    DROP = "drop"


@dataclass(frozen=True)
class Transform:
    kind: TransformKind = TransformKind.COPY
    n: Optional[int] = None

    _TRUNC_RE = re.compile(r"^truncate\((\d+)\)$")

    def __post_init__(self) -> None:
        if self.kind is TransformKind.TRUNCATE:
            if not isinstance(self.n, int) or self.n < 1:
                raise UnknownTransform(f"truncate needs n >= 1, got {self.n!r}")
        elif self.n is not None:
            raise UnknownTransform(f"{self.kind.value} takes no parameter")

    @classmethod
    def parse(cls, text: Any) -> "Transform":
        if text is None:
            return cls()
        if not isinstance(text, str):
            raise UnknownTransform(f"transform must be a string, got {text!r}")
        m = cls._TRUNC_RE.match(text.strip())
        if m:
            return cls(TransformKind.TRUNCATE, int(m.group(1)))
        try:
            kind = TransformKind(text.strip())
        except ValueError:
            raise UnknownTransform(f"unknown transform {text!r}") from None
        if kind is TransformKind.TRUNCATE:
            raise UnknownTransform("truncate requires a length, e.g. truncate(64)")
        return cls(kind)

    def __str__(self) -> str:
        if self.kind is TransformKind.TRUNCATE:
            return f"truncate({self.n})"
        return self.kind.value

    @property
    def drops(self) -> bool:
        return self.kind is TransformKind.DROP

    def apply(self, value: Scalar) -> Scalar:
        # string transforms leave non-strings untouched
        if self.kind is TransformKind.TRUNCATE and isinstance(value, str):
            return value[: self.n]
        if self.kind is TransformKind.LOWERCASE and isinstance(value, str):
            return value.lower()
        return value


@dataclass(frozen=True)
class FieldRule:
    raw_path: str
    target_path: str
    required: bool = False
    transform: Transform = field(default_factory=Transform)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "raw_path": self.raw_path,
            "target_path": self.target_path,
            "required": self.required,
            "transform": str(self.transform),
        }


@dataclass(frozen=True)
class SchemaTemplate:
    schema_id: str
    version: str
    classes: Mapping[Source, Tuple[FieldRule, ...]]

    def __post_init__(self) -> None:
        if not self.classes:
            raise TemplateParse(f"template {self.schema_id!r} defines no classes")
        frozen = {}
        for source, rules in self.classes.items():
            rules = tuple(rules)
            seen = set()
            for r in rules:
                if r.target_path in seen:
                    raise DuplicateTarget(
                        f"{self.schema_id}/{source.value}: target {r.target_path!r} mapped twice"
                    )
                seen.add(r.target_path)
            frozen[source] = rules
        object.__setattr__(self, "classes", MappingProxyType(frozen))
        index: Dict[Source, Dict[str, Tuple[FieldRule, ...]]] = {}
        for source, rules in frozen.items():
            by_raw: Dict[str, List[FieldRule]] = {}
            for r in rules:
                if not r.transform.drops:
                    by_raw.setdefault(r.raw_path, []).append(r)
            index[source] = {k: tuple(v) for k, v in by_raw.items()}
        object.__setattr__(self, "_index", index)

    def rules_for(self, source: Source, raw_path: str) -> Tuple[FieldRule, ...]:
        """Non-dropping rules that carry ``raw_path``; empty if unmapped."""
        return self._index.get(source, {}).get(raw_path, ())

    def has_class(self, source: Source) -> bool:
        return source in self.classes

    def required_targets(self, source: Source) -> Tuple[str, ...]:
        return tuple(r.target_path for r in self.classes.get(source, ()) if r.required)

    def rule_count(self) -> int:
        return sum(len(r) for r in self.classes.values())

    def with_rules(self, source: Source, rules: Iterable[FieldRule], schema_id: Optional[str] = None) -> "SchemaTemplate":
        classes = dict(self.classes)
        classes[source] = tuple(classes.get(source, ())) + tuple(rules)
        return SchemaTemplate(schema_id or self.schema_id, self.version, classes)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema_id": self.schema_id,
            "version": self.version,
            "classes": {
                s.value: [r.to_dict() for r in self.classes[s]]
                for s in Source
                if s in self.classes
            },
        }

    @classmethod
    def from_dict(cls, obj: Any) -> "SchemaTemplate":
        if not isinstance(obj, dict):
            raise TemplateParse("template must be a JSON object")
        for key in ("schema_id", "version", "classes"):
            if key not in obj:
                raise TemplateParse(f"template lacks {key!r}")
        schema_id, version, raw_classes = obj["schema_id"], obj["version"], obj["classes"]
        if not isinstance(schema_id, str) or not schema_id:
            raise TemplateParse("schema_id must be a non-empty string")
        if not isinstance(version, str):
            raise TemplateParse("version must be a string")
        if not isinstance(raw_classes, dict) or not raw_classes:
            raise TemplateParse("classes must be a non-empty object")
        classes: Dict[Source, Tuple[FieldRule, ...]] = {}
        for name, rules in raw_classes.items():
            try:
                source = Source(name)
            except ValueError:
                raise TemplateParse(f"unknown class {name!r}") from None
            if not isinstance(rules, list):
                raise TemplateParse(f"class {name!r} must be a list of rules")
            parsed = []
            for r in rules:
                if not isinstance(r, dict):
                    raise TemplateParse(f"class {name!r}: rule is not an object")
                raw_path, target = r.get("raw_path"), r.get("target_path")
                if not isinstance(raw_path, str) or not raw_path:
                    raise TemplateParse(f"class {name!r}: rule lacks raw_path")
                if not isinstance(target, str) or not target:
                    raise TemplateParse(f"class {name!r}: rule lacks target_path")
                required = r.get("required", False)
                if not isinstance(required, bool):
                    raise TemplateParse(f"{name}/{target}: required must be a boolean")
                parsed.append(FieldRule(raw_path, target, required, Transform.parse(r.get("transform", "copy"))))
            classes[source] = tuple(parsed)
        return cls(schema_id, version, classes)


def load_template(path: Union[str, Path]) -> SchemaTemplate:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise TemplateParse(f"cannot read template: {exc}", path=str(path)) from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TemplateParse(f"invalid JSON: {exc.msg}", str(path), exc.lineno) from None
    try:
        return SchemaTemplate.from_dict(obj)
    except TemplateParse as exc:
        raise exc.with_context(str(path))


def load_templates(directory: Union[str, Path], schemas: Optional[Sequence[str]] = None) -> Dict[str, SchemaTemplate]:
    """Load every ``*.json`` template in ``directory`` keyed by schema_id.

    With ``schemas`` given, each requested id must be present.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise TemplateParse("template directory not found", path=str(directory))
    found: Dict[str, SchemaTemplate] = {}
    for p in sorted(directory.glob("*.json")):
        t = load_template(p)
        if t.schema_id in found:
            raise TemplateParse(f"schema_id {t.schema_id!r} defined twice", path=str(p))
        found[t.schema_id] = t
    if schemas is None:
        return dict(sorted(found.items()))
    missing = [s for s in schemas if s not in found]
    if missing:
        raise TemplateParse(f"no template for schema(s): {', '.join(missing)}", path=str(directory))
    return {s: found[s] for s in schemas}


def default_templates(schemas: Sequence[str] = DEFAULT_SCHEMAS) -> Dict[str, SchemaTemplate]:
    """The bundled CIM/OCSF/ECS templates."""
    out = {}
    pkg = resources.files("logcoverage") / "templates"
    for s in schemas:
        res = pkg / f"{s}.json"
        if not res.is_file():
            raise TemplateParse(f"no bundled template for {s!r}")
        out[s] = SchemaTemplate.from_dict(json.loads(res.read_text(encoding="utf-8")))
    return out


def default_template_dir() -> Path:
    return Path(str(resources.files("logcoverage") / "templates"))


def identity_template(events: Iterable[RawEvent], schema_id: str = "identity") -> SchemaTemplate:
    """A template copying every raw path seen in ``events`` verbatim."""
    paths: Dict[Source, set] = {s: set() for s in Source}
    for e in events:
        paths[e.source].update(e.fields)
    classes = {
        s: tuple(FieldRule(p, p, False) for p in sorted(ps)) for s, ps in paths.items()
    }
    return SchemaTemplate(schema_id, "identity", classes)


@dataclass(frozen=True)
class NormalizedEvent:
    schema_id: str
    source: Source
    ts: datetime
    host: str
    fields: Mapping[str, Scalar]
    dropped: Tuple[str, ...]
    provenance: Mapping[str, str]  # target_path -> raw_path
    unmapped_source: bool = False
    session: Optional[str] = None

    def canonical(self) -> str:
        return json.dumps(
            {
                "schema_id": self.schema_id,
                "source": self.source.value,
                "ts": format_timestamp(self.ts),
                "host": self.host,
                "fields": dict(self.fields),
                "dropped": list(self.dropped),
                "provenance": dict(self.provenance),
                "unmapped_source": self.unmapped_source,
                "session": self.session,
            },
            sort_keys=True,
            separators=(",", ":"),
        )

    def mapped_raw_paths(self) -> set:
        return set(self.provenance.values())


def normalize(event: RawEvent, template: SchemaTemplate, session: Optional[str] = None) -> NormalizedEvent:
    """Apply ``template`` to ``event``; unmapped raw paths land in ``dropped``."""
    if not template.has_class(event.source):
        return NormalizedEvent(
            template.schema_id, event.source, event.ts, event.host,
            MappingProxyType({}), tuple(sorted(event.fields)), MappingProxyType({}),
            unmapped_source=True, session=session,
        )
    out: Dict[str, Scalar] = {}
    prov: Dict[str, str] = {}
    for rule in template.classes[event.source]:
        if rule.transform.drops or rule.raw_path not in event.fields:
            continue
        out[rule.target_path] = rule.transform.apply(event.fields[rule.raw_path])
        prov[rule.target_path] = rule.raw_path
    mapped = set(prov.values())
    dropped = tuple(sorted(p for p in event.fields if p not in mapped))
    return NormalizedEvent(
        template.schema_id, event.source, event.ts, event.host,
        MappingProxyType(dict(sorted(out.items()))), dropped,
        MappingProxyType(dict(sorted(prov.items()))), session=session,
    )


@dataclass(frozen=True)
class ConformanceReport:
    schema_id: str
    source: Source
    missing_required: Tuple[str, ...]

    @property
    def conformant(self) -> bool:
        return not self.missing_required


def conformance(normalized: NormalizedEvent, template: SchemaTemplate) -> ConformanceReport:
    if normalized.schema_id != template.schema_id:
        raise TemplateMismatch(
            f"event normalized under {normalized.schema_id!r}, checked against {template.schema_id!r}"
        )
    missing = tuple(t for t in template.required_targets(normalized.source) if t not in normalized.fields)
    return ConformanceReport(template.schema_id, normalized.source, missing)
