import json

import pytest
from hypothesis import given, settings, strategies as st

from logcoverage.errors import DuplicateTarget, TemplateMismatch, TemplateParse, UnknownTransform
from logcoverage.normalize import (
    DEFAULT_SCHEMAS,
    FieldRule,
    SchemaTemplate,
    Transform,
    TransformKind,
    conformance,
    default_template_dir,
    default_templates,
    identity_template,
    load_template,
    load_templates,
    normalize,
)
from logcoverage.synth import shellshock_fixture
from logcoverage.telemetry import MANDATORY_FIELDS, RawEvent, Source, parse_timestamp

TS = parse_timestamp("2024-01-01T00:00:00.000Z")


def http_event(**extra):
    fields = {"method": "POST", "url_path": "/Login", "status": 200, "user_agent": "UA",
              "request_body": "cmd=id"}
    fields.update(extra)
    return RawEvent(TS, "target", Source.HTTP, fields)


def tmpl(rules, source=Source.HTTP, sid="t"):
    return SchemaTemplate(sid, "1", {source: tuple(rules)})


def test_unmapped_paths_are_dropped():
    t = tmpl([FieldRule("method", "http.method"), FieldRule("url_path", "url.path")])
    n = normalize(http_event(), t)
    assert dict(n.fields) == {"http.method": "POST", "url.path": "/Login"}
    assert n.dropped == ("request_body", "status", "user_agent")
    assert n.provenance["url.path"] == "url_path"


def test_transforms():
    t = tmpl([
        FieldRule("url_path", "a", transform=Transform.parse("lowercase")),
        FieldRule("url_path", "b", transform=Transform.parse("truncate(3)")),
        FieldRule("user_agent", "c", transform=Transform.parse("drop")),
        FieldRule("status", "d", transform=Transform.parse("truncate(1)")),
    ])
    n = normalize(http_event(), t)
    assert n.fields["a"] == "/login"
    assert n.fields["b"] == "/Lo"
    assert n.fields["d"] == 200
    assert "c" not in n.fields
    assert "user_agent" in n.dropped
    assert t.rules_for(Source.HTTP, "user_agent") == ()


@pytest.mark.parametrize("text", ["truncate", "truncate(0)", "upper", 3, "truncate(-1)"])
def test_bad_transforms(text):
    with pytest.raises(UnknownTransform):
        Transform.parse(text)


def test_transform_text_roundtrip():
    for text in ("copy", "lowercase", "drop", "truncate(64)"):
        assert str(Transform.parse(text)) == text
    assert Transform.parse(None).kind is TransformKind.COPY


def test_duplicate_target_rejected():
    with pytest.raises(DuplicateTarget):
        tmpl([FieldRule("method", "x"), FieldRule("url_path", "x")])


def test_absent_class_gives_unmapped_source():
    t = tmpl([FieldRule("pid", "process.pid")], Source.PROCESS)
    n = normalize(http_event(), t)
    assert n.unmapped_source
    assert dict(n.fields) == {}
    assert set(n.dropped) == set(http_event().fields)


def test_template_json_roundtrip(tmp_path):
    for t in default_templates().values():
        p = tmp_path / f"{t.schema_id}.json"
        p.write_text(json.dumps(t.to_dict()))
        assert load_template(p) == t
    assert set(load_templates(tmp_path)) == set(DEFAULT_SCHEMAS)


def test_template_errors(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{")
    with pytest.raises(TemplateParse):
        load_template(p)
    p.write_text(json.dumps({"schema_id": "x", "version": "1", "classes": {"dns": []}}))
    with pytest.raises(TemplateParse):
        load_template(p)
    with pytest.raises(TemplateParse):
        load_template(tmp_path / "missing.json")
    with pytest.raises(TemplateParse):
        load_templates(tmp_path / "nowhere")
    with pytest.raises(TemplateParse):
        load_templates(default_template_dir(), ["cim", "qradar"])


def test_bundled_templates_carry_mandatory_fields():
    for t in default_templates().values():
        for source in Source:
            for f in MANDATORY_FIELDS[source]:
                assert t.rules_for(source, f), (t.schema_id, f)


def test_bundled_templates_omit_payload_fields():
    # no standard's required set carries request bodies or flow payloads
    for t in default_templates().values():
        assert not t.rules_for(Source.HTTP, "request_body")
        assert not t.rules_for(Source.NETWORK, "payload")


def test_shellshock_events_conform_to_every_template():
    corpus, *_ = shellshock_fixture()
    for t in default_templates().values():
        for ev in corpus:
            report = conformance(normalize(ev, t), t)
            assert report.conformant, (t.schema_id, report.missing_required)


def test_conformance_flags_missing_required_and_mismatch():
    t = tmpl([FieldRule("method", "m", required=True), FieldRule("cookie", "c", required=True)])
    n = normalize(http_event(), t)
    assert conformance(n, t).missing_required == ("c",)
    with pytest.raises(TemplateMismatch):
        conformance(n, tmpl([FieldRule("method", "m")], sid="other"))


def test_identity_keeps_everything():
    ev = http_event(**{"headers.cookie": "a"})
    t = identity_template([ev])
    n = normalize(ev, t)
    assert dict(n.fields) == dict(ev.fields)
    assert n.dropped == ()


paths = st.sampled_from(["method", "url_path", "status", "user_agent", "request_body", "cookie"])
rule_lists = st.lists(st.tuples(paths, st.sampled_from(["copy", "lowercase", "truncate(4)", "drop"])),
                      max_size=8, unique_by=lambda r: r[0])


@settings(max_examples=200)
@given(rule_lists, st.data())
def test_adding_rules_never_removes_fields(rules, data):
    # T is a prefix of T', so every T target survives in T' unchanged
    full = [FieldRule(p, f"t.{p}", transform=Transform.parse(x)) for p, x in rules]
    k = data.draw(st.integers(0, len(full)))
    small = tmpl(full[:k] or [FieldRule("method", "t.method")])
    big = small.with_rules(Source.HTTP, [r for r in full[k:] if r.target_path not in
                                         {x.target_path for x in small.classes[Source.HTTP]}])
    ev = http_event()
    a, b = normalize(ev, small), normalize(ev, big)
    for key, value in a.fields.items():
        assert b.fields[key] == value
    assert set(b.dropped) <= set(a.dropped)
