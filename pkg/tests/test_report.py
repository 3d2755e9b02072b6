import csv
import io
import json
import re

from logcoverage.metrics import aggregate, volume_stats
from logcoverage.normalize import FieldRule, SchemaTemplate, Transform, default_templates
from logcoverage.report import (
    LEAVES,
    GapCause,
    detect_tree,
    gap_report,
    render_gaps,
    render_score,
    render_tree,
    render_volumes,
    session_vector,
)
from logcoverage.sessions import build_sessions
from logcoverage.signatures import Phase, build_ledger
from logcoverage.synth import ScenarioSpec, Vector, scenario_signatures, shellshock_fixture, suite_specs, synthesize, synthesize_suite
from logcoverage.telemetry import Source

CELL_RE = re.compile(r"^\d{1,3}% \(\d+/\d+\)$")


def ledger_for(counts, seed=0, templates=None):
    suite = synthesize_suite(suite_specs(counts, seed=seed))
    sessions = build_sessions(suite.records, suite.corpus).sessions
    templates = templates or default_templates()
    return build_ledger(sessions, suite.signatures, templates), templates


def shellshock():
    corpus, record, sigs, _ = shellshock_fixture()
    templates = default_templates()
    return build_ledger(build_sessions([record], corpus).sessions, sigs, templates), templates


def test_post_body_gap_is_unmapped_request_body():
    ledger, templates = ledger_for({Vector.HTTP_POST: 1})
    gaps = [g for g in gap_report(ledger, templates) if g.signature_id.endswith("IA-H1")]
    assert {g.schema_id for g in gaps} == set(templates)
    for g in gaps:
        assert g.cause is GapCause.UNMAPPED_FIELD
        assert g.paths == ("request_body",)
        assert g.describe() == "UnmappedField(request_body)"


def test_service_payload_gap():
    ledger, templates = ledger_for({Vector.SERVICE_PAYLOAD: 1})
    gaps = [g for g in gap_report(ledger, templates) if g.signature_id.endswith("IA-H1")]
    assert len(gaps) == 3 and all(g.paths == ("payload",) for g in gaps)


def test_preserved_signatures_have_no_gap():
    ledger, templates = shellshock()
    gaps = gap_report(ledger, templates)
    lost = {(e.signature_id, s) for e in ledger.entries for s in ledger.schemas if e.in_raw and not e.preserved[s]}
    assert {(g.signature_id, g.schema_id) for g in gaps} == lost
    assert not any(g.signature_id == "SS-IA-01" for g in gaps)
    keys = [(g.cve, g.schema_id, g.signature_id) for g in gaps]
    assert keys == sorted(keys)


def test_transform_loss_attribution():
    corpus, record, sigs, _ = shellshock_fixture()
    base = default_templates()["ecs"]
    rules = tuple(r if r.raw_path != "user_agent" else FieldRule(r.raw_path, r.target_path, r.required, Transform.parse("truncate(5)"))
                  for r in base.classes[Source.HTTP])
    classes = dict(base.classes)
    classes[Source.HTTP] = rules
    t = {"short": SchemaTemplate("short", "1", classes)}
    ledger = build_ledger(build_sessions([record], corpus).sessions, sigs, t)
    gaps = {g.signature_id: g for g in gap_report(ledger, t)}
    assert gaps["SS-IA-01"].cause is GapCause.TRANSFORM_LOSS
    assert gaps["SS-IA-01"].paths == ("user_agent",)


def test_not_in_raw_listing_is_opt_in():
    spec = ScenarioSpec("CVE-2099-0005", Vector.HTTP_GET, seed=2, plant_c2=False)
    corpus, record, _ = synthesize(spec)
    templates = default_templates()
    ledger = build_ledger(build_sessions([record], corpus).sessions, scenario_signatures(spec), templates)
    assert not any(g.cause is GapCause.NOT_IN_RAW for g in gap_report(ledger, templates))
    absent = [g for g in gap_report(ledger, templates, include_not_in_raw=True) if g.cause is GapCause.NOT_IN_RAW]
    assert absent and all("C2" in g.signature_id for g in absent)


def test_tree_get_all_detected():
    ledger, _ = ledger_for({Vector.HTTP_GET: 5})
    tree = detect_tree(ledger, "cim")
    assert tree.total == 5
    assert tree.branch("GET").count("Detect") == 5


def test_tree_post_partial_by_default_undetect_on_initial_access():
    ledger, _ = ledger_for({Vector.HTTP_POST: 4})
    assert len(ledger.cves()) == 4
    assert detect_tree(ledger, "ecs").branch("POST").count("Partial") == 4
    ia_only = detect_tree(ledger, "ecs", [Phase.INITIAL_ACCESS])
    assert ia_only.branch("POST").count("Undetect") == 4


def test_tree_conservation_and_vectors():
    ledger, _ = ledger_for({Vector.HTTP_GET: 2, Vector.HTTP_MIXED: 3, Vector.HTTP_POST: 2, Vector.SERVICE_PAYLOAD: 2})
    assert [session_vector(ledger, c) for c in ledger.cves()] == ["GET"] * 2 + ["POST"] * 2 + ["Mixed"] * 3 + ["Unknown"] * 2
    tree = detect_tree(ledger, "ocsf")
    assert tree.total == 7
    for b in tree.branches:
        assert sum(b.count(leaf) for leaf in LEAVES) == b.n
    assert sum(b.n for b in tree.branches) == tree.total
    assert [b.vector for b in tree.branches] == ["GET", "Mixed", "POST"]


def test_empty_web_tree():
    ledger, _ = ledger_for({Vector.SERVICE_PAYLOAD: 2})
    tree = detect_tree(ledger, "cim")
    assert tree.total == 0 and tree.branches == ()
    assert "Total n=0" in render_tree(tree)


def test_shellshock_text_report_row():
    ledger, _ = shellshock()
    text = render_score(aggregate(ledger, schemas=["cim", "ocsf", "ecs"]), ledger)
    assert re.search(r"^CVE-2014-6271\s+CIM\s+75% \(9/12\).*Detection: true$", text, re.M)


def test_csv_and_json_reports_parse():
    ledger, templates = ledger_for({Vector.HTTP_GET: 1, Vector.SERVICE_PAYLOAD: 1})
    table = aggregate(ledger, "vuln-class", schemas=["cim", "ocsf", "ecs"])
    rows = list(csv.DictReader(io.StringIO(render_score(table, ledger, "csv"))))
    assert [r["group"] for r in rows] == ["Web"] * 3 + ["Service"] * 3 + ["Combined"] * 3
    for r in rows:
        for k, v in r.items():
            if k.startswith(("eff_", "det_")):
                assert CELL_RE.match(v)
    doc = json.loads(render_score(table, ledger, "json"))
    assert len(doc["rows"]) == 9
    assert json.loads(render_gaps(gap_report(ledger, templates), "json"))
    tree = json.loads(render_tree(detect_tree(ledger, "cim"), "json"))
    assert tree["total"] == 1


def test_volume_rendering():
    corpus, record, _, _ = shellshock_fixture()
    stats = volume_stats(build_sessions([record], corpus).sessions)
    text = render_volumes(stats)
    assert "combined  9    9    9.0   0" in text
    assert json.loads(render_volumes(stats, "json"))["rows"]["combined"]["mean"] == 9.0
