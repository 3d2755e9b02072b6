import json
from datetime import timedelta

import pytest

from logcoverage.errors import InvalidAttackRecord
from logcoverage.sessions import (
    AttackRecord,
    VulnClass,
    build_sessions,
    classify_vuln_class,
    load_attack_records,
    write_attack_records,
)
from logcoverage.telemetry import EventCorpus, RawEvent, Source, parse_timestamp

T0 = parse_timestamp("2024-01-01T00:00:10.000Z")
PROC = {"pid": 1, "ppid": 0, "exe": "/bin/sh", "cmdline": "sh", "user": "root"}


def rec(cve="CVE-2024-0001", start=0, end=1000, attacker="attacker", target="target", service="HTTP"):
    return AttackRecord(cve, T0 + timedelta(milliseconds=start), T0 + timedelta(milliseconds=end),
                        attacker, target, service)


def ev(offset_ms, host="target"):
    return RawEvent(T0 + timedelta(milliseconds=offset_ms), host, Source.PROCESS, PROC)


def test_window_edges_are_inclusive():
    events = [ev(-2001), ev(-2000), ev(500), ev(6000), ev(6001)]
    result = build_sessions([rec()], EventCorpus.from_events(events))
    (s,) = result.sessions
    assert s.event_ids == (1, 2, 3)
    assert result.untagged == (0, 4)


def test_custom_slack():
    events = [ev(-100), ev(1100)]
    result = build_sessions([rec()], EventCorpus.from_events(events), (timedelta(0), timedelta(0)))
    assert result.sessions[0].event_ids == ()
    assert result.untagged_count == 2


def test_host_scope():
    events = [ev(10, "target"), ev(20, "attacker"), ev(30, "bystander")]
    result = build_sessions([rec()], EventCorpus.from_events(events))
    assert result.sessions[0].event_ids == (0, 1)
    assert result.untagged == (2,)


def test_overlap_earlier_start_claims_and_is_reported():
    a = rec("CVE-2024-0002", start=0, end=1000)
    b = rec("CVE-2024-0001", start=8000, end=9000)
    corpus = EventCorpus.from_events([ev(500), ev(6000), ev(7000)])
    result = build_sessions([b, a], corpus)
    by = result.by_cve()
    # 6000 closes a's window and opens b's; a starts first
    assert by["CVE-2024-0002"].event_ids == (0, 1)
    assert by["CVE-2024-0001"].event_ids == (2,)
    assert [s.cve for s in result.sessions] == ["CVE-2024-0001", "CVE-2024-0002"]
    assert len(result.conflicts) == 1
    assert result.conflicts[0].first == "CVE-2024-0002"


def test_overlap_on_different_hosts_not_a_conflict():
    a = rec("CVE-2024-0001", target="t1")
    b = rec("CVE-2024-0002", target="t2")
    result = build_sessions([a, b], EventCorpus.from_events([ev(10, "t1"), ev(10, "t2")]))
    assert result.conflicts == ()
    assert result.by_cve()["CVE-2024-0002"].event_ids == (1,)


def test_duplicate_cves_rejected():
    with pytest.raises(InvalidAttackRecord):
        build_sessions([rec(), rec(start=5000, end=6000)], EventCorpus.from_events([ev(0)]))


@pytest.mark.parametrize("kwargs", [
    {"cve": "CVE-24-1"},
    {"cve": "CVE-2024-123"},
    {"start": 1000, "end": 1000},
    {"attacker": ""},
])
def test_invalid_records(kwargs):
    with pytest.raises(InvalidAttackRecord):
        rec(**kwargs)


@pytest.mark.parametrize("label,expected", [
    ("HTTP", VulnClass.WEB),
    ("http", VulnClass.WEB),
    ("Samba", VulnClass.SERVICE),
    ("HTTPS", VulnClass.SERVICE),
    ("", VulnClass.SERVICE),
])
def test_classify(label, expected):
    assert classify_vuln_class(label) is expected


def test_corpus_service_labels_split_forty_ten():
    # service column of the 50-exploit corpus
    labels = ["HTTP"] * 40 + ["ActiveMQ", "IRC", "JBoss", "Postgres", "Redis", "SMTP", "SSH",
                              "Samba", "Samba", "ZMQ"]
    classes = [classify_vuln_class(s) for s in labels]
    assert classes.count(VulnClass.WEB) == 40
    assert classes.count(VulnClass.SERVICE) == 10


def test_attack_log_roundtrip(tmp_path):
    p = tmp_path / "attacks.jsonl"
    records = [rec("CVE-2024-0001"), rec("CVE-2024-0002", service="Redis")]
    write_attack_records(records, p)
    assert load_attack_records(p) == records


def test_attack_log_errors_carry_line(tmp_path):
    p = tmp_path / "attacks.jsonl"
    good = json.dumps(rec().to_dict())
    p.write_text(good + "\n" + good + "\n")
    with pytest.raises(InvalidAttackRecord) as exc:
        load_attack_records(p)
    assert exc.value.line == 2
    p.write_text(good + "\n" + json.dumps({"cve": "CVE-2024-0009"}) + "\n")
    with pytest.raises(InvalidAttackRecord) as exc:
        load_attack_records(p)
    assert f"{p}:2:" in str(exc.value)
