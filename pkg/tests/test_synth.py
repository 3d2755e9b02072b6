import re

import pytest
from hypothesis import given, settings, strategies as st

from logcoverage.errors import InvalidSpec
from logcoverage.sessions import VulnClass, build_sessions
from logcoverage.signatures import Phase, evaluate_raw
from logcoverage.synth import (
    SHELLSHOCK_PAYLOAD,
    ScenarioSpec,
    Vector,
    scenario_signatures,
    shellshock_fixture,
    suite_specs,
    synthesize,
    synthesize_suite,
)
from logcoverage.telemetry import Source

seeds = st.integers(0, 2**64 - 1)
vectors = st.sampled_from(list(Vector))


def spec(vector=Vector.HTTP_GET, seed=1, **kw):
    return ScenarioSpec("CVE-2099-0100", vector, seed=seed, **kw)


@settings(max_examples=40, deadline=None)
@given(vectors, seeds, st.integers(0, 10))
def test_determinism(vector, seed, noise):
    a = synthesize(spec(vector, seed, benign_noise=noise))
    b = synthesize(spec(vector, seed, benign_noise=noise))
    assert a[0].to_jsonl() == b[0].to_jsonl()
    assert a[2] == b[2]


def test_different_seeds_differ():
    a = synthesize(spec(seed=1))[0].to_jsonl()
    b = synthesize(spec(seed=2))[0].to_jsonl()
    assert a != b


@settings(max_examples=40, deadline=None)
@given(vectors, seeds, st.integers(0, 15))
def test_manifest_soundness(vector, seed, noise):
    s = spec(vector, seed, benign_noise=noise)
    corpus, record, manifest = synthesize(s)
    (session,) = build_sessions([record], corpus).sessions
    assert session.event_ids == manifest.event_ids
    for sig in scenario_signatures(s).values():
        hits = evaluate_raw(sig, session).matches
        assert hits == manifest.planted.get(sig.id, ()), sig.id
        assert not set(hits) & set(manifest.benign_ids)
    for idxs in manifest.planted.values():
        assert all(0 <= i < len(corpus) for i in idxs)


@settings(max_examples=30, deadline=None)
@given(vectors, seeds)
def test_chain_ordering(vector, seed):
    s = spec(vector, seed, benign_noise=5)
    corpus, _, manifest = synthesize(s)
    sigs = scenario_signatures(s)
    by_phase = {p: [] for p in Phase}
    for sid, idxs in manifest.planted.items():
        by_phase[sigs[sid].phase] += [corpus[i].ts for i in idxs]
    assert max(by_phase[Phase.INITIAL_ACCESS]) < min(by_phase[Phase.EXECUTION])
    assert max(by_phase[Phase.EXECUTION]) < min(by_phase[Phase.COMMAND_AND_CONTROL])


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_post_marker_only_in_body(seed):
    s = spec(Vector.HTTP_POST, seed, payload_marker="ZZMARK")
    corpus, _, _ = synthesize(s)
    http = [e for e in corpus if e.source is Source.HTTP]
    assert http
    for e in http:
        assert "ZZMARK" in e.fields["request_body"]
        for path, value in e.fields.items():
            if path != "request_body":
                assert "ZZMARK" not in str(value), path


def test_get_marker_in_url():
    corpus, _, _ = synthesize(spec(Vector.HTTP_GET, payload_marker="ZZMARK"))
    assert any("ZZMARK" in e.fields["url_path"] for e in corpus if e.source is Source.HTTP)


def test_service_marker_only_in_payload():
    corpus, _, manifest = synthesize(spec(Vector.SERVICE_PAYLOAD, payload_marker="ZZMARK"))
    assert manifest.vuln_class is VulnClass.SERVICE
    carriers = [(e, p) for e in corpus for p, v in e.fields.items() if "ZZMARK" in str(v)]
    assert carriers and all(p == "payload" and e.source is Source.NETWORK for e, p in carriers)


@settings(max_examples=30, deadline=None)
@given(vectors, seeds)
def test_process_chain(vector, seed):
    s = spec(vector, seed)
    corpus, _, _ = synthesize(s)
    procs = [e for e in corpus if e.source is Source.PROCESS]
    drops = [e for e in procs if re.fullmatch(r"/tmp/[a-z]{5}", e.fields["exe"])]
    assert len(drops) == 1
    assert drops[0].fields["user"] == s.profile.user
    c2 = [e for e in corpus if e.source is Source.NETWORK and e.fields["dst_port"] == s.c2_port]
    assert c2 and c2[0].fields["dst_ip"] == s.attacker_ip


def test_no_c2_when_not_planted():
    s = spec(plant_c2=False)
    _, _, manifest = synthesize(s)
    assert not any(k.endswith("C2-H1") for k in manifest.planted)


def test_event_count_overrides():
    _, _, m = synthesize(spec(event_counts={Source.PROCESS: 10}, benign_noise=3))
    assert m.source_counts[Source.PROCESS] == 10
    with pytest.raises(InvalidSpec):
        synthesize(spec(event_counts={Source.PROCESS: 1}))


@pytest.mark.parametrize("kw", [
    {"c2_port": 0}, {"c2_port": 65536}, {"seed": -1}, {"seed": 2**64},
    {"benign_noise": -1}, {"service": "Redis"},
])
def test_invalid_specs(kw):
    with pytest.raises(InvalidSpec):
        synthesize(spec(**kw))
    with pytest.raises(InvalidSpec):
        synthesize(ScenarioSpec("CVE-1", Vector.HTTP_GET))


def test_shellshock_fixture_shape():
    corpus, record, sigs, manifest = shellshock_fixture()
    assert len(sigs) == 12
    phases = [s.phase for s in sigs.values()]
    assert (phases.count(Phase.INITIAL_ACCESS), phases.count(Phase.EXECUTION),
            phases.count(Phase.COMMAND_AND_CONTROL)) == (3, 4, 5)
    (attack,) = [e for e in corpus if SHELLSHOCK_PAYLOAD in str(e.get("user_agent", ""))]
    assert attack.fields["url_path"] == "/victim.cgi"
    assert any(e.get("dst_port") == 4444 for e in corpus)
    assert record.service == "HTTP"
    assert shellshock_fixture()[0].to_jsonl() == corpus.to_jsonl()


def test_suite_windows_are_disjoint():
    suite = synthesize_suite(suite_specs({v: 2 for v in Vector}, seed=4))
    tagging = build_sessions(suite.records, suite.corpus)
    assert tagging.conflicts == ()
    assert tagging.untagged == ()
    by = tagging.by_cve()
    for m in suite.manifests:
        assert by[m.cve].event_ids == m.event_ids
