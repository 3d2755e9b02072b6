"""Gap attribution, the web detectability tree, and report rendering.

Renderers return strings; the CLI decides where they go. All orderings are
fixed (cve, schema, signature id) so identical inputs render identically.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple

from .metrics import (
    DETECTION_SELECTORS,
    EMPTY_CELL,
    ScoreTable,
    VOLUME_ROWS,
    VolumeStats,
    detection,
    phase_effectiveness,
    undefined_as_none,
)
from .normalize import SchemaTemplate, normalize
from .sessions import ExploitSession, VulnClass
from .signatures import (
    PHASES,
    Fidelity,
    LedgerEntry,
    Match,
    Phase,
    SignatureLedger,
    normalized_lookup,
    raw_lookup,
)
from .telemetry import Source


# --------------------------------------------------------------------------
# gaps
# --------------------------------------------------------------------------

class GapCause(str, Enum):
    UNMAPPED_FIELD = "unmapped_field"
    TRANSFORM_LOSS = "transform_loss"
    NOT_IN_RAW = "not_in_raw"

    @property
    def label(self) -> str:
        return {"unmapped_field": "UnmappedField", "transform_loss": "TransformLoss",
                "not_in_raw": "NotInRaw"}[self.value]


@dataclass(frozen=True)
class GapEntry:
    cve: str
    signature_id: str
    phase: Phase
    fidelity: Fidelity
    schema_id: str
    cause: GapCause
    paths: Tuple[str, ...] = ()

    def describe(self) -> str:
        if self.paths:
            return f"{self.cause.label}({', '.join(self.paths)})"
        return self.cause.label

    def to_dict(self) -> dict:
        return {
            "cve": self.cve,
            "signature": self.signature_id,
            "phase": self.phase.value,
            "fidelity": self.fidelity.value,
            "schema": self.schema_id,
            "cause": self.cause.value,
            "paths": list(self.paths),
        }


def _leaf_true(leaf: Match, lookup) -> bool:
    values = lookup(leaf.path)
    return any(leaf.test(v, True) for v in values)


def attribute_gap(entry: LedgerEntry, session: ExploitSession, template: SchemaTemplate) -> GapEntry:
    """Explain why a raw-present signature did not survive ``template``.

    Looks at the events that matched in raw form and collects the predicate
    leaves that held on the raw event but not on its normalized view. A leaf
    whose path the template never carries is an unmapped field; one whose
    path is carried but whose value no longer satisfies it is a transform
    loss. Unmapped fields take precedence when both occur.
    """
    sig = entry.signature
    unmapped, lossy = set(), set()
    events = dict(zip(session.event_ids, session.events))
    for idx in entry.raw_matches:
        ev = events[idx]
        norm = normalize(ev, template, session.cve)
        raw_look, norm_look = raw_lookup(ev), normalized_lookup(norm, template)
        for leaf in sig.predicate.leaves():
            if not _leaf_true(leaf, raw_look) or _leaf_true(leaf, norm_look):
                continue
            if template.rules_for(ev.source, leaf.path):
                lossy.add(leaf.path)
            else:
                unmapped.add(leaf.path)
    if unmapped:
        cause, paths = GapCause.UNMAPPED_FIELD, unmapped
    elif lossy:
        cause, paths = GapCause.TRANSFORM_LOSS, lossy
    else:
        # predicates are monotone, so some leaf must have flipped; guard anyway
        cause, paths = GapCause.TRANSFORM_LOSS, set(sig.match_paths())
    return GapEntry(entry.cve, sig.id, sig.phase, sig.fidelity, template.schema_id, cause, tuple(sorted(paths)))


def gap_report(
    ledger: SignatureLedger,
    templates: Mapping[str, SchemaTemplate],
    include_not_in_raw: bool = False,
) -> List[GapEntry]:
    """One entry per (signature, schema) with ``in_raw`` and not preserved.

    ``include_not_in_raw`` also lists signatures absent from raw telemetry
    (once per schema); they never enter effectiveness denominators.
    """
    out: List[GapEntry] = []
    for e in ledger.entries:
        session = ledger.sessions[e.cve]
        for sid in sorted(ledger.schemas):
            if not e.in_raw:
                if include_not_in_raw:
                    out.append(GapEntry(e.cve, e.signature_id, e.phase, e.fidelity, sid, GapCause.NOT_IN_RAW))
                continue
            if e.preserved[sid]:
                continue
            out.append(attribute_gap(e, session, templates[sid]))
    out.sort(key=lambda g: (g.cve, g.schema_id, g.signature_id))
    return out


def render_gaps(gaps: Sequence[GapEntry], fmt: str = "text") -> str:
    if fmt == "json":
        return json.dumps([g.to_dict() for g in gaps], indent=2) + "\n"
    if fmt == "csv":
        return _csv(
            ["cve", "schema", "signature", "phase", "fidelity", "cause", "paths"],
            [[g.cve, g.schema_id, g.signature_id, g.phase.value, g.fidelity.value,
              g.cause.value, ";".join(g.paths)] for g in gaps],
        )
    if not gaps:
        return "no gaps\n"
    rows = [[g.cve, g.schema_id.upper(), g.signature_id, g.phase.label, g.fidelity.value, g.describe()]
            for g in gaps]
    return _table(["CVE", "Schema", "Signature", "Phase", "Fidelity", "Cause"], rows)


# --------------------------------------------------------------------------
# detectability tree
# --------------------------------------------------------------------------

VECTORS = ("GET", "Mixed", "POST", "Unknown")
LEAVES = ("Detect", "Partial", "Undetect")


def session_vector(ledger: SignatureLedger, cve: str) -> str:
    """Request method(s) that carried the initial-access evidence.

    Uses the HTTP events matched by the CVE's raw-present initial-access
    signatures, preferring high-fidelity ones when any matched.
    """
    session = ledger.sessions[cve]
    events = dict(zip(session.event_ids, session.events))
    ia = [e for e in ledger.for_cve(cve) if e.phase is Phase.INITIAL_ACCESS and e.in_raw]
    high = [e for e in ia if e.fidelity is Fidelity.HIGH]
    methods = set()
    for e in high or ia:
        for idx in e.raw_matches:
            ev = events[idx]
            if ev.source is Source.HTTP:
                m = ev.get("method")
                if isinstance(m, str):
                    methods.add(m.upper())
    has_get, has_post = "GET" in methods, "POST" in methods
    if has_get and has_post:
        return "Mixed"
    if has_get:
        return "GET"
    if has_post:
        return "POST"
    return "Unknown"


@dataclass(frozen=True)
class TreeBranch:
    vector: str
    leaves: Mapping[str, Tuple[str, ...]]  # leaf -> cves

    @property
    def n(self) -> int:
        return sum(len(v) for v in self.leaves.values())

    def count(self, leaf: str) -> int:
        return len(self.leaves[leaf])


@dataclass(frozen=True)
class DetectTree:
    schema_id: str
    phases: Tuple[Phase, ...]
    branches: Tuple[TreeBranch, ...]

    @property
    def total(self) -> int:
        return sum(b.n for b in self.branches)

    def branch(self, vector: str) -> TreeBranch:
        for b in self.branches:
            if b.vector == vector:
                return b
        raise KeyError(vector)

    def to_dict(self) -> dict:
        return {
            "schema": self.schema_id,
            "phases": [p.value for p in self.phases],
            "total": self.total,
            "branches": [
                {"vector": b.vector, "n": b.n,
                 "leaves": {k: {"n": len(v), "cves": list(v)} for k, v in b.leaves.items()}}
                for b in self.branches
            ],
        }


def detect_tree(
    ledger: SignatureLedger,
    schema_id: str,
    phases: Sequence[Phase] = PHASES,
) -> DetectTree:
    """Group web sessions by vector, then by how many ``phases`` were detected.

    Detect: all of ``phases``; Partial: at least one but not all; Undetect:
    none. Vectors with no sessions are omitted, so an empty web set gives a
    tree with no branches and a total of zero.
    """
    phases = tuple(phases)
    if not phases:
        raise ValueError("detect_tree needs at least one phase")
    grouped: Dict[str, Dict[str, List[str]]] = {v: {k: [] for k in LEAVES} for v in VECTORS}
    for cve in ledger.cves():
        if ledger.sessions[cve].vuln_class is not VulnClass.WEB:
            continue
        verdict = detection(ledger, cve, schema_id)
        hits = sum(verdict.phase(p) for p in phases)
        leaf = "Detect" if hits == len(phases) else ("Partial" if hits else "Undetect")
        grouped[session_vector(ledger, cve)][leaf].append(cve)
    branches = tuple(
        TreeBranch(v, {k: tuple(grouped[v][k]) for k in LEAVES})
        for v in VECTORS
        if any(grouped[v].values())
    )
    return DetectTree(schema_id, phases, branches)


def render_tree(tree: DetectTree, fmt: str = "text") -> str:
    if fmt == "json":
        return json.dumps(tree.to_dict(), indent=2) + "\n"
    if fmt == "csv":
        rows = [[tree.schema_id, b.vector, leaf, b.count(leaf)] for b in tree.branches for leaf in LEAVES]
        return _csv(["schema", "vector", "leaf", "n"], rows)
    phases = ", ".join(p.label for p in tree.phases)
    lines = [f"{tree.schema_id.upper()} web detectability ({phases})", f"Total n={tree.total}"]
    for bi, b in enumerate(tree.branches):
        last_b = bi == len(tree.branches) - 1
        lines.append(f"{'└──' if last_b else '├──'} {b.vector} n={b.n}")
        pad = "    " if last_b else "│   "
        for li, leaf in enumerate(LEAVES):
            lines.append(f"{pad}{'└──' if li == len(LEAVES) - 1 else '├──'} {leaf} n={b.count(leaf)}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# score tables
# --------------------------------------------------------------------------

_EFF_KEYS = ("all",) + tuple(p.value for p in PHASES)
_EFF_HEAD = ["Overall"] + [p.label for p in PHASES]
_DET_HEAD = ["Full"] + [p.label for p in PHASES]


def _cell(v) -> str:
    return v.cell() if v is not None else EMPTY_CELL


def cve_lines(ledger: SignatureLedger, schemas: Sequence[str]) -> List[List[str]]:
    """Per-(cve, schema) rows: phase coverage, overall score, detection verdict."""
    rows = []
    for cve in ledger.cves():
        for sid in schemas:
            phase_cells = [_cell(undefined_as_none(phase_effectiveness, ledger, sid, p, [cve])) for p in PHASES]
            overall = _cell(undefined_as_none(phase_effectiveness, ledger, sid, None, [cve]))
            verdict = detection(ledger, cve, sid)
            rows.append([cve, sid.upper(), overall] + phase_cells + [str(verdict.full).lower()])
    return rows


def render_score(table: ScoreTable, ledger: SignatureLedger, fmt: str = "text") -> str:
    if fmt == "json":
        doc = {
            "schemas": list(table.schemas),
            "rows": [r.to_dict() for r in table.rows],
            "verdicts": [v.to_dict() for v in table.verdicts],
            "unknown_cves": list(ledger.unknown_cves),
        }
        return json.dumps(doc, indent=2) + "\n"
    if fmt == "csv":
        head = ["group", "schema", "sessions"] + [f"eff_{k}" for k in _EFF_KEYS] + [f"det_{k}" for k in DETECTION_SELECTORS]
        rows = []
        for r in table.rows:
            cells = r.cells()
            rows.append([r.group, r.schema_id, r.sessions]
                        + [cells[f"eff_{k}"] for k in _EFF_KEYS]
                        + [cells[f"det_{k}"] for k in DETECTION_SELECTORS])
        return _csv(head, rows)

    out = []
    out.append("Per-CVE coverage")
    per = cve_lines(ledger, table.schemas)
    out.append(_table(["CVE", "Schema", "Effectiveness"] + [p.label for p in PHASES] + ["Detection"],
                      per, fmt_row=_cve_row))
    out.append("Effectiveness")
    out.append(_table(["Group", "Schema", "n"] + _EFF_HEAD, [
        [r.group, r.schema_id.upper(), str(r.sessions)] + [r.cells()[f"eff_{k}"] for k in _EFF_KEYS]
        for r in table.rows
    ]))
    out.append("Detection rate")
    out.append(_table(["Group", "Schema", "n"] + _DET_HEAD, [
        [r.group, r.schema_id.upper(), str(r.sessions)] + [r.cells()[f"det_{k}"] for k in DETECTION_SELECTORS]
        for r in table.rows
    ]))
    if ledger.unknown_cves:
        out.append("Signatures for CVEs without a session: " + ", ".join(ledger.unknown_cves) + "\n")
    return "\n".join(out)


def _cve_row(cells: Sequence[str], widths: Sequence[int]) -> str:
    # the verdict column reads "Detection: true" so rows grep cleanly
    body = "  ".join(c.ljust(w) for c, w in zip(cells[:-1], widths[:-1]))
    return f"{body}  Detection: {cells[-1]}"


def render_volumes(stats: VolumeStats, fmt: str = "text") -> str:
    if fmt == "json":
        doc = stats.to_dict()
        doc["display"] = {k: dict(zip(("min", "max", "mean", "stdev"), stats[k].rounded())) for k in VOLUME_ROWS}
        return json.dumps(doc, indent=2) + "\n"
    rows = []
    for k in VOLUME_ROWS:
        lo, hi, mean, sd = stats[k].rounded()
        rows.append([k, str(lo), str(hi), f"{mean:.1f}", str(sd)])
    if fmt == "csv":
        return _csv(["source", "min", "max", "mean", "stdev"], rows)
    return f"Events per session (n={stats.sessions})\n" + _table(["Source", "Min", "Max", "Mean", "Stdev"], rows)


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def _csv(head: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(head)
    w.writerows(rows)
    return buf.getvalue()


def _table(head: Sequence[str], rows: Sequence[Sequence[str]], fmt_row=None) -> str:
    rows = [[str(c) for c in r] for r in rows]
    widths = [max([len(h)] + [len(r[i]) for r in rows]) for i, h in enumerate(head)]
    def plain(cells, ws):
        return "  ".join(c.ljust(w) for c, w in zip(cells, ws)).rstrip()

    fmt_row = fmt_row or plain
    lines = [plain(list(head), widths), plain(["-" * w for w in widths], widths)]
    lines += [fmt_row(r, widths).rstrip() for r in rows]
    return "\n".join(lines) + "\n"


def render_ingest(summary: Mapping[str, object], fmt: str = "text") -> str:
    if fmt == "json":
        return json.dumps(summary, indent=2) + "\n"
    if fmt == "csv":
        return _csv(["key", "value"], [[k, v] for k, v in summary.items()])
    return "".join(f"{k}: {v}\n" for k, v in summary.items())

