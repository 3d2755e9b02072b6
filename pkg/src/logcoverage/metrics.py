"""Effectiveness scores, detection verdicts/rates, volume stats, score tables."""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from .errors import PreservedExceedsTotal, ZeroDenominator
from .sessions import ExploitSession, VulnClass
from .signatures import PHASES, Fidelity, Phase, SignatureLedger
from .telemetry import Source


def percent(x: int, y: int) -> int:
    """Integer percent of x/y for counts, rounding halves away from zero.

    Integer arithmetic only, so 13/40 -> 33 and 31/40 -> 78 exactly.
    """
    if y == 0:
        raise ZeroDenominator("percent of a zero denominator")
    if x < 0 or y < 0:
        raise ValueError("counts must be non-negative")
    return (200 * x + y) // (2 * y)


@dataclass(frozen=True)
class EffectivenessScore:
    preserved: int
    total: int

    def __post_init__(self) -> None:
        if self.total < 1:
            raise ZeroDenominator("effectiveness needs at least one raw-present signature")
        if self.preserved < 0:
            raise ValueError("preserved must be non-negative")
        if self.preserved > self.total:
            raise PreservedExceedsTotal(f"{self.preserved} preserved of {self.total}")

    @property
    def percent(self) -> int:
        return percent(self.preserved, self.total)

    def cell(self) -> str:
        return format_cell(self.percent, self.preserved, self.total)

    def to_dict(self) -> dict:
        return {"preserved": self.preserved, "total": self.total, "percent": self.percent}


@dataclass(frozen=True)
class DetectionRate:
    detected: int
    total: int

    def __post_init__(self) -> None:
        if self.total < 1:
            raise ZeroDenominator("detection rate over zero vulnerabilities")
        if not 0 <= self.detected <= self.total:
            raise ValueError(f"{self.detected} detected of {self.total}")

    @property
    def percent(self) -> int:
        return percent(self.detected, self.total)

    def cell(self) -> str:
        return format_cell(self.percent, self.detected, self.total)

    def to_dict(self) -> dict:
        return {"detected": self.detected, "total": self.total, "percent": self.percent}


def format_cell(pct: int, x: int, y: int) -> str:
    return f"{pct}% ({x}/{y})"


EMPTY_CELL = "-"


def effectiveness(preserved: int, total: int) -> EffectivenessScore:
    return EffectivenessScore(preserved, total)


def _scope(ledger: SignatureLedger, cves: Optional[Iterable[str]]):
    if cves is None:
        return ledger.entries
    wanted = set(cves)
    return tuple(e for e in ledger.entries if e.cve in wanted)


def phase_counts(
    ledger: SignatureLedger,
    schema_id: str,
    phase: Optional[Phase] = None,
    cves: Optional[Iterable[str]] = None,
) -> Tuple[int, int]:
    """(preserved, raw-present) signature counts; ``phase=None`` means all phases."""
    preserved = total = 0
    for e in _scope(ledger, cves):
        if phase is not None and e.phase is not phase:
            continue
        if not e.in_raw:
            continue
        total += 1
        preserved += bool(e.preserved[schema_id])
    return preserved, total


def phase_effectiveness(
    ledger: SignatureLedger,
    schema_id: str,
    phase: Optional[Phase] = None,
    cves: Optional[Iterable[str]] = None,
) -> EffectivenessScore:
    """Signatures of both fidelities count toward the ratio."""
    if schema_id not in ledger.schemas:
        raise KeyError(f"schema {schema_id!r} not in ledger")
    return effectiveness(*phase_counts(ledger, schema_id, phase, cves))


@dataclass(frozen=True)
class DetectionVerdict:
    cve: str
    schema_id: str
    initial_access: bool
    execution: bool
    c2: bool

    @property
    def full(self) -> bool:
        return self.initial_access and self.execution and self.c2

    def phase(self, phase: Phase) -> bool:
        return {
            Phase.INITIAL_ACCESS: self.initial_access,
            Phase.EXECUTION: self.execution,
            Phase.COMMAND_AND_CONTROL: self.c2,
        }[phase]

    def phases_detected(self) -> int:
        return self.initial_access + self.execution + self.c2

    def to_dict(self) -> dict:
        return {
            "cve": self.cve,
            "schema": self.schema_id,
            "initial_access": self.initial_access,
            "execution": self.execution,
            "c2": self.c2,
            "full": self.full,
        }


def detection(ledger: SignatureLedger, session: Union[ExploitSession, str], schema_id: str) -> DetectionVerdict:
    """A phase counts as detected iff one of its high-fidelity signatures survives."""
    cve = session if isinstance(session, str) else session.cve
    hit = {p: False for p in PHASES}
    for e in ledger.for_cve(cve):
        if e.fidelity is Fidelity.HIGH and e.in_raw and e.preserved[schema_id]:
            hit[e.phase] = True
    return DetectionVerdict(
        cve, schema_id,
        hit[Phase.INITIAL_ACCESS], hit[Phase.EXECUTION], hit[Phase.COMMAND_AND_CONTROL],
    )


Selector = Union[str, Phase]


def detection_rate(verdicts: Sequence[DetectionVerdict], selector: Selector = "full") -> DetectionRate:
    if not verdicts:
        raise ZeroDenominator("detection rate over zero verdicts")
    if selector == "full":
        detected = sum(v.full for v in verdicts)
    else:
        detected = sum(v.phase(Phase.parse(selector) if isinstance(selector, str) else selector) for v in verdicts)
    return DetectionRate(detected, len(verdicts))


# --------------------------------------------------------------------------
# volumes
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class VolumeRow:
    min: int
    max: int
    mean: float
    stdev: float

    def rounded(self) -> Tuple[int, int, float, int]:
        """Display precision: mean to one decimal, stdev to an integer."""
        return self.min, self.max, _round_half_up(self.mean, 1), int(_round_half_up(self.stdev, 0))

    def to_dict(self) -> dict:
        return {"min": self.min, "max": self.max, "mean": self.mean, "stdev": self.stdev}


def _round_half_up(x: float, digits: int) -> float:
    q = 10 ** digits
    return math.floor(x * q + 0.5) / q


VOLUME_ROWS = ("http", "network", "process", "combined")


@dataclass(frozen=True)
class VolumeStats:
    rows: Mapping[str, VolumeRow]
    sessions: int

    def __getitem__(self, key: str) -> VolumeRow:
        return self.rows[key]

    def to_dict(self) -> dict:
        return {"sessions": self.sessions, "rows": {k: v.to_dict() for k, v in self.rows.items()}}


def volume_stats(sessions: Sequence[ExploitSession]) -> VolumeStats:
    """Per-session event counts per source; population stdev."""
    if not sessions:
        raise ZeroDenominator("volume statistics need at least one session")
    counts: Dict[str, List[int]] = {k: [] for k in VOLUME_ROWS}
    for s in sessions:
        per = {src: 0 for src in Source}
        for ev in s.events:
            per[ev.source] += 1
        counts["http"].append(per[Source.HTTP])
        counts["network"].append(per[Source.NETWORK])
        counts["process"].append(per[Source.PROCESS])
        counts["combined"].append(len(s.events))
    rows = {
        k: VolumeRow(min(v), max(v), statistics.fmean(v), statistics.pstdev(v))
        for k, v in counts.items()
    }
    return VolumeStats(rows, len(sessions))


# --------------------------------------------------------------------------
# score tables
# --------------------------------------------------------------------------

DETECTION_SELECTORS: Tuple[str, ...] = ("full",) + tuple(p.value for p in PHASES)
COMBINED = "Combined"


@dataclass(frozen=True)
class ScoreRow:
    group: str
    schema_id: str
    sessions: int
    effectiveness: Mapping[str, Optional[EffectivenessScore]]  # "all" + phase values
    detection: Mapping[str, Optional[DetectionRate]]  # "full" + phase values

    def cells(self) -> Dict[str, str]:
        out = {}
        for k, v in self.effectiveness.items():
            out[f"eff_{k}"] = v.cell() if v is not None else EMPTY_CELL
        for k, v in self.detection.items():
            out[f"det_{k}"] = v.cell() if v is not None else EMPTY_CELL
        return out

    def to_dict(self) -> dict:
        return {
            "group": self.group,
            "schema": self.schema_id,
            "sessions": self.sessions,
            "effectiveness": {k: (v.to_dict() if v else None) for k, v in self.effectiveness.items()},
            "detection": {k: (v.to_dict() if v else None) for k, v in self.detection.items()},
            "cells": self.cells(),
        }


@dataclass(frozen=True)
class ScoreTable:
    rows: Tuple[ScoreRow, ...]
    schemas: Tuple[str, ...]
    verdicts: Tuple[DetectionVerdict, ...] = field(default=())

    def row(self, group: str, schema_id: str) -> ScoreRow:
        for r in self.rows:
            if r.group == group and r.schema_id == schema_id:
                return r
        raise KeyError((group, schema_id))


def undefined_as_none(fn, *args):
    try:
        return fn(*args)
    except ZeroDenominator:
        return None


def _score_row(ledger: SignatureLedger, group: str, schema_id: str, cves: Sequence[str]) -> ScoreRow:
    eff: Dict[str, Optional[EffectivenessScore]] = {
        "all": undefined_as_none(phase_effectiveness, ledger, schema_id, None, cves)
    }
    for p in PHASES:
        eff[p.value] = undefined_as_none(phase_effectiveness, ledger, schema_id, p, cves)
    verdicts = [detection(ledger, c, schema_id) for c in cves]
    det = {sel: undefined_as_none(detection_rate, verdicts, sel) for sel in DETECTION_SELECTORS}
    return ScoreRow(group, schema_id, len(cves), eff, det)


def aggregate(
    ledger: SignatureLedger,
    group_by: str = "none",
    schemas: Optional[Sequence[str]] = None,
) -> ScoreTable:
    """One row per (group, schema); groups ordered Web, Service, Combined.

    With ``group_by="none"`` only Combined rows are produced. Groups with no
    sessions are omitted; undefined ratios are ``None`` (rendered ``-``).
    """
    if group_by not in ("none", "vuln_class", "vuln-class"):
        raise ValueError(f"unknown grouping {group_by!r}")
    schemas = tuple(schemas) if schemas is not None else ledger.schemas
    all_cves = ledger.cves()
    groups: List[Tuple[str, Tuple[str, ...]]] = []
    if group_by != "none":
        for vc in (VulnClass.WEB, VulnClass.SERVICE):
            members = tuple(c for c in all_cves if ledger.sessions[c].vuln_class is vc)
            if members:
                groups.append((vc.label, members))
    groups.append((COMBINED, all_cves))
    rows = tuple(_score_row(ledger, g, s, members) for g, members in groups for s in schemas)
    verdicts = tuple(detection(ledger, c, s) for c in all_cves for s in schemas)
    return ScoreTable(rows, schemas, verdicts)
