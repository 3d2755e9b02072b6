"""Measure how much attack evidence survives log normalization.

Raw telemetry is tagged into per-CVE exploit sessions, normalized through
CIM/OCSF/ECS-style templates, and matched against phase-mapped signatures
to score effectiveness and cardinal detection per schema.
"""

from .errors import InputError, InvariantViolation, LogCoverageError
from .metrics import aggregate, detection, detection_rate, effectiveness, percent, phase_effectiveness, volume_stats
from .normalize import SchemaTemplate, default_templates, identity_template, load_templates, normalize
from .report import detect_tree, gap_report
from .sessions import AttackRecord, build_sessions, load_attack_records
from .signatures import Phase, Signature, SignatureSet, build_ledger, load_signatures
from .synth import ScenarioSpec, Vector, shellshock_fixture, synthesize
from .telemetry import EventCorpus, RawEvent, Source, load_corpus, parse_raw_event

__version__ = "0.1.0"

__all__ = [
    "AttackRecord", "EventCorpus", "InputError", "InvariantViolation", "LogCoverageError",
    "Phase", "RawEvent", "ScenarioSpec", "SchemaTemplate", "Signature", "SignatureSet",
    "Source", "Vector", "aggregate", "build_ledger", "build_sessions", "default_templates",
    "detect_tree", "detection", "detection_rate", "effectiveness", "gap_report",
    "identity_template", "load_attack_records", "load_corpus", "load_signatures",
    "load_templates", "normalize", "parse_raw_event", "percent", "phase_effectiveness",
    "shellshock_fixture", "synthesize", "volume_stats",
]
