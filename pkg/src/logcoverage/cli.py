"""Command-line entry point: ``logcoverage <subcommand> [flags]``.

Exit codes: 0 success, 2 input error, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import timedelta
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from .errors import InputError, InvalidSpec, InvariantViolation, IoFailure
from .metrics import aggregate, volume_stats
from .normalize import DEFAULT_SCHEMAS, SchemaTemplate, identity_template, load_templates, default_template_dir
from .report import detect_tree, gap_report, render_gaps, render_ingest, render_score, render_tree, render_volumes
from .sessions import TaggingResult, build_sessions, load_attack_records, write_attack_records
from .signatures import PHASES, Phase, build_ledger, load_signatures
from .synth import (
    ScenarioSpec,
    Vector,
    manifest_json,
    scenario_signatures,
    shellshock_fixture,
    suite_specs,
    synthesize,
    synthesize_suite,
)
from .telemetry import EventCorpus, load_corpus, write_corpus

log = logging.getLogger("logcoverage")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INVARIANT = 3


def _schemas(text: str) -> List[str]:
    out = [s.strip().lower() for s in text.split(",") if s.strip()]
    if not out:
        raise argparse.ArgumentTypeError("at least one schema is required")
    if len(set(out)) != len(out):
        raise argparse.ArgumentTypeError("schemas listed twice")
    return out


def _phases(text: str) -> List[Phase]:
    try:
        return [Phase.parse(p) for p in text.split(",") if p.strip()]
    except InputError as exc:
        raise argparse.ArgumentTypeError(exc.message) from None


def _seconds(text: str) -> timedelta:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number of seconds: {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("slack must be non-negative")
    return timedelta(seconds=v)


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="logcoverage", description="Measure how much attack evidence survives log normalization.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    out = argparse.ArgumentParser(add_help=False)
    out.add_argument("--format", choices=("text", "csv", "json"), default="text")
    out.add_argument("--out", type=Path, help="write the report here instead of stdout")

    corpus = argparse.ArgumentParser(add_help=False)
    corpus.add_argument("--raw", type=Path, required=True, help="raw telemetry JSONL")
    corpus.add_argument("--attack-log", type=Path, required=True, help="attack record JSONL")
    corpus.add_argument("--slack-pre", type=_seconds, default=timedelta(seconds=2), metavar="SECS")
    corpus.add_argument("--slack-post", type=_seconds, default=timedelta(seconds=5), metavar="SECS")

    scoring = argparse.ArgumentParser(add_help=False)
    scoring.add_argument("--signatures", type=Path, required=True, help="signature JSON")
    scoring.add_argument("--templates", type=Path, default=None, help="template directory (default: bundled)")
    scoring.add_argument("--schemas", type=_schemas, default=list(DEFAULT_SCHEMAS),
                         help="comma-separated schema ids; 'identity' copies every raw field")

    ing = sub.add_parser("ingest", parents=[out], help="parse a corpus and summarize it")
    ing.add_argument("--raw", type=Path, required=True)
    ing.add_argument("--attack-log", type=Path)
    ing.add_argument("--slack-pre", type=_seconds, default=timedelta(seconds=2), metavar="SECS")
    ing.add_argument("--slack-post", type=_seconds, default=timedelta(seconds=5), metavar="SECS")

    syn = sub.add_parser("synth", help="write a synthetic corpus, attack log, signatures and manifest")
    syn.add_argument("kind", choices=("shellshock", "scenario", "suite"))
    syn.add_argument("--out", type=Path, required=True, help="output directory")
    syn.add_argument("--seed", type=_u64, default=0)
    syn.add_argument("--cve", default="CVE-2099-0001")
    syn.add_argument("--vector", choices=[v.value for v in Vector], default=Vector.HTTP_GET.value)
    syn.add_argument("--service", default=None, help="service label (default HTTP or Samba by vector)")
    syn.add_argument("--c2-port", type=int, default=4444)
    syn.add_argument("--no-c2", action="store_true", help="omit the C2 egress event")
    syn.add_argument("--benign-noise", type=int, default=4)
    for v in Vector:
        syn.add_argument(f"--{v.value}", type=int, default=0, metavar="N", help=f"suite: number of {v.value} scenarios")

    sc = sub.add_parser("score", parents=[corpus, scoring, out], help="effectiveness and detection tables")
    sc.add_argument("--group-by", choices=("none", "vuln-class"), default="none")

    sub.add_parser("gaps", parents=[corpus, scoring, out], help="why raw-present signatures were lost")

    tr = sub.add_parser("tree", parents=[corpus, scoring, out], help="web detectability breakdown by vector")
    tr.add_argument("--tree-phases", type=_phases, default=list(PHASES), metavar="PHASES",
                    help="phases that must all be detected for 'Detect' (default: all three)")

    sub.add_parser("volumes", parents=[corpus, out], help="per-session event volume statistics")
    return p


# --------------------------------------------------------------------------
# pipeline
# --------------------------------------------------------------------------

def _tag(args) -> tuple:
    corpus = load_corpus(args.raw)
    records = load_attack_records(args.attack_log)
    tagging = build_sessions(records, corpus, (args.slack_pre, args.slack_post))
    for c in tagging.conflicts:
        log.warning("overlapping windows on %s: %s and %s", "/".join(c.hosts), c.first, c.second)
    return corpus, tagging


def _templates(args, corpus: EventCorpus) -> Dict[str, SchemaTemplate]:
    wanted = [s for s in args.schemas if s != "identity"]
    directory = args.templates if args.templates is not None else default_template_dir()
    found = load_templates(directory, wanted) if wanted else {}
    out: Dict[str, SchemaTemplate] = {}
    for s in args.schemas:
        out[s] = identity_template(corpus.events) if s == "identity" else found[s]
    return out


def _ledger(args):
    corpus, tagging = _tag(args)
    sigs = load_signatures(args.signatures)
    templates = _templates(args, corpus)
    ledger = build_ledger(tagging.sessions, sigs, templates)
    ledger.check()
    if ledger.unknown_cves:
        log.warning("signatures reference CVEs with no attack record: %s", ", ".join(ledger.unknown_cves))
    return ledger, templates


def _emit(text: str, path: Optional[Path]) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoFailure(str(exc), path=str(path)) from None


def cmd_ingest(args) -> None:
    corpus = load_corpus(args.raw)
    summary: Dict[str, object] = {
        "events": len(corpus),
        "skipped": corpus.skip_count,
    }
    for src, n in corpus.source_counts().items():
        summary[f"events_{src.value}"] = n
    if args.attack_log is not None:
        records = load_attack_records(args.attack_log)
        tagging: TaggingResult = build_sessions(records, corpus, (args.slack_pre, args.slack_post))
        summary["sessions"] = len(tagging.sessions)
        summary["tagged"] = sum(len(s.event_ids) for s in tagging.sessions)
        summary["untagged"] = tagging.untagged_count
        summary["overlaps"] = len(tagging.conflicts)
    _emit(render_ingest(summary, args.format), args.out)


def _write_bundle(out: Path, corpus, records, sigs, manifests) -> None:
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_corpus(corpus, out / "raw.jsonl")
        write_attack_records(records, out / "attacks.jsonl")
        (out / "signatures.json").write_text(sigs.to_json(), encoding="utf-8")
        (out / "manifest.json").write_text(manifest_json(manifests), encoding="utf-8")
    except OSError as exc:
        raise IoFailure(str(exc), path=str(out)) from None


def cmd_synth(args) -> None:
    if args.kind == "shellshock":
        corpus, record, sigs, manifest = shellshock_fixture()
        _write_bundle(args.out, corpus, [record], sigs, [manifest])
    elif args.kind == "scenario":
        spec = ScenarioSpec(
            cve=args.cve, vector=Vector(args.vector), c2_port=args.c2_port, seed=args.seed,
            benign_noise=args.benign_noise, plant_c2=not args.no_c2, service=args.service,
        )
        corpus, record, manifest = synthesize(spec)
        _write_bundle(args.out, corpus, [record], scenario_signatures(spec), [manifest])
    else:
        counts = {v: getattr(args, v.value.replace("-", "_")) for v in Vector}
        if any(n < 0 for n in counts.values()):
            raise InvalidSpec("scenario counts must be non-negative")
        if not sum(counts.values()):
            raise InvalidSpec("suite needs at least one scenario (e.g. --http-get 5)")
        suite = synthesize_suite(suite_specs(counts, seed=args.seed, benign_noise=args.benign_noise))
        _write_bundle(args.out, suite.corpus, suite.records, suite.signatures, suite.manifests)
    log.info("wrote %s", args.out)


def cmd_score(args) -> None:
    ledger, _ = _ledger(args)
    table = aggregate(ledger, args.group_by, schemas=args.schemas)
    _emit(render_score(table, ledger, args.format), args.out)


def cmd_gaps(args) -> None:
    ledger, templates = _ledger(args)
    _emit(render_gaps(gap_report(ledger, templates), args.format), args.out)


def cmd_tree(args) -> None:
    ledger, _ = _ledger(args)
    trees = [detect_tree(ledger, s, args.tree_phases) for s in args.schemas]
    if args.format == "json":
        text = json.dumps([t.to_dict() for t in trees], indent=2) + "\n"
    elif args.format == "csv":
        text = "".join(render_tree(t, "csv").split("\n", 1)[1] if i else render_tree(t, "csv")
                       for i, t in enumerate(trees))
    else:
        text = "\n".join(render_tree(t) for t in trees)
    _emit(text, args.out)


def cmd_volumes(args) -> None:
    _, tagging = _tag(args)
    _emit(render_volumes(volume_stats(tagging.sessions), args.format), args.out)


COMMANDS = {
    "ingest": cmd_ingest,
    "synth": cmd_synth,
    "score": cmd_score,
    "gaps": cmd_gaps,
    "tree": cmd_tree,
    "volumes": cmd_volumes,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        COMMANDS[args.command](args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InvariantViolation as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
