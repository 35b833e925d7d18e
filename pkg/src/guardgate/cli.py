"""Command line interface.

Exit code contract for ``vet check``: 0 when every vetted field came back
PASS or WARN, 1 when anything was masked or blocked, 2 on operational
failure (unusable config, no readable input at all).
"""

from __future__ import annotations

import json
import logging
import signal
import sys
import uuid
from pathlib import Path

import click
import yaml

from .attribution import index_corpus
from .config import build_runtime, load_config
from .errors import GuardgateError, PolicyLoadError
from .keywords import build_lexicon, save_lexicon
from .model import Decision, Direction, ShieldRequest
from .policy import load_policy_file
from .store import DataStore
from .wire import verdict_to_dict

logger = logging.getLogger(__name__)

_VET_FIELDS = ("context", "question", "answer")


@click.group()
@click.option("--verbose", is_flag=True, help="Debug logging.")
def main(verbose: bool):
    """Guardrail gateway for LLM prompts and responses."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s")


# ---------------------------------------------------------------------------
# serve

@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="Config file (or GUARDGATE_CONFIG).")
def serve(config_path):
    """Run the HTTP service until SIGTERM/SIGINT."""
    from .server import serve as start_service
    try:
        handle = start_service(config_path)
    except GuardgateError as exc:
        raise click.ClickException(str(exc)) from exc

    def _stop(signum, frame):
        click.echo("shutting down...", err=True)
        handle.stop()

    signal.signal(signal.SIGTERM, _stop)
    signal.signal(signal.SIGINT, _stop)
    click.echo(f"listening on {handle.host}:{handle.port}")
    handle.wait()


# ---------------------------------------------------------------------------
# check (batch vet)

def _iter_input_files(inputs: tuple[str, ...]) -> list[Path]:
    files: list[Path] = []
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            files.extend(sorted(q for q in p.rglob("*") if q.is_file()))
        else:
            files.append(p)
    return files


def _contribution_fields(path: Path) -> list[tuple[str, str]]:
    """Extract vettable text fields from a contribution file.

    YAML records yield their context/question/answer fields (top level or
    per seed example); anything else is vetted whole as field "text".
    """
    raw = path.read_text(encoding="utf-8")
    if path.suffix.lower() in (".yaml", ".yml"):
        try:
            doc = yaml.safe_load(raw)
        except yaml.YAMLError:
            doc = None
        if isinstance(doc, dict):
            fields: list[tuple[str, str]] = []
            for name in _VET_FIELDS:
                value = doc.get(name)
                if isinstance(value, str) and value.strip():
                    fields.append((name, value))
            examples = doc.get("seed_examples")
            if isinstance(examples, list):
                for i, ex in enumerate(examples):
                    if not isinstance(ex, dict):
                        continue
                    for name in _VET_FIELDS:
                        value = ex.get(name)
                        if isinstance(value, str) and value.strip():
                            fields.append((f"seed_examples[{i}].{name}", value))
            if fields:
                return fields
    return [("text", raw)] if raw.strip() else []


@main.command()
@click.option("--input", "inputs", multiple=True, required=True,
              type=click.Path(), help="File or directory to vet (repeatable).")
@click.option("--policy", "policies", multiple=True, default=("default",),
              show_default=True, help="Policy id to apply (repeatable).")
@click.option("--jurisdiction", default="default", show_default=True)
@click.option("--direction", type=click.Choice([d.value for d in Direction]),
              default=Direction.PROMPT.value, show_default=True)
@click.option("--format", "fmt", type=click.Choice(["text", "json", "annotations"]),
              default="text", show_default=True)
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.pass_context
def check(ctx, inputs, policies, jurisdiction, direction, fmt, config_path):
    """Vet files offline and report violations.

    The annotations format emits one JSON object per line with file, field,
    span and category, ready for review tooling.
    """
    try:
        runtime = build_runtime(load_config(config_path))
    except GuardgateError as exc:
        raise click.ClickException(str(exc)) from exc

    files = _iter_input_files(inputs)
    if not files:
        click.echo("no input files", err=True)
        ctx.exit(2)

    report = {"files": [], "summary": {}}
    annotations = []
    counts = {d.value: 0 for d in Decision}
    worst = Decision.PASS
    errors = 0
    try:
        for path in files:
            entry = {"path": str(path), "error": None, "fields": []}
            report["files"].append(entry)
            try:
                fields = _contribution_fields(path)
            except OSError as exc:
                entry["error"] = str(exc)
                errors += 1
                continue
            for field_name, text in fields:
                req = ShieldRequest(
                    request_id=uuid.uuid4().hex,
                    text=text,
                    direction=Direction(direction),
                    jurisdiction=jurisdiction,
                    policy_ids=tuple(policies),
                )
                verdict = runtime.orchestrator.shield(req)
                counts[verdict.decision.value] += 1
                worst = worst.combine(verdict.decision)
                entry["fields"].append({
                    "field": field_name,
                    "decision": verdict.decision.value,
                    "warnings": list(verdict.warnings),
                    "audit": verdict_to_dict(verdict)["audit"],
                })
                annotations.extend(
                    _annotations_for(path, field_name, verdict))
    finally:
        runtime.close()

    if errors == len(files):
        click.echo("no readable input files", err=True)
        ctx.exit(2)

    exit_code = 1 if worst.rank >= Decision.MASK.rank else 0
    report["summary"] = {
        "files": len(files),
        "errors": errors,
        "decisions": counts,
        "exit_code": exit_code,
    }

    if fmt == "json":
        click.echo(json.dumps(report, indent=2))
    elif fmt == "annotations":
        for ann in annotations:
            click.echo(json.dumps(ann))
    else:
        for entry in report["files"]:
            if entry["error"]:
                click.echo(f"{entry['path']}: ERROR {entry['error']}")
                continue
            for f in entry["fields"]:
                flagged = sorted(
                    {m['category'] for a in f["audit"] for m in a["matched"]})
                suffix = f" [{', '.join(flagged)}]" if flagged else ""
                click.echo(
                    f"{entry['path']} {f['field']}: "
                    f"{f['decision'].upper()}{suffix}")
        s = report["summary"]
        click.echo(f"{s['files']} file(s), {s['errors']} error(s), "
                   f"decisions: {s['decisions']}")
    ctx.exit(exit_code)


def _annotations_for(path: Path, field_name: str, verdict) -> list[dict]:
    """One annotation per distinct finding matched by a WARN-or-stronger
    firing, ordered by span."""
    seen = {}
    for firing in verdict.audit:
        if firing.action.rank < Decision.WARN.rank:
            continue
        for f in firing.matched:
            key = (f.detector_id, f.category, f.span.start if f.span else None,
                   f.span.end if f.span else None)
            prev = seen.get(key)
            if prev is None or firing.action.rank > prev["_rank"]:
                seen[key] = {
                    "_rank": firing.action.rank,
                    "file": str(path),
                    "field": field_name,
                    "span": ({"start": f.span.start, "end": f.span.end}
                             if f.span else None),
                    "category": f.category,
                    "detector_id": f.detector_id,
                    "label": f.label,
                    "score": f.score,
                    "action": firing.action.value,
                    "rule_id": f"{firing.policy_id}/{firing.rule_id}",
                }
    out = sorted(seen.values(),
                 key=lambda a: (a["span"]["start"] if a["span"] else -1,
                                a["category"]))
    for ann in out:
        del ann["_rank"]
    return out


# ---------------------------------------------------------------------------
# index

def _read_corpus(corpus: Path):
    if corpus.is_dir():
        for p in sorted(corpus.rglob("*")):
            if p.is_file():
                yield p.relative_to(corpus).as_posix(), p.read_text(encoding="utf-8")
    else:
        with corpus.open(encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                if "doc_id" not in rec or "text" not in rec:
                    raise click.ClickException(
                        f"{corpus}:{line_no}: need doc_id and text")
                yield str(rec["doc_id"]), str(rec["text"])


@main.command()
@click.option("--corpus", required=True, type=click.Path(exists=True),
              help="Directory of text files or a JSONL records file.")
@click.option("--k", default=5, show_default=True, help="Shingle width in words.")
@click.option("--store", "store_root", required=True, type=click.Path())
@click.option("--index-id", default="corpus-main", show_default=True)
def index(corpus, k, store_root, index_id):
    """Build and persist an attribution index."""
    try:
        idx = index_corpus(_read_corpus(Path(corpus)), k=k)
        DataStore(store_root).put("indexes", index_id, idx.to_bytes())
    except (GuardgateError, OSError, ValueError) as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"indexed {len(idx.docs)} doc(s), {idx.n_shingles} shingle(s) "
               f"-> indexes/{index_id}")


# ---------------------------------------------------------------------------
# train-lexicon

@main.command("train-lexicon")
@click.option("--labeled", required=True, type=click.Path(exists=True),
              help="JSONL of {text, label} with labels positive/negative.")
@click.option("--category", required=True)
@click.option("--top-n", default=25, show_default=True)
@click.option("--threshold", default=0.3, show_default=True)
@click.option("--output", required=True, type=click.Path())
def train_lexicon(labeled, category, top_n, threshold, output):
    """Learn a keyword lexicon from labeled documents."""
    docs = []
    with open(labeled, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            label = str(rec.get("label", "")).lower()
            if label not in ("positive", "negative"):
                raise click.ClickException(
                    f"{labeled}:{line_no}: label must be positive or negative")
            docs.append((str(rec.get("text", "")), label == "positive"))
    try:
        lexicon = build_lexicon(docs, category, top_n, threshold)
    except GuardgateError as exc:
        raise click.ClickException(str(exc)) from exc
    save_lexicon(lexicon, output)
    click.echo(f"lexicon {category}: {len(lexicon.keywords)} term(s) -> {output}")
    for term, weight in sorted(lexicon.keywords.items(), key=lambda kv: -kv[1]):
        click.echo(f"  {term}\t{weight:.6f}")


# ---------------------------------------------------------------------------
# policy-validate

@main.command("policy-validate")
@click.option("--file", "path", required=True, type=click.Path(exists=True))
@click.pass_context
def policy_validate(ctx, path):
    """Validate a policy template file."""
    try:
        template = load_policy_file(path)
    except PolicyLoadError as exc:
        click.echo(f"invalid: {exc}", err=True)
        ctx.exit(1)
    except (GuardgateError, OSError) as exc:
        click.echo(str(exc), err=True)
        ctx.exit(2)
    click.echo(f"policy {template.policy_id}: OK ({len(template.rules)} rule(s), "
               f"jurisdiction {template.jurisdiction})")


if __name__ == "__main__":
    main()
