"""Command-line entry point wiring the pipeline stages together.

Each stage reads and writes the canonical file formats, so stages compose
through files and intermediate artifacts stay inspectable.  The ``pipeline``
meta-command chains generation and annotation in one resumable run.
"""

from __future__ import annotations

import json
import logging
import sys
from contextlib import contextmanager
from pathlib import Path

import click

from . import corpus as corpus_mod
from . import metrics as metrics_mod
from .corpus import (
    FilterRuleSet,
    HttpMTClient,
    RedactionRuleSet,
    SplitAssignment,
    anonymize,
    as_clean,
    corpus_stats,
    filter_emails,
    ingest,
    kept_emails,
    load_mapping_file,
    read_corpus,
    sample_splits,
    translate_all,
    write_corpus,
)
from .dsl import validate
from .errors import MailtodError
from .ontology import load_ontology
from .orchestrator import (
    DatasetBundle,
    HttpLLMClient,
    LLMClientConfig,
    MockLLMClient,
    annotate_dialogue,
    load_bundle,
    load_dialogues,
    run_pipeline,
    save_bundle,
)
from .promptkit import PromptLibrary

logger = logging.getLogger("mailtod")


@contextmanager
def guard(ctx: click.Context):
    """Convert toolkit errors to exit code 1 (JSON on stderr when requested)."""
    try:
        yield
    except MailtodError as e:
        if ctx.obj.get("json_errors"):
            click.echo(json.dumps(e.to_dict(), ensure_ascii=False), err=True)
        else:
            click.echo(f"error [{e.code}]: {e.message}", err=True)
        ctx.exit(1)


@click.group()
@click.option("--seed", type=int, default=42, show_default=True, help="Global random seed.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="TOML/JSON config file; top-level keys are command names "
                   "mapping to flag defaults.")
@click.option("--mock-llm", "mock_llm", default=None, metavar="DIR",
              help="Use the deterministic offline LLM client with canned responses "
                   "from DIR; pass '-' for purely synthesized responses.")
@click.option("--json-errors", is_flag=True, help="Emit machine-readable error JSON on stderr.")
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
@click.pass_context
def cli(ctx, seed, config_path, mock_llm, json_errors, verbose):
    """Monologue e-mails in, annotated task-oriented dialogues out."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    ctx.obj = {"seed": seed, "mock_llm": mock_llm, "json_errors": json_errors}
    if config_path:
        ctx.default_map = load_mapping_file(config_path)


def _make_client(obj: dict, endpoint: str | None, model: str, max_retries: int,
                 timeout: float):
    if obj.get("mock_llm") is not None:
        fixtures = None if obj["mock_llm"] in ("", "-") else obj["mock_llm"]
        return MockLLMClient(fixtures_dir=fixtures), (lambda: 0.0)
    if not endpoint:
        raise click.UsageError("--endpoint is required unless --mock-llm is set")
    cfg = LLMClientConfig(base_url=endpoint, model=model, max_retries=max_retries,
                          timeout=timeout)
    return HttpLLMClient(cfg), None


def _load_splits(splits_path: str | None, emails, seed: int) -> SplitAssignment:
    if splits_path:
        return SplitAssignment.load(splits_path)
    # No split file: treat the whole corpus as the train split.
    return SplitAssignment(assignments={e.id: corpus_mod.TRAIN for e in emails}, seed=seed)


# --- corpus stages ----------------------------------------------------------

@cli.command("ingest")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--format", "fmt", type=click.Choice(["jsonl", "csv", "dir"]), default=None)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--strict", is_flag=True, help="Abort on the first malformed record.")
@click.pass_context
def ingest_cmd(ctx, in_path, fmt, out_path, strict):
    """Read raw e-mails and write them in the canonical corpus format."""
    with guard(ctx):
        emails = ingest(in_path, format=fmt, strict=strict)
        write_corpus([as_clean(e) for e in emails], out_path)
        click.echo(f"ingested {len(emails)} e-mails -> {out_path}")


@cli.command("filter")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--rules", "rules_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_path", required=True, type=click.Path(),
              help="Verdicts JSONL output.")
@click.option("--kept", "kept_path", type=click.Path(), default=None,
              help="Also write the kept e-mails as a corpus file.")
@click.pass_context
def filter_cmd(ctx, in_path, rules_path, out_path, kept_path):
    """Apply rule-based noise filtering and write one verdict per e-mail."""
    with guard(ctx):
        emails = read_corpus(in_path)
        rules = FilterRuleSet.load(rules_path) if rules_path else FilterRuleSet()
        verdicts = filter_emails(emails, rules)
        with open(out_path, "w", encoding="utf-8") as f:
            for v in verdicts:
                f.write(json.dumps({"email_id": v.email_id, "kept": v.kept,
                                    "reason": v.reason.value}) + "\n")
        if kept_path:
            write_corpus(kept_emails(emails, verdicts), kept_path)
        n_kept = sum(v.kept for v in verdicts)
        click.echo(f"kept {n_kept}/{len(verdicts)} e-mails")


@cli.command("anonymize")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--rules", "rules_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.pass_context
def anonymize_cmd(ctx, in_path, rules_path, out_path):
    """Redact PII with [CATEGORY] placeholders."""
    with guard(ctx):
        emails = read_corpus(in_path)
        rules = RedactionRuleSet.load(rules_path) if rules_path else RedactionRuleSet()
        cleaned = [anonymize(e, rules) for e in emails]
        write_corpus(cleaned, out_path)
        n_red = sum(len(e.redactions) for e in cleaned)
        click.echo(f"anonymized {len(cleaned)} e-mails, {n_red} redactions")


class _IdentityMT:
    """Offline stand-in that marks bodies as translated without changing them."""

    def translate(self, text, source, target):
        return text


@cli.command("translate")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--endpoint", default=None, help="MT endpoint URL.")
@click.option("--target", default="en", show_default=True)
@click.option("--concurrency", type=int, default=4, show_default=True)
@click.option("--mock-mt", is_flag=True, help="Identity translation for offline runs.")
@click.pass_context
def translate_cmd(ctx, in_path, out_path, endpoint, target, concurrency, mock_mt):
    """Translate e-mail bodies to the target language via the MT endpoint."""
    with guard(ctx):
        emails = read_corpus(in_path)
        if mock_mt:
            mt = _IdentityMT()
        elif endpoint:
            mt = HttpMTClient(endpoint)
        else:
            raise click.UsageError("--endpoint is required unless --mock-mt is set")
        translated, failures = translate_all(emails, mt, target_lang=target,
                                             concurrency=concurrency)
        write_corpus(translated, out_path)
        for failure in failures:
            logger.warning("translation failed: %s", failure)
        click.echo(f"translated {len(translated)} e-mails, {len(failures)} failures")


@cli.command("split")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--sizes", required=True, help="train,val,test e.g. 1500,150,200")
@click.option("--seed", type=int, default=None, help="Overrides the global seed.")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.pass_context
def split_cmd(ctx, in_path, sizes, seed, out_path):
    """Sample disjoint train/validation/test splits."""
    with guard(ctx):
        emails = read_corpus(in_path)
        try:
            train, val, test = (int(x) for x in sizes.split(","))
        except ValueError:
            raise click.UsageError("--sizes must be three comma-separated integers")
        assignment = sample_splits(emails, (train, val, test),
                                   seed if seed is not None else ctx.obj["seed"])
        assignment.save(out_path)
        click.echo(f"splits {assignment.sizes()} -> {out_path}")


@cli.command("stats")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--short-threshold", type=int, default=25, show_default=True)
@click.pass_context
def stats_cmd(ctx, in_path, short_threshold):
    """Token-length statistics: short vs elaborate e-mails plus a histogram."""
    with guard(ctx):
        report = corpus_stats(read_corpus(in_path), short_threshold=short_threshold)
        click.echo(json.dumps(report.to_dict(), indent=2))


# --- inference stages ---------------------------------------------------------

_llm_options = [
    click.option("--endpoint", default=None, help="Chat-completion endpoint URL."),
    click.option("--model", default="chat-model", show_default=True),
    click.option("--max-retries", type=int, default=2, show_default=True),
    click.option("--timeout", type=float, default=60.0, show_default=True),
    click.option("--concurrency", type=int, default=1, show_default=True),
    click.option("--templates", "templates_dir", type=click.Path(exists=True), default=None,
                 help="Override the built-in prompt templates."),
    click.option("--ontology", "ontology_path", type=click.Path(exists=True), default=None),
]


def llm_options(f):
    for option in reversed(_llm_options):
        f = option(f)
    return f


@cli.command("generate")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--splits", "splits_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--gen-temperature", type=float, default=0.7, show_default=True)
@click.option("--variant-policy", type=click.Choice(["round_robin", "random"]),
              default="round_robin", show_default=True)
@click.option("--max-failure-rate", type=float, default=0.1, show_default=True)
@llm_options
@click.pass_context
def generate_cmd(ctx, in_path, splits_path, out_dir, gen_temperature, variant_policy,
                 max_failure_rate, endpoint, model, max_retries, timeout, concurrency,
                 templates_dir, ontology_path):
    """Phase one: rewrite each e-mail as an unannotated dialogue bundle."""
    with guard(ctx):
        emails = read_corpus(in_path)
        splits = _load_splits(splits_path, emails, ctx.obj["seed"])
        client, clock = _make_client(ctx.obj, endpoint, model, max_retries, timeout)
        bundle = run_pipeline(
            emails, splits, client, PromptLibrary.load(templates_dir),
            load_ontology(ontology_path), out_dir,
            seed=ctx.obj["seed"], generation_temperature=gen_temperature,
            variant_policy=variant_policy, concurrency=concurrency,
            max_failure_rate=max_failure_rate, annotate=False, clock=clock,
        )
        total = sum(len(d) for d in bundle.splits.values())
        click.echo(f"generated {total} dialogues -> {out_dir}")


@cli.command("annotate")
@click.option("--in", "in_dir", required=True, type=click.Path(exists=True),
              help="Bundle directory from the generate stage.")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--ann-temperature", type=float, default=0.0, show_default=True)
@llm_options
@click.pass_context
def annotate_cmd(ctx, in_dir, out_dir, ann_temperature, endpoint, model, max_retries,
                 timeout, concurrency, templates_dir, ontology_path):
    """Phase two: annotate every utterance of an existing bundle."""
    with guard(ctx):
        bundle = load_bundle(in_dir)
        client, _ = _make_client(ctx.obj, endpoint, model, max_retries, timeout)
        library = PromptLibrary.load(templates_dir)
        ont = load_ontology(ontology_path)
        failures: list[dict] = []
        annotated = {
            split: [annotate_dialogue(d, client, library, ont,
                                      temperature=ann_temperature, failure_log=failures)
                    for d in dialogues]
            for split, dialogues in bundle.splits.items()
        }
        out_bundle = DatasetBundle(splits=annotated,
                                   manifest=dict(bundle.manifest, annotated=True))
        save_bundle(out_bundle, out_dir)
        with open(Path(out_dir) / "failures.jsonl", "w", encoding="utf-8") as f:
            for failure in failures:
                f.write(json.dumps(failure, sort_keys=True) + "\n")
        click.echo(f"annotated bundle -> {out_dir} ({len(failures)} turn failures)")


@cli.command("pipeline")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--splits", "splits_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--gen-temperature", type=float, default=0.7, show_default=True)
@click.option("--ann-temperature", type=float, default=0.0, show_default=True)
@click.option("--variant-policy", type=click.Choice(["round_robin", "random"]),
              default="round_robin", show_default=True)
@click.option("--max-failure-rate", type=float, default=0.1, show_default=True)
@llm_options
@click.pass_context
def pipeline_cmd(ctx, in_path, splits_path, out_dir, gen_temperature, ann_temperature,
                 variant_policy, max_failure_rate, endpoint, model, max_retries, timeout,
                 concurrency, templates_dir, ontology_path):
    """Both phases end to end; resumable by e-mail id."""
    with guard(ctx):
        emails = read_corpus(in_path)
        splits = _load_splits(splits_path, emails, ctx.obj["seed"])
        client, clock = _make_client(ctx.obj, endpoint, model, max_retries, timeout)
        bundle = run_pipeline(
            emails, splits, client, PromptLibrary.load(templates_dir),
            load_ontology(ontology_path), out_dir,
            seed=ctx.obj["seed"], generation_temperature=gen_temperature,
            annotation_temperature=ann_temperature, variant_policy=variant_policy,
            concurrency=concurrency, max_failure_rate=max_failure_rate, clock=clock,
        )
        total = sum(len(d) for d in bundle.splits.values())
        click.echo(f"pipeline complete: {total} annotated dialogues -> {out_dir}")


# --- evaluation & export ---------------------------------------------------------

@cli.command("validate")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--ontology", "ontology_path", type=click.Path(exists=True), default=None)
@click.pass_context
def validate_cmd(ctx, in_path, ontology_path):
    """Check every stored annotation item against the ontology."""
    with guard(ctx):
        ont = load_ontology(ontology_path)
        n_items = n_violations = 0
        for d in load_dialogues(in_path):
            for k, turn in enumerate(d.turns):
                n_items += len(turn.items)
                for v in validate(turn.items, ont):
                    n_violations += 1
                    click.echo(json.dumps({"dialogue_id": d.id, "turn": k, **v.to_dict()}))
        click.echo(f"checked {n_items} items, {n_violations} violations", err=True)


@cli.command("evaluate")
@click.option("--gold", "gold_path", required=True, type=click.Path(exists=True))
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True))
@click.option("--sm-mode", type=click.Choice(["prose", "appendix"]), default="prose",
              show_default=True)
@click.option("--ontology", "ontology_path", type=click.Path(exists=True), default=None)
@click.option("--include-act", is_flag=True, help="Match on (act_type, slot, value).")
@click.option("--json", "json_path", type=click.Path(), default=None,
              help="Also write the full report as JSON.")
@click.pass_context
def evaluate_cmd(ctx, gold_path, pred_path, sm_mode, ontology_path, include_act, json_path):
    """Score predicted annotations against gold with EM, SM, and PR."""
    with guard(ctx):
        report = metrics_mod.evaluate(
            load_dialogues(gold_path), load_dialogues(pred_path),
            mode=sm_mode, ont=load_ontology(ontology_path) if ontology_path else None,
            include_act=include_act,
        )
        click.echo(report.to_table())
        if json_path:
            Path(json_path).write_text(json.dumps(report.to_dict(), indent=2) + "\n",
                                       encoding="utf-8")


@cli.command("export-dst")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--ontology", "ontology_path", type=click.Path(exists=True), default=None)
@click.pass_context
def export_dst_cmd(ctx, in_path, out_path, ontology_path):
    """Write the flattened DST training format (<ctx>...</ctx> -> <annot>...</annot>)."""
    with guard(ctx):
        n = metrics_mod.export_dst(load_dialogues(in_path), out_path,
                                   ont=load_ontology(ontology_path))
        click.echo(f"wrote {n} DST records -> {out_path}")


@cli.command("serve")
@click.option("--dataset", "dataset_dir", required=True, type=click.Path(exists=True))
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), default=None,
              help="Canonical corpus file for the source e-mail panel.")
@click.option("--data-dir", required=True, type=click.Path(),
              help="Directory for the review event logs.")
@click.option("--ontology", "ontology_path", type=click.Path(exists=True), default=None)
@click.option("--ui-dir", type=click.Path(exists=True), default=None,
              help="Static review UI bundle to serve at /.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8080, show_default=True)
@click.pass_context
def serve_cmd(ctx, dataset_dir, corpus_path, data_dir, ontology_path, ui_dir, host, port):
    """Run the human review service."""
    with guard(ctx):
        import uvicorn

        from .review import create_app

        bundle = load_bundle(dataset_dir)
        emails = {e.id: e for e in read_corpus(corpus_path)} if corpus_path else {}
        app = create_app(bundle, emails, load_ontology(ontology_path), data_dir,
                         ui_dir=ui_dir)
        uvicorn.run(app, host=host, port=port)


def main():
    cli(prog_name="mailtod")


if __name__ == "__main__":
    main()
