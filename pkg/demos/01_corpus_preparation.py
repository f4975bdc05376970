#!/usr/bin/env python3
"""Walk through corpus preparation: ingest, filter, anonymize, split, stats.

Runs entirely offline on the bundled 20-e-mail fixture corpus.
"""

from pathlib import Path

from mailtod.corpus import (
    RawEmail,
    RedactionRuleSet,
    anonymize,
    corpus_stats,
    filter_emails,
    kept_emails,
    read_corpus,
    sample_splits,
)

FIXTURE = Path(__file__).parent.parent / "tests" / "fixtures" / "filter_corpus.jsonl"

# The fixture is stored in the canonical corpus format, so read_corpus gives us
# CleanEmail records; we rewrap them as raw input for the filtering stage.
emails = [RawEmail(id=e.id, body=e.body, subject=e.subject, source_lang=e.source_lang)
          for e in read_corpus(FIXTURE)]
print(f"ingested {len(emails)} e-mails")

# 1) rule-based noise filtering: one verdict per e-mail
verdicts = filter_emails(emails)
for v in verdicts:
    if not v.kept:
        print(f"  rejected {v.email_id}: {v.reason.value}")
kept = kept_emails(emails, verdicts)
print(f"kept {len(kept)}/{len(emails)}")

# 2) PII redaction with a small name dictionary
rules = RedactionRuleSet(names=("Max Mustermann",))
sample = RawEmail(id="pii-demo",
                  body="Gruss Max Mustermann, erreichbar unter +49 170 1234567 "
                       "oder max@example.org")
clean = anonymize(sample, rules)
print("\nanonymization demo:")
print(f"  before: {sample.body}")
print(f"  after:  {clean.body}")
print(f"  spans:  {[(r.start, r.end, r.category) for r in clean.redactions]}")

# 3) disjoint splits, reproducible by seed
cleaned = [anonymize(e) for e in kept]
splits = sample_splits(cleaned, (5, 2, 1), seed=42)
print(f"\nsplit sizes: {splits.sizes()}")

# 4) short vs elaborate breakdown
report = corpus_stats(cleaned, short_threshold=25)
print(f"\nstats: {report.short} short, {report.elaborate} elaborate "
      f"(threshold {report.short_threshold} tokens)")
print(f"histogram: {report.histogram}")
