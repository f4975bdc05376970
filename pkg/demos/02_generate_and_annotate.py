#!/usr/bin/env python3
"""Run the two-phase pipeline offline with the deterministic mock client.

Phase one turns each e-mail into a dialogue; phase two annotates every
utterance independently, seeing only the dialogue prefix (never the e-mail).
Swap MockLLMClient for HttpLLMClient to hit a real chat-completion endpoint.
"""

import tempfile
from pathlib import Path

from mailtod.corpus import read_corpus, sample_splits
from mailtod.dsl import serialize
from mailtod.ontology import default_ontology
from mailtod.orchestrator import MockLLMClient, run_pipeline
from mailtod.promptkit import PromptLibrary, build_annotation_prompt

FIXTURE = Path(__file__).parent.parent / "tests" / "fixtures" / "pipeline_corpus.jsonl"

emails = read_corpus(FIXTURE)
splits = sample_splits(emails, (14, 3, 3), seed=42)
library = PromptLibrary.load()
ontology = default_ontology()
client = MockLLMClient()  # deterministic; records every request it would send

with tempfile.TemporaryDirectory() as out_dir:
    bundle = run_pipeline(emails, splits, client, library, ontology, out_dir,
                          seed=42, clock=lambda: 0.0)

print({split: len(dialogues) for split, dialogues in bundle.splits.items()})

dialogue = bundle.splits["train"][0]
print(f"\ndialogue {dialogue.id} (from e-mail {dialogue.email_id}, "
      f"variant {dialogue.variant_id}):")
for turn in dialogue.turns:
    suffix = f" // {serialize(turn.items)}" if turn.items else ""
    print(f"  {turn.speaker.value:>4}: {turn.text}{suffix}")

# The phase-isolation contract is visible in the prompts themselves: the
# annotation prompt for turn 1 contains turns 0..1 and the slot list, nothing else.
prompt = build_annotation_prompt(dialogue, 1, ontology, library)
print("\nannotation prompt for turn 1 (user message):")
print(prompt.messages[1][1])

n_generation = len(client.captured_payloads("generation"))
n_annotation = len(client.captured_payloads("annotation"))
print(f"requests issued: {n_generation} generation, {n_annotation} annotation "
      f"(= total turns {sum(len(d.turns) for d in bundle.dialogues())})")
