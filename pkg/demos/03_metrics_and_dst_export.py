#!/usr/bin/env python3
"""Score annotations with EM / SM / PR and export the flattened DST format.

Shows the two soft-match readings side by side: the prose rule (all slots or
all values correct) and the appendix rule (any slot or value overlap).
"""

from mailtod.dsl import AnnotationItem
from mailtod.metrics import dst_records, evaluate, exact_match, presence, soft_match, state_set
from mailtod.ontology import SlotRef, default_ontology
from mailtod.orchestrator import Dialogue, GenerationMeta
from mailtod.dsl import AnnotatedUtterance, Speaker


def item(act, slot, value=None):
    return AnnotationItem(act_type=act, slot=SlotRef.parse(slot), value=value)


def dialogue(did, turn_items):
    turns = [AnnotatedUtterance(speaker=Speaker.USER if k % 2 == 0 else Speaker.BOT,
                                text=f"utterance {k}", items=items)
             for k, items in enumerate(turn_items)]
    return Dialogue(id=did, email_id=f"mail-{did}", turns=turns, variant_id="v0",
                    generation_meta=GenerationMeta("demo", 0.0, ""))


ontology = default_ontology()

# pointwise: the pair that separates the two soft-match modes
gold = state_set([item("inform", "destination", "Namibia"), item("inform", "guests", "2")],
                 ontology)
pred = state_set([item("inform", "destination", "Namibia")], ontology)
print("gold:", sorted(gold))
print("pred:", sorted(pred))
print(f"EM={exact_match(gold, pred)}  SM(prose)={soft_match(gold, pred, 'prose')}  "
      f"SM(appendix)={soft_match(gold, pred, 'appendix')}  PR={presence(gold, pred)}")

# dataset-level: evaluate a prediction bundle against gold
gold_dialogues = [dialogue("d1", [[item("inform", "destination", "Namibia")],
                                  [item("request", "travel_period_start")]])]
pred_dialogues = [dialogue("d1", [[item("inform", "destination", "Namibia")],
                                  [item("request", "length")]])]
report = evaluate(gold_dialogues, pred_dialogues, mode="prose", ont=ontology)
print()
print(report.to_table())

# flattened DST training format
print("\nDST records:")
for record in dst_records(gold_dialogues, ontology):
    print(f"  input:  {record['input']}")
    print(f"  target: {record['target']}")
