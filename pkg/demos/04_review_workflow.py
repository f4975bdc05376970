#!/usr/bin/env python3
"""The human review workflow without a browser: ratings, aggregation, gold export.

The same operations back the HTTP service (`mailtod serve`); here they run
in-process against a temporary event-log directory.
"""

import tempfile

from mailtod.dsl import AnnotatedUtterance, AnnotationItem, Speaker
from mailtod.ontology import SlotRef
from mailtod.orchestrator import DatasetBundle, Dialogue, GenerationMeta
from mailtod.review import RatingIn, ReviewStore, aggregate_ratings, export_gold, summarize_ratings


def test_dialogue(did):
    turns = [
        AnnotatedUtterance(Speaker.USER, "I want to go to Namibia.",
                           [AnnotationItem("inform", SlotRef.parse("destination"), "Namibia")]),
        AnnotatedUtterance(Speaker.BOT, "When would you like to travel?",
                           [AnnotationItem("request", SlotRef.parse("travel_period_start"))]),
    ]
    return Dialogue(id=did, email_id=f"mail-{did}", turns=turns, variant_id="v0",
                    generation_meta=GenerationMeta("demo", 0.0, ""))


bundle = DatasetBundle(splits={"train": [], "validation": [],
                               "test": [test_dialogue("d1"), test_dialogue("d2")]})

with tempfile.TemporaryDirectory() as data_dir:
    store = ReviewStore(data_dir)

    # three independent raters per dialogue; C-2-1/C-2-2 exist only when C-2 is yes
    store.submit_rating("d1", RatingIn(rater_id="r1", c0=True, c1=4, c2=True,
                                       c2_1=4, c2_2=5, c3=4, c4=5, c5=5))
    store.submit_rating("d1", RatingIn(rater_id="r2", c0=True, c1=5, c2=False,
                                       c3=4, c4=4, c5=4))
    store.submit_rating("d1", RatingIn(rater_id="r3", c0=False, c1=3, c2=True,
                                       c2_1=2, c2_2=3, c3=4, c4=3, c5=3))

    aggregate = aggregate_ratings("d1", store.ratings_for("d1"))
    print("per-dialogue aggregate:")
    for key, value in aggregate.items():
        print(f"  {key}: {value}")

    print("\ncorpus summary (average / valid / invalid):")
    summary = summarize_ratings(store.all_ratings())
    for criterion, columns in summary["criteria"].items():
        print(f"  {criterion}: {columns}")

    # gold editing is versioned; the latest version wins at export time
    store.save_gold("d1", 0, [{"act_type": "inform", "slot": "trip.destination",
                               "value": "Windhoek"}], editor_id="expert-1")
    exported = export_gold(bundle, store)
    print(f"\ngold export coverage: {exported['coverage']}")
    print(f"edited turn annotation: {exported['dialogues'][0]['turns'][0]['annotation']}")
