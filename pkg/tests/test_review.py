from __future__ import annotations

import json

import pytest
from fastapi.testclient import TestClient

from mailtod.corpus import CleanEmail
from mailtod.errors import NoRatingsError
from mailtod.metrics import evaluate
from mailtod.ontology import default_ontology
from mailtod.orchestrator import DatasetBundle, dialogue_from_dict
from mailtod.review import (
    RatingIn,
    ReviewStore,
    aggregate_ratings,
    create_app,
    export_gold,
    summarize_ratings,
)

from conftest import make_dialogue, make_item


def _rating(rater, c0, c1, c2, c3, c4, c5, c2_1=None, c2_2=None) -> dict:
    return RatingIn(rater_id=rater, c0=c0, c1=c1, c2=c2, c2_1=c2_1, c2_2=c2_2,
                    c3=c3, c4=c4, c5=c5).model_dump()


# Hand-built 3-rater x 4-dialogue fixture; every aggregate below is hand-computed.
FIXTURE_RATINGS = {
    "A": [
        _rating("r1", True, 4, True, 4, 5, 5, c2_1=4, c2_2=5),
        _rating("r2", True, 5, False, 4, 4, 4),
        _rating("r3", True, 3, True, 4, 3, 3, c2_1=2, c2_2=3),
    ],
    "B": [
        _rating("r1", True, 4, False, 5, 4, 4),
        _rating("r2", False, 2, True, 2, 3, 3, c2_1=1, c2_2=2),
        _rating("r3", True, 3, False, 5, 5, 5),
    ],
    "C": [
        _rating("r1", False, 1, True, 2, 4, 4, c2_1=3, c2_2=3),
        _rating("r2", False, 2, True, 1, 4, 4, c2_1=4, c2_2=2),
        _rating("r3", True, 3, True, 3, 4, 4, c2_1=2, c2_2=4),
    ],
    "D": [
        _rating("r1", False, 2, False, 3, 2, 3),
        _rating("r2", True, 4, False, 3, 4, 3),
        _rating("r3", False, 3, False, 3, 3, 3),
    ],
}


# --- rating model gating ------------------------------------------------------------

def test_rating_requires_conditionals_when_c2_yes():
    with pytest.raises(ValueError):
        RatingIn(rater_id="r", c0=True, c1=3, c2=True, c3=3, c4=3, c5=3)


def test_rating_forbids_conditionals_when_c2_no():
    with pytest.raises(ValueError):
        RatingIn(rater_id="r", c0=True, c1=3, c2=False, c2_1=4, c3=3, c4=3, c5=3)


def test_rating_likert_bounds():
    with pytest.raises(ValueError):
        RatingIn(rater_id="r", c0=True, c1=6, c2=False, c3=3, c4=3, c5=3)


# --- aggregation (hand-computed) -------------------------------------------------------

def test_aggregate_majority_and_means_dialogue_a():
    agg = aggregate_ratings("A", FIXTURE_RATINGS["A"])
    assert agg["c0_valid"] is True
    assert agg["c1_mean"] == pytest.approx(4.0)
    assert agg["c2_rate"] == pytest.approx(2 / 3)
    assert agg["c2_1_mean"] == pytest.approx(3.0)
    assert agg["c2_2_mean"] == pytest.approx(4.0)
    assert agg["c3_mean"] == pytest.approx(4.0)
    assert agg["c4_mean"] == pytest.approx(4.0)
    assert agg["c5_mean"] == pytest.approx(4.0)
    assert agg["n_raters"] == 3


def test_aggregate_majority_false_dialogue_c():
    agg = aggregate_ratings("C", FIXTURE_RATINGS["C"])
    assert agg["c0_valid"] is False
    assert agg["c1_mean"] == pytest.approx(2.0)
    assert agg["c2_rate"] == pytest.approx(1.0)
    assert agg["c2_1_mean"] == pytest.approx(3.0)
    assert agg["c2_2_mean"] == pytest.approx(3.0)


def test_aggregate_no_c2_raters_gives_none():
    agg = aggregate_ratings("D", FIXTURE_RATINGS["D"])
    assert agg["c2_1_mean"] is None and agg["c2_2_mean"] is None
    assert agg["c2_rate"] == pytest.approx(0.0)


def test_aggregate_simple_examples():
    ratings = [_rating("r1", True, 4, False, 4, 4, 4),
               _rating("r2", True, 4, False, 4, 4, 4),
               _rating("r3", False, 4, False, 4, 4, 4)]
    agg = aggregate_ratings("X", ratings)
    assert agg["c0_valid"] is True
    assert agg["c1_mean"] == pytest.approx(4.0)


def test_aggregate_even_tie_is_invalid():
    ratings = [_rating("r1", True, 4, False, 4, 4, 4),
               _rating("r2", False, 4, False, 4, 4, 4)]
    assert aggregate_ratings("X", ratings)["c0_valid"] is False


def test_aggregate_empty_raises():
    with pytest.raises(NoRatingsError):
        aggregate_ratings("X", [])


def test_aggregate_permutation_invariant():
    ratings = FIXTURE_RATINGS["B"]
    a = aggregate_ratings("B", ratings)
    b = aggregate_ratings("B", list(reversed(ratings)))
    assert a == b


def test_summary_reproduces_hand_computed_table():
    summary = summarize_ratings(FIXTURE_RATINGS)
    assert summary["n_dialogues"] == 4
    assert summary["c0_valid_rate"] == pytest.approx(0.5)
    c = summary["criteria"]
    assert c["c1"]["average"] == pytest.approx(3.0)
    assert c["c1"]["valid"] == pytest.approx(3.5)
    assert c["c1"]["invalid"] == pytest.approx(2.5)
    assert c["c2"]["average"] == pytest.approx(0.5)
    assert c["c2"]["valid"] == pytest.approx(0.5)
    assert c["c2"]["invalid"] == pytest.approx(0.5)
    assert c["c2_1"]["average"] == pytest.approx(7 / 3)
    assert c["c2_1"]["valid"] == pytest.approx(2.0)
    assert c["c2_1"]["invalid"] == pytest.approx(3.0)
    assert c["c2_2"]["average"] == pytest.approx(3.0)
    assert c["c3"]["average"] == pytest.approx(3.25)
    assert c["c3"]["valid"] == pytest.approx(4.0)
    assert c["c3"]["invalid"] == pytest.approx(2.5)
    assert c["c4"]["average"] == pytest.approx(3.75)
    assert c["c5"]["average"] == pytest.approx(3.75)


# --- store ------------------------------------------------------------------------------

def test_store_upsert_keeps_single_current_with_audit(tmp_path):
    store = ReviewStore(tmp_path)
    first = RatingIn(**{**FIXTURE_RATINGS["A"][0], "rater_id": "r1"})
    second = RatingIn(**{**FIXTURE_RATINGS["A"][1], "rater_id": "r1"})
    store.submit_rating("d1", first)
    store.submit_rating("d1", second)
    current = store.ratings_for("d1")
    assert len(current) == 1
    assert current[0]["c1"] == second.c1
    assert len(store.audit_for("d1", "r1")) == 2


def test_store_survives_restart(tmp_path):
    store = ReviewStore(tmp_path)
    store.submit_rating("d1", RatingIn(**FIXTURE_RATINGS["A"][0]))
    store.save_gold("d1", 0, [{"act_type": "inform", "slot": "destination",
                               "value": "Namibia"}], "editor")
    store.add_skip("d1", "r9")
    reborn = ReviewStore(tmp_path)
    assert len(reborn.ratings_for("d1")) == 1
    assert reborn.gold_for("d1")["version"] == 1
    assert reborn.skips_for("d1") == 1


def test_store_gold_versioning(tmp_path):
    store = ReviewStore(tmp_path)
    item = [{"act_type": "inform", "slot": "destination", "value": "Namibia"}]
    first = store.save_gold("d1", 0, item, "e1")
    second = store.save_gold("d1", 1, item, "e1")
    assert (first["version"], second["version"]) == (1, 2)
    assert set(second["turns"]) == {"0", "1"}


# --- HTTP API ------------------------------------------------------------------------------

@pytest.fixture
def app_client(tmp_path):
    items0 = [make_item("inform", "destination", "Namibia")]
    items1 = [make_item("request", "travel_period_start")]
    bundle = DatasetBundle(splits={
        "train": [make_dialogue("t1", [[], []], email_id="m1")],
        "validation": [],
        "test": [make_dialogue(f"d{i}", [list(items0), list(items1)], email_id=f"m{i}")
                 for i in range(1, 6)],
    })
    emails = {f"m{i}": CleanEmail(id=f"m{i}", body=f"email body {i}", subject="s")
              for i in range(1, 6)}
    app = create_app(bundle, emails, default_ontology(), tmp_path / "data",
                     clock=lambda: 1000.0)
    return TestClient(app), bundle


VALID_RATING = {"rater_id": "r1", "c0": True, "c1": 4, "c2": False,
                "c3": 4, "c4": 5, "c5": 5}


def test_api_list_dialogues_progress(app_client):
    client, _ = app_client
    resp = client.get("/api/dialogues", params={"split": "test"})
    assert resp.status_code == 200
    data = resp.json()
    assert data["total"] == 5
    assert data["items"][0]["ratings"] == 0
    assert data["items"][0]["target_ratings"] == 3


def test_api_pagination_math(app_client):
    client, _ = app_client
    resp = client.get("/api/dialogues", params={"split": "test", "page_size": 2, "page": 3})
    data = resp.json()
    assert data["pages"] == 3
    assert len(data["items"]) == 1


def test_api_unknown_split(app_client):
    client, _ = app_client
    resp = client.get("/api/dialogues", params={"split": "holdout"})
    assert resp.status_code == 404
    assert resp.json()["detail"]["error"] == "UNKNOWN_SPLIT"


def test_api_get_dialogue_includes_email(app_client):
    client, _ = app_client
    resp = client.get("/api/dialogues/d1")
    assert resp.status_code == 200
    data = resp.json()
    assert data["email"]["body"] == "email body 1"
    assert len(data["dialogue"]["turns"]) == 2


def test_api_get_dialogue_unknown(app_client):
    client, _ = app_client
    resp = client.get("/api/dialogues/nope")
    assert resp.status_code == 404
    assert resp.json()["detail"]["error"] == "UNKNOWN_DIALOGUE"


def test_api_submit_rating_roundtrip(app_client):
    client, _ = app_client
    resp = client.put("/api/ratings/d1", json=VALID_RATING)
    assert resp.status_code == 200
    assert resp.json()["dialogue_id"] == "d1"
    agg = client.get("/api/aggregate/d1").json()
    assert agg["n_raters"] == 1
    assert agg["c0_valid"] is True


def test_api_rating_gating_enforced(app_client):
    client, _ = app_client
    bad = dict(VALID_RATING, c2=False, c2_1=4)
    resp = client.put("/api/ratings/d1", json=bad)
    assert resp.status_code == 422
    assert resp.json()["detail"]["error"] == "VALIDATION_FAILED"


def test_api_aggregate_without_ratings(app_client):
    client, _ = app_client
    resp = client.get("/api/aggregate/d2")
    assert resp.status_code == 404
    assert resp.json()["detail"]["error"] == "NO_RATINGS"


def test_api_gold_save_and_versioning(app_client):
    client, _ = app_client
    gold = {"editor_id": "e1",
            "items": [{"act_type": "inform", "slot": "destination", "value": "Windhoek"}]}
    first = client.put("/api/gold/d1/0", json=gold)
    assert first.status_code == 200
    assert first.json()["version"] == 1
    second = client.put("/api/gold/d1/0", json=gold)
    assert second.json()["version"] == 2


def test_api_gold_rejects_unknown_slot(app_client):
    client, _ = app_client
    gold = {"editor_id": "e1",
            "items": [{"act_type": "inform", "slot": "warp_drive", "value": "9"}]}
    resp = client.put("/api/gold/d1/0", json=gold)
    assert resp.status_code == 400
    detail = resp.json()["detail"]
    assert detail["error"] == "VALIDATION_FAILED"
    assert detail["violations"][0]["code"] == "UNKNOWN_SLOT"


def test_api_gold_rejects_non_test_split(app_client):
    client, _ = app_client
    gold = {"editor_id": "e1",
            "items": [{"act_type": "inform", "slot": "destination", "value": "x"}]}
    resp = client.put("/api/gold/t1/0", json=gold)
    assert resp.status_code == 400
    assert resp.json()["detail"]["error"] == "NOT_TEST_SPLIT"


def test_api_gold_rejects_bad_turn(app_client):
    client, _ = app_client
    gold = {"editor_id": "e1",
            "items": [{"act_type": "inform", "slot": "destination", "value": "x"}]}
    assert client.put("/api/gold/d1/9", json=gold).status_code == 400


def test_api_export_without_edits_equals_input(app_client):
    client, bundle = app_client
    resp = client.get("/api/export/gold")
    data = resp.json()
    assert data["coverage"]["fraction"] == 0.0
    assert len(data["dialogues"]) == 5
    from mailtod.orchestrator import dialogue_to_dict
    assert data["dialogues"][0] == dialogue_to_dict(bundle.splits["test"][0])


def test_api_export_idempotent_bytes(app_client):
    client, _ = app_client
    client.put("/api/gold/d1/0", json={"editor_id": "e1", "items": [
        {"act_type": "inform", "slot": "destination", "value": "Windhoek"}]})
    first = client.get("/api/export/gold").content
    second = client.get("/api/export/gold").content
    assert first == second


def test_api_export_full_coverage_and_self_evaluation(app_client):
    client, bundle = app_client
    gold_items = {"editor_id": "e1", "items": [
        {"act_type": "inform", "slot": "trip.destination", "value": "Windhoek"}]}
    for d in bundle.splits["test"]:
        for turn in range(len(d.turns)):
            assert client.put(f"/api/gold/{d.id}/{turn}", json=gold_items).status_code == 200
    data = client.get("/api/export/gold").json()
    assert data["coverage"]["fraction"] == 1.0
    exported = [dialogue_from_dict(d) for d in data["dialogues"]]
    report = evaluate(exported, exported)
    assert (report.em, report.sm, report.pr) == (100.0, 100.0, 100.0)
    assert all(t["annotation"] == "inform(trip.destination=Windhoek)"
               for d in data["dialogues"] for t in d["turns"])


def test_api_skip_recorded(app_client):
    client, _ = app_client
    assert client.post("/api/skip/d1", json={"rater_id": "r1"}).status_code == 200
    listing = client.get("/api/dialogues", params={"split": "test"}).json()
    assert listing["items"][0]["skips"] == 1


def test_api_ontology_endpoint(app_client):
    client, _ = app_client
    data = client.get("/api/ontology").json()
    assert set(data["domains"]) == {"hotel", "flight", "trip", "user", "act"}
    assert data["act_slots"] == ["require_more", "booking", "information_sent", "general"]


def test_api_summary_endpoint(app_client):
    client, _ = app_client
    # the fixture uses dialogue ids A-D; map them onto d1..d4
    for i, (did, ratings) in enumerate(sorted(FIXTURE_RATINGS.items()), start=1):
        for r in ratings:
            assert client.put(f"/api/ratings/d{i}", json=r).status_code == 200
    summary = client.get("/api/summary").json()
    assert summary["n_dialogues"] == 4
    assert summary["c0_valid_rate"] == pytest.approx(0.5)
    assert summary["criteria"]["c1"]["average"] == pytest.approx(3.0)


def test_export_gold_store_level(tmp_path):
    bundle = DatasetBundle(splits={
        "train": [], "validation": [],
        "test": [make_dialogue("d1", [[make_item("inform", "destination", "Namibia")]])],
    })
    store = ReviewStore(tmp_path)
    out = export_gold(bundle, store)
    assert out["coverage"] == {"edited_turns": 0, "total_turns": 1, "fraction": 0.0}
