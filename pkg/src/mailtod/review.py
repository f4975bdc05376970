"""HTTP service for the human review workflow.

Reviewers rate dialogues on criteria C-0 to C-5 and edit gold annotations for
the test split.  All writes go to append-only JSONL event logs (one per
entity) under the data directory; in-memory indexes are rebuilt at startup,
so the full audit history of every judgment is retained with no database.

Criteria semantics: C-0 (valid input e-mail) and C-2 (user gives more
information than the e-mail) are yes/no; the rest are 1-5 Likert values.
C-2-1 and C-2-2 exist exactly when C-2 is answered yes.
"""

from __future__ import annotations

import json
import threading
import time
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field, model_validator

from .corpus import TEST, CleanEmail
from .dsl import AnnotationItem, serialize, validate
from .errors import NoRatingsError
from .ontology import Ontology, SlotRef
from .orchestrator import DatasetBundle, Dialogue, dialogue_to_dict

LIKERT_KEYS = ("c1", "c3", "c4", "c5")


# --- request models ---------------------------------------------------------

class RatingIn(BaseModel):
    rater_id: str
    c0: bool
    c1: int = Field(ge=1, le=5)
    c2: bool
    c2_1: int | None = Field(default=None, ge=1, le=5)
    c2_2: int | None = Field(default=None, ge=1, le=5)
    c3: int = Field(ge=1, le=5)
    c4: int = Field(ge=1, le=5)
    c5: int = Field(ge=1, le=5)

    @model_validator(mode="after")
    def _conditional_gate(self):
        if self.c2 and (self.c2_1 is None or self.c2_2 is None):
            raise ValueError("c2_1 and c2_2 are required when c2 is yes")
        if not self.c2 and (self.c2_1 is not None or self.c2_2 is not None):
            raise ValueError("c2_1 and c2_2 must be omitted when c2 is no")
        return self


class GoldItemIn(BaseModel):
    act_type: str
    slot: str
    value: str | None = None


class GoldIn(BaseModel):
    editor_id: str
    items: list[GoldItemIn]


class SkipIn(BaseModel):
    rater_id: str


# --- event-sourced store -------------------------------------------------------

class ReviewStore:
    """Append-only per-entity JSONL logs plus latest-state indexes."""

    def __init__(self, data_dir: str | Path, clock=None):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.clock = clock or time.time
        self._lock = threading.Lock()
        self._ratings_path = self.data_dir / "ratings.jsonl"
        self._gold_path = self.data_dir / "gold.jsonl"
        self._skips_path = self.data_dir / "skips.jsonl"
        # latest rating per (rater, dialogue); full event counts kept for audit
        self._ratings: dict[tuple[str, str], dict] = {}
        self._rating_events: list[dict] = []
        self._gold: dict[str, dict] = {}
        self._skips: list[dict] = []
        self._replay()

    def _replay(self) -> None:
        for event in self._read(self._ratings_path):
            self._apply_rating(event)
        for event in self._read(self._gold_path):
            self._apply_gold(event)
        self._skips = list(self._read(self._skips_path))

    @staticmethod
    def _read(path: Path) -> list[dict]:
        if not path.exists():
            return []
        return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines()
                if line.strip()]

    @staticmethod
    def _append(path: Path, event: dict) -> None:
        with open(path, "a", encoding="utf-8") as f:
            f.write(json.dumps(event, ensure_ascii=False) + "\n")

    def _apply_rating(self, event: dict) -> None:
        self._rating_events.append(event)
        self._ratings[(event["rater_id"], event["dialogue_id"])] = event

    def _apply_gold(self, event: dict) -> None:
        state = self._gold.setdefault(event["dialogue_id"],
                                      {"dialogue_id": event["dialogue_id"],
                                       "version": 0, "turns": {}, "editor_id": None})
        state["turns"][str(event["turn"])] = event["items"]
        state["version"] = event["version"]
        state["editor_id"] = event["editor_id"]

    # ratings

    def submit_rating(self, dialogue_id: str, rating: RatingIn) -> dict:
        event = dict(rating.model_dump(), dialogue_id=dialogue_id,
                     submitted_at=self.clock())
        with self._lock:
            self._append(self._ratings_path, event)
            self._apply_rating(event)
        return event

    def ratings_for(self, dialogue_id: str) -> list[dict]:
        with self._lock:
            latest = [r for (rater, did), r in self._ratings.items() if did == dialogue_id]
        return sorted(latest, key=lambda r: r["rater_id"])

    def audit_for(self, dialogue_id: str, rater_id: str | None = None) -> list[dict]:
        with self._lock:
            return [e for e in self._rating_events
                    if e["dialogue_id"] == dialogue_id
                    and (rater_id is None or e["rater_id"] == rater_id)]

    def all_ratings(self) -> dict[str, list[dict]]:
        with self._lock:
            by_dialogue: dict[str, list[dict]] = {}
            for (rater, did), r in self._ratings.items():
                by_dialogue.setdefault(did, []).append(r)
        return {did: sorted(rs, key=lambda r: r["rater_id"]) for did, rs in by_dialogue.items()}

    # gold annotations

    def save_gold(self, dialogue_id: str, turn: int, items: list[dict], editor_id: str) -> dict:
        with self._lock:
            version = self._gold.get(dialogue_id, {}).get("version", 0) + 1
            event = {"dialogue_id": dialogue_id, "turn": turn, "items": items,
                     "editor_id": editor_id, "version": version, "saved_at": self.clock()}
            self._append(self._gold_path, event)
            self._apply_gold(event)
            return dict(self._gold[dialogue_id], turns=dict(self._gold[dialogue_id]["turns"]))

    def gold_for(self, dialogue_id: str) -> dict | None:
        with self._lock:
            state = self._gold.get(dialogue_id)
            return dict(state, turns=dict(state["turns"])) if state else None

    # skips

    def add_skip(self, dialogue_id: str, rater_id: str) -> dict:
        event = {"dialogue_id": dialogue_id, "rater_id": rater_id, "skipped_at": self.clock()}
        with self._lock:
            self._append(self._skips_path, event)
            self._skips.append(event)
        return event

    def skips_for(self, dialogue_id: str) -> int:
        with self._lock:
            return sum(1 for s in self._skips if s["dialogue_id"] == dialogue_id)


# --- aggregation ------------------------------------------------------------------

def aggregate_ratings(dialogue_id: str, ratings: list[dict]) -> dict:
    """Per-dialogue aggregate: strict-majority C-0, arithmetic Likert means.

    C-2-1/C-2-2 average only over raters who answered C-2 yes.  An even
    C-0 tie counts as invalid.
    """
    if not ratings:
        raise NoRatingsError(f"no ratings for dialogue {dialogue_id}")
    n = len(ratings)
    aggregate = {
        "dialogue_id": dialogue_id,
        "n_raters": n,
        "c0_valid": sum(r["c0"] for r in ratings) * 2 > n,
        "c2_rate": sum(r["c2"] for r in ratings) / n,
    }
    for key in LIKERT_KEYS:
        aggregate[f"{key}_mean"] = sum(r[key] for r in ratings) / n
    c2_raters = [r for r in ratings if r["c2"]]
    for key in ("c2_1", "c2_2"):
        aggregate[f"{key}_mean"] = (
            sum(r[key] for r in c2_raters) / len(c2_raters) if c2_raters else None
        )
    return aggregate


def summarize_ratings(ratings_by_dialogue: dict[str, list[dict]]) -> dict:
    """Corpus-level summary partitioned by majority validity.

    Dialogues are aggregated first, then averaged with equal weight; the
    ``valid``/``invalid`` columns restrict to dialogues whose C-0 majority
    was yes/no respectively.  Binary criteria report positive fractions.
    """
    aggregates = [aggregate_ratings(did, rs) for did, rs in sorted(ratings_by_dialogue.items())
                  if rs]
    subsets = {
        "average": aggregates,
        "valid": [a for a in aggregates if a["c0_valid"]],
        "invalid": [a for a in aggregates if not a["c0_valid"]],
    }

    def mean_over(rows: list[dict], key: str) -> float | None:
        values = [r[key] for r in rows if r[key] is not None]
        return sum(values) / len(values) if values else None

    criteria: dict[str, dict] = {}
    for key in ("c2_rate",) + tuple(f"{k}_mean" for k in LIKERT_KEYS) + ("c2_1_mean", "c2_2_mean"):
        name = key.replace("_mean", "").replace("_rate", "")
        criteria[name] = {col: mean_over(rows, key) for col, rows in subsets.items()}
    return {
        "n_dialogues": len(aggregates),
        "c0_valid_rate": (len(subsets["valid"]) / len(aggregates)) if aggregates else None,
        "criteria": criteria,
    }


# --- gold helpers ------------------------------------------------------------------

def _items_from_dicts(items: list[dict]) -> list[AnnotationItem]:
    return [AnnotationItem(act_type=i["act_type"], slot=SlotRef.parse(i["slot"]),
                           value=i.get("value"))
            for i in items]


def _check_gold_items(items: list[dict], ont: Ontology) -> list[dict]:
    """Raise nothing; return violation dicts (empty when the items are valid)."""
    try:
        parsed = _items_from_dicts(items)
        serialize(parsed)  # enforces name/value well-formedness
    except (KeyError, TypeError, ValueError) as e:
        return [{"index": -1, "code": "MALFORMED_ITEM", "message": str(e)}]
    return [v.to_dict() for v in validate(parsed, ont)]


def apply_gold(dialogue: Dialogue, gold: dict | None) -> dict:
    """Dialogue dict with gold items replacing model annotations where edited."""
    data = dialogue_to_dict(dialogue)
    if gold:
        for turn_key, items in gold["turns"].items():
            k = int(turn_key)
            if 0 <= k < len(data["turns"]):
                parsed = _items_from_dicts(items)
                data["turns"][k]["items"] = [
                    {"act_type": i.act_type, "slot": str(i.slot), "value": i.value}
                    for i in parsed
                ]
                data["turns"][k]["annotation"] = serialize(parsed)
    return data


def export_gold(bundle: DatasetBundle, store: ReviewStore, split: str = TEST) -> dict:
    """Latest gold edits merged into the split, plus a coverage report."""
    dialogues = bundle.splits.get(split, [])
    exported = []
    edited_turns = 0
    total_turns = 0
    for d in dialogues:
        gold = store.gold_for(d.id)
        exported.append(apply_gold(d, gold))
        total_turns += len(d.turns)
        if gold:
            edited_turns += sum(1 for k in gold["turns"] if 0 <= int(k) < len(d.turns))
    return {
        "split": split,
        "dialogues": exported,
        "coverage": {
            "edited_turns": edited_turns,
            "total_turns": total_turns,
            "fraction": (edited_turns / total_turns) if total_turns else 0.0,
        },
    }


# --- HTTP app ---------------------------------------------------------------------

def _http_error(status: int, code: str, message: str, **extra) -> HTTPException:
    return HTTPException(status_code=status, detail=dict({"error": code, "message": message},
                                                         **extra))


def create_app(bundle: DatasetBundle, emails: dict[str, CleanEmail], ont: Ontology,
               data_dir: str | Path, ui_dir: str | Path | None = None,
               target_ratings: int = 3, clock=None) -> FastAPI:
    """Build the review API over a dataset bundle and its source corpus."""
    app = FastAPI(title="mailtod review service")
    store = ReviewStore(data_dir, clock=clock)
    index: dict[str, tuple[str, Dialogue]] = {}
    for split, dialogues in bundle.splits.items():
        for d in dialogues:
            index[d.id] = (split, d)

    @app.exception_handler(RequestValidationError)
    async def _validation_failed(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=422, content={"detail": {
            "error": "VALIDATION_FAILED",
            "message": "; ".join(e.get("msg", "invalid") for e in exc.errors()),
        }})

    def _dialogue_or_404(dialogue_id: str) -> tuple[str, Dialogue]:
        if dialogue_id not in index:
            raise _http_error(404, "UNKNOWN_DIALOGUE", f"no dialogue {dialogue_id!r}")
        return index[dialogue_id]

    @app.get("/api/dialogues")
    def list_dialogues(split: str | None = None, page: int = 1, page_size: int = 20):
        if split is not None and split not in bundle.splits:
            raise _http_error(404, "UNKNOWN_SPLIT", f"no split {split!r}")
        splits = [split] if split else list(bundle.splits)
        rows = []
        for s in splits:
            for d in bundle.splits[s]:
                rows.append({
                    "id": d.id, "email_id": d.email_id, "split": s,
                    "n_turns": len(d.turns),
                    "ratings": len(store.ratings_for(d.id)),
                    "target_ratings": target_ratings,
                    "skips": store.skips_for(d.id),
                    "gold_version": (store.gold_for(d.id) or {}).get("version", 0),
                })
        total = len(rows)
        pages = (total + page_size - 1) // page_size
        start = (max(1, page) - 1) * page_size
        return {"items": rows[start:start + page_size], "page": page,
                "pages": pages, "total": total, "page_size": page_size}

    @app.get("/api/dialogues/{dialogue_id}")
    def get_dialogue(dialogue_id: str):
        split, d = _dialogue_or_404(dialogue_id)
        email = emails.get(d.email_id)
        return {
            "split": split,
            "dialogue": dialogue_to_dict(d),
            "email": ({"id": email.id, "body": email.body, "subject": email.subject}
                      if email else None),
            "ratings": len(store.ratings_for(d.id)),
            "target_ratings": target_ratings,
            "gold": store.gold_for(d.id),
        }

    @app.put("/api/ratings/{dialogue_id}")
    def put_rating(dialogue_id: str, rating: RatingIn):
        _dialogue_or_404(dialogue_id)
        return store.submit_rating(dialogue_id, rating)

    @app.get("/api/aggregate/{dialogue_id}")
    def get_aggregate(dialogue_id: str):
        _dialogue_or_404(dialogue_id)
        ratings = store.ratings_for(dialogue_id)
        if not ratings:
            raise _http_error(404, "NO_RATINGS", f"no ratings for {dialogue_id!r}")
        return aggregate_ratings(dialogue_id, ratings)

    @app.get("/api/summary")
    def get_summary():
        return summarize_ratings(store.all_ratings())

    @app.put("/api/gold/{dialogue_id}/{turn}")
    def put_gold(dialogue_id: str, turn: int, gold: GoldIn):
        split, d = _dialogue_or_404(dialogue_id)
        if split != TEST:
            raise _http_error(400, "NOT_TEST_SPLIT",
                              f"dialogue {dialogue_id!r} is in split {split!r}")
        if not 0 <= turn < len(d.turns):
            raise _http_error(400, "VALIDATION_FAILED",
                              f"turn {turn} out of range for {len(d.turns)} turns")
        items = [i.model_dump() for i in gold.items]
        violations = _check_gold_items(items, ont)
        if violations:
            raise _http_error(400, "VALIDATION_FAILED", "items failed validation",
                              violations=violations)
        return store.save_gold(dialogue_id, turn, items, gold.editor_id)

    @app.get("/api/export/gold")
    def get_export():
        return export_gold(bundle, store)

    @app.post("/api/skip/{dialogue_id}")
    def post_skip(dialogue_id: str, skip: SkipIn):
        _dialogue_or_404(dialogue_id)
        return store.add_skip(dialogue_id, skip.rater_id)

    @app.get("/api/ontology")
    def get_ontology():
        return ont.to_dict()

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    return app
