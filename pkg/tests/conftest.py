from __future__ import annotations

import json
from pathlib import Path

import pytest

from mailtod.corpus import CleanEmail
from mailtod.dsl import AnnotatedUtterance, AnnotationItem, Speaker
from mailtod.ontology import SlotRef
from mailtod.orchestrator import Dialogue, GenerationMeta

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


def make_item(act_type: str, slot: str, value: str | None = None) -> AnnotationItem:
    return AnnotationItem(act_type=act_type, slot=SlotRef.parse(slot), value=value)


def make_dialogue(dialogue_id: str, turn_items: list[list[AnnotationItem]],
                  email_id: str = "", texts: list[str] | None = None) -> Dialogue:
    turns = []
    for k, items in enumerate(turn_items):
        turns.append(AnnotatedUtterance(
            speaker=Speaker.USER if k % 2 == 0 else Speaker.BOT,
            text=texts[k] if texts else f"turn {k}",
            items=list(items),
        ))
    return Dialogue(
        id=dialogue_id,
        email_id=email_id or f"email-{dialogue_id}",
        turns=turns,
        variant_id="v0",
        generation_meta=GenerationMeta(model="test", temperature=0.0, timestamp=""),
    )


def load_jsonl(path: Path) -> list[dict]:
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines()
            if line.strip()]
