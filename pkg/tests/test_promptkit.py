from __future__ import annotations

import json
import shutil
from pathlib import Path

import pytest

from mailtod.corpus import CleanEmail
from mailtod.errors import IndexOutOfRangeError, MissingPlaceholderError, TemplateNotFoundError
from mailtod.ontology import default_ontology
from mailtod.promptkit import (
    PromptLibrary,
    build_annotation_prompt,
    build_generation_prompt,
    choose_variant,
)

from conftest import make_dialogue, make_item


@pytest.fixture(scope="module")
def library():
    return PromptLibrary.load()


def _email(body: str, id: str = "e1") -> CleanEmail:
    return CleanEmail(id=id, body=body, source_lang="en", translated=True)


def _content(prompt) -> str:
    return "\n".join(content for _, content in prompt.messages)


# --- generation prompts -----------------------------------------------------------

def test_variants_differ_only_in_examples(library):
    email = _email("Namibia individual trip")
    p0 = build_generation_prompt(email, 0, library)
    p1 = build_generation_prompt(email, 1, library)
    # same system message (description + rules), different example sections
    assert p0.messages[0] == p1.messages[0]
    assert p0.messages[1] != p1.messages[1]
    assert p0.variant_id == "v0" and p1.variant_id == "v1"


def test_email_body_appears_exactly_once(library):
    email = _email("Namibia individual trip XQZ77")
    prompt = build_generation_prompt(email, 0, library)
    assert _content(prompt).count("Namibia individual trip XQZ77") == 1


def test_generation_prompt_structure_order(library):
    email = _email("TRIPMARKER body")
    prompt = build_generation_prompt(email, 0, library)
    system = prompt.messages[0][1]
    user = prompt.messages[1][1]
    # description precedes rules in the system message
    assert system.index("data creation assistant") < system.index("Rules:")
    # examples precede the e-mail in the user message
    assert user.index("Namibia individual trip") < user.index("TRIPMARKER")


def test_generation_prompt_is_deterministic(library):
    email = _email("same input")
    a = build_generation_prompt(email, 2, library)
    b = build_generation_prompt(email, 2, library)
    assert a.messages == b.messages
    assert a.token_estimate == b.token_estimate > 0


def test_unknown_variant_rejected(library):
    with pytest.raises(TemplateNotFoundError):
        build_generation_prompt(_email("x"), 3, library)


# --- annotation prompts --------------------------------------------------------------

def _dialogue(n_turns: int):
    texts = [f"utterance number {k} marker_t{k}" for k in range(n_turns)]
    return make_dialogue("d1", [[] for _ in range(n_turns)], texts=texts)


def test_annotation_prompt_first_turn_only(library):
    prompt = build_annotation_prompt(_dialogue(4), 0, default_ontology(), library)
    content = _content(prompt)
    assert "marker_t0" in content
    assert "marker_t1" not in content


def test_annotation_prompt_contains_prefix_up_to_target(library):
    prompt = build_annotation_prompt(_dialogue(4), 2, default_ontology(), library)
    content = _content(prompt)
    assert all(f"marker_t{k}" in content for k in range(3))
    assert "marker_t3" not in content


def test_annotation_prompt_never_contains_email(library):
    # sentinel planted only in the e-mail body must never reach annotation prompts
    email = _email("please visit EMAILSENTINEL9 soon", id="e9")
    generation = build_generation_prompt(email, 0, library)
    assert "EMAILSENTINEL9" in _content(generation)
    dialogue = _dialogue(3)
    for t in range(3):
        prompt = build_annotation_prompt(dialogue, t, default_ontology(), library)
        assert "EMAILSENTINEL9" not in _content(prompt)


def test_annotation_prompt_lists_all_act_slots(library):
    prompt = build_annotation_prompt(_dialogue(2), 0, default_ontology(), library)
    content = _content(prompt)
    for act in ("require_more", "booking", "information_sent", "general"):
        assert act in content


def test_annotation_prompt_index_out_of_range(library):
    with pytest.raises(IndexOutOfRangeError):
        build_annotation_prompt(_dialogue(2), 2, default_ontology(), library)
    with pytest.raises(IndexOutOfRangeError):
        build_annotation_prompt(_dialogue(2), -1, default_ontology(), library)


def test_annotation_prompt_purpose_and_meta(library):
    prompt = build_annotation_prompt(_dialogue(2), 1, default_ontology(), library)
    assert prompt.purpose == "annotation"
    assert prompt.meta == {"dialogue_id": "d1", "target_turn": 1}


# --- custom template dirs --------------------------------------------------------------

def _copy_templates(tmp_path: Path) -> Path:
    src = Path(__file__).parent.parent / "src" / "mailtod" / "templates"
    dst = tmp_path / "templates"
    shutil.copytree(src, dst)
    return dst


def test_custom_template_dir_loads(tmp_path, library):
    custom = _copy_templates(tmp_path)
    lib = PromptLibrary.load(custom)
    assert len(lib.generation) == 3
    email = _email("body here")
    assert build_generation_prompt(email, 0, lib).messages == \
        build_generation_prompt(email, 0, library).messages


def test_missing_template_file(tmp_path):
    custom = _copy_templates(tmp_path)
    (custom / "generation_user.txt").unlink()
    with pytest.raises(TemplateNotFoundError):
        PromptLibrary.load(custom)


def test_unfilled_placeholder_rejected(tmp_path):
    custom = _copy_templates(tmp_path)
    user = custom / "generation_user.txt"
    user.write_text(user.read_text() + "\n{{surprise}}\n")
    lib = PromptLibrary.load(custom)
    with pytest.raises(MissingPlaceholderError):
        build_generation_prompt(_email("x"), 0, lib)


def test_manifest_missing_key(tmp_path):
    custom = _copy_templates(tmp_path)
    manifest = json.loads((custom / "manifest.json").read_text())
    del manifest["annotation"]
    (custom / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(TemplateNotFoundError):
        PromptLibrary.load(custom)


# --- variant policy ----------------------------------------------------------------------

def test_choose_variant_round_robin():
    assert [choose_variant(i) for i in range(7)] == [0, 1, 2, 0, 1, 2, 0]


def test_choose_variant_random_is_seeded():
    a = [choose_variant(i, policy="random", seed=5) for i in range(20)]
    b = [choose_variant(i, policy="random", seed=5) for i in range(20)]
    c = [choose_variant(i, policy="random", seed=6) for i in range(20)]
    assert a == b
    assert a != c
    assert set(a) <= {0, 1, 2}


def test_choose_variant_bad_policy():
    with pytest.raises(ValueError):
        choose_variant(0, policy="alphabetical")
