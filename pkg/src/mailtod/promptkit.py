"""Prompt assembly for the two inference phases.

Generation prompts embed the source e-mail, the task rules, and one of three
example sets (different dialogue styles).  Annotation prompts embed the
dialogue prefix up to the target turn, the annotation rules, and the ontology
slot list -- never the e-mail and never any later turn, so the annotating
model cannot leak information it should not have at that point.

Templates are data: plain text files with ``{{placeholder}}`` markers plus a
JSON manifest naming the variant and example files.  The built-in set lives
in ``mailtod/templates/`` and can be overridden by a directory of the same
layout.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .dsl import Speaker
from .errors import IndexOutOfRangeError, MissingPlaceholderError, TemplateNotFoundError
from .ontology import Ontology

PLACEHOLDER_RE = re.compile(r"\{\{(\w+)\}\}")
_EXAMPLE_MARK = "=== example"
_INPUT_MARK = "--- input"
_OUTPUT_MARK = "--- output"


@dataclass(frozen=True)
class ExamplePair:
    source: str
    target: str


@dataclass
class PromptTemplate:
    id: str
    system_body: str
    user_body: str
    rules: tuple[str, ...]
    examples: tuple[ExamplePair, ...]
    placeholders: frozenset[str]


@dataclass
class RenderedPrompt:
    """A fully filled prompt; ``meta`` is bookkeeping, never sent on the wire."""

    messages: tuple[tuple[str, str], ...]
    variant_id: str
    token_estimate: int
    purpose: str
    meta: dict = field(default_factory=dict)


def estimate_tokens(text: str) -> int:
    return max(1, round(len(text) / 4))


def _parse_examples(text: str) -> tuple[ExamplePair, ...]:
    pairs = []
    for block in text.split(_EXAMPLE_MARK):
        if _INPUT_MARK not in block or _OUTPUT_MARK not in block:
            continue
        source, target = block.split(_OUTPUT_MARK, 1)
        source = source.split(_INPUT_MARK, 1)[1]
        pairs.append(ExamplePair(source=source.strip(), target=target.strip()))
    return tuple(pairs)


def _parse_rules(text: str) -> tuple[str, ...]:
    return tuple(line.strip() for line in text.splitlines()
                 if line.strip() and not line.lstrip().startswith("#"))


class PromptLibrary:
    """The loaded generation variants and the annotation template."""

    def __init__(self, generation: list[PromptTemplate], annotation: PromptTemplate):
        self.generation = generation
        self.annotation = annotation

    @classmethod
    def load(cls, path: str | Path | None = None) -> "PromptLibrary":
        root = Path(path) if path is not None else resources.files("mailtod") / "templates"

        def read(name: str) -> str:
            target = root / name
            try:
                return target.read_text(encoding="utf-8")
            except (OSError, FileNotFoundError) as e:
                raise TemplateNotFoundError(f"template file missing: {name}", file=name) from e

        try:
            manifest = json.loads(read("manifest.json"))
            gen, ann = manifest["generation"], manifest["annotation"]
        except (json.JSONDecodeError, KeyError) as e:
            raise TemplateNotFoundError(f"bad template manifest: {e}") from e

        gen_system = read(gen["system"])
        gen_user = read(gen["user"])
        gen_rules = _parse_rules(read(gen["rules"]))
        generation = []
        for v, example_file in enumerate(gen["variants"]):
            generation.append(PromptTemplate(
                id=f"generation/v{v}",
                system_body=gen_system,
                user_body=gen_user,
                rules=gen_rules,
                examples=_parse_examples(read(example_file)),
                placeholders=_referenced(gen_system, gen_user),
            ))
        ann_system = read(ann["system"])
        ann_user = read(ann["user"])
        annotation = PromptTemplate(
            id="annotation",
            system_body=ann_system,
            user_body=ann_user,
            rules=_parse_rules(read(ann["rules"])),
            examples=_parse_examples(read(ann["examples"])),
            placeholders=_referenced(ann_system, ann_user),
        )
        return cls(generation=generation, annotation=annotation)


def _referenced(*bodies: str) -> frozenset[str]:
    names: set[str] = set()
    for body in bodies:
        names.update(PLACEHOLDER_RE.findall(body))
    return frozenset(names)


def _render(body: str, fills: dict[str, str]) -> str:
    def sub(m: re.Match) -> str:
        name = m.group(1)
        if name not in fills:
            raise MissingPlaceholderError(f"no fill for placeholder {{{{{name}}}}}", name=name)
        return fills[name]

    return PLACEHOLDER_RE.sub(sub, body)


def _rules_block(rules: tuple[str, ...]) -> str:
    return "\n".join(f"{i}. {rule}" for i, rule in enumerate(rules, start=1))


def _examples_block(examples: tuple[ExamplePair, ...]) -> str:
    return "\n\n".join(f"{p.source}\n{p.target}" for p in examples)


def _slots_block(ont: Ontology) -> str:
    lines = [f"{domain}: {', '.join(slots)}" for domain, slots in ont.domains.items()]
    if "act" not in ont.domains and ont.act_slots:
        lines.append(f"act: {', '.join(ont.act_slots)}")
    return "\n".join(lines)


def _speaker_label(speaker: Speaker) -> str:
    return "User" if speaker is Speaker.USER else "Bot"


def build_generation_prompt(email, variant: int, library: PromptLibrary) -> RenderedPrompt:
    """Render the phase-one prompt for one e-mail and one example variant."""
    if not 0 <= variant < len(library.generation):
        raise TemplateNotFoundError(
            f"no generation variant {variant}; have {len(library.generation)}",
            variant=variant,
        )
    tpl = library.generation[variant]
    fills = {
        "rules": _rules_block(tpl.rules),
        "examples": _examples_block(tpl.examples),
        "email_body": email.body,
    }
    system = _render(tpl.system_body, fills)
    user = _render(tpl.user_body, fills)
    return RenderedPrompt(
        messages=(("system", system), ("user", user)),
        variant_id=f"v{variant}",
        token_estimate=estimate_tokens(system) + estimate_tokens(user),
        purpose="generation",
        meta={"email_id": email.id},
    )


def build_annotation_prompt(dialogue, target_turn: int, ont: Ontology,
                            library: PromptLibrary) -> RenderedPrompt:
    """Render the phase-two prompt for one target turn.

    The prompt contains the turns up to and including the target only, plus
    the annotation rules and the ontology slot list.  No e-mail text.
    """
    if not 0 <= target_turn < len(dialogue.turns):
        raise IndexOutOfRangeError(
            f"target turn {target_turn} out of range for {len(dialogue.turns)} turns",
            target_turn=target_turn, n_turns=len(dialogue.turns),
        )
    tpl = library.annotation
    prefix = dialogue.turns[:target_turn + 1]
    fills = {
        "rules": _rules_block(tpl.rules),
        "examples": _examples_block(tpl.examples),
        "slots": _slots_block(ont),
        "dialogue": "\n".join(f"{_speaker_label(t.speaker)}: {t.text}" for t in prefix),
    }
    system = _render(tpl.system_body, fills)
    user = _render(tpl.user_body, fills)
    return RenderedPrompt(
        messages=(("system", system), ("user", user)),
        variant_id="annotation",
        token_estimate=estimate_tokens(system) + estimate_tokens(user),
        purpose="annotation",
        meta={"dialogue_id": dialogue.id, "target_turn": target_turn},
    )


def choose_variant(index: int, n_variants: int = 3, policy: str = "round_robin",
                   seed: int = 0) -> int:
    """Pick the example variant for the index-th e-mail.

    ``round_robin`` cycles variants by input position (the default, fully
    reproducible); ``random`` draws one per index from a seeded stream.
    """
    if n_variants < 1:
        raise ValueError("need at least one variant")
    if policy == "round_robin":
        return index % n_variants
    if policy == "random":
        return random.Random(f"{seed}:{index}").randrange(n_variants)
    raise ValueError(f"unknown variant policy {policy!r}")
