"""The comment-style annotation language attached to dialogue utterances.

An annotated line looks like::

    I want to go to Namibia. // inform(destination=Namibia) inform(guests=2)

Everything after the first ``//`` is a list of items ``type(slot=value)`` or
``type(slot)``, separated by whitespace and/or commas.  Values run up to the
closing ``)`` and may contain commas and spaces; there is no escaping, so a
value cannot contain ``)``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

from .errors import AmbiguousSlotError, AnnotationParseError, UnknownSlotError
from .ontology import Ontology, SlotRef, resolve

NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_.\-]*")
ANNOTATION_MARKER = "//"

# Act types accepted by validate() unless the caller supplies their own list.
DEFAULT_ACT_TYPES = frozenset({"inform", "request", "act", "confirm", "offer"})


@dataclass(frozen=True)
class AnnotationItem:
    """One ``type(slot=value)`` unit; ``value`` is None for request-style items."""

    act_type: str
    slot: SlotRef
    value: str | None = None


class Speaker(str, Enum):
    USER = "user"
    BOT = "bot"


@dataclass
class AnnotatedUtterance:
    speaker: Speaker
    text: str
    items: list[AnnotationItem] = field(default_factory=list)
    raw_suffix: str | None = None


@dataclass(frozen=True)
class Violation:
    """A validation finding; violations are data, not exceptions."""

    index: int
    code: str
    message: str
    candidates: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        d = {"index": self.index, "code": self.code, "message": self.message}
        if self.candidates:
            d["candidates"] = list(self.candidates)
        return d


def extract_annotations(line: str) -> tuple[str, str | None]:
    """Split an utterance line at the first ``//`` marker.

    Total: never fails.  Both sides are stripped; a line without the marker
    yields ``(text, None)``.
    """
    idx = line.find(ANNOTATION_MARKER)
    if idx < 0:
        return line.strip(), None
    return line[:idx].strip(), line[idx + len(ANNOTATION_MARKER):].strip()


class _Scanner:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def at_end(self) -> bool:
        return self.pos >= len(self.text)

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def skip_separators(self) -> None:
        while self.pos < len(self.text) and (self.text[self.pos].isspace() or self.text[self.pos] == ","):
            self.pos += 1

    def fail(self, expected: str) -> AnnotationParseError:
        found = self.text[self.pos] if self.pos < len(self.text) else "end of input"
        return AnnotationParseError(
            f"expected {expected} at offset {self.pos}, found {found!r}",
            offset=self.pos, expected=expected,
        )

    def name(self, what: str) -> str:
        m = NAME_RE.match(self.text, self.pos)
        if not m:
            raise self.fail(what)
        self.pos = m.end()
        return m.group(0)

    def expect(self, ch: str) -> None:
        if self.peek() != ch:
            raise self.fail(f"'{ch}'")
        self.pos += 1

    def value(self) -> str:
        close = self.text.find(")", self.pos)
        if close < 0:
            raise self.fail("')'")
        raw = self.text[self.pos:close]
        self.pos = close
        value = raw.strip()
        if not value:
            raise self.fail("non-empty value")
        return value


def parse_items(raw_suffix: str) -> list[AnnotationItem]:
    """Parse an annotation suffix into items.

    Raises AnnotationParseError with a byte offset on any malformed input;
    partial results are never returned.
    """
    sc = _Scanner(raw_suffix)
    items: list[AnnotationItem] = []
    sc.skip_separators()
    while not sc.at_end():
        act_type = sc.name("item type name")
        sc.expect("(")
        slot = sc.name("slot name")
        value = None
        if sc.peek() == "=":
            sc.pos += 1
            value = sc.value()
        sc.expect(")")
        items.append(AnnotationItem(act_type=act_type, slot=SlotRef.parse(slot), value=value))
        before = sc.pos
        sc.skip_separators()
        if not sc.at_end() and sc.pos == before:
            raise sc.fail("separator between items")
    return items


def serialize(items: list[AnnotationItem]) -> str:
    """Canonical textual form: space-separated ``type(slot=value)`` items."""
    parts = []
    for item in items:
        _check_serializable(item)
        slot = str(item.slot)
        if item.value is None:
            parts.append(f"{item.act_type}({slot})")
        else:
            parts.append(f"{item.act_type}({slot}={item.value})")
    return " ".join(parts)


def _check_serializable(item: AnnotationItem) -> None:
    if NAME_RE.fullmatch(item.act_type) is None:
        raise ValueError(f"invalid act type name: {item.act_type!r}")
    if NAME_RE.fullmatch(str(item.slot)) is None:
        raise ValueError(f"invalid slot name: {str(item.slot)!r}")
    if item.value is not None:
        if ")" in item.value:
            raise ValueError(f"values cannot contain ')': {item.value!r}")
        if item.value != item.value.strip() or not item.value:
            raise ValueError(f"value must be a non-empty trimmed string: {item.value!r}")


def validate(items: list[AnnotationItem], ont: Ontology,
             allowed_acts: frozenset[str] | None = DEFAULT_ACT_TYPES) -> list[Violation]:
    """Check items against the ontology; returns one Violation per offender.

    Pass ``allowed_acts=None`` for an open act-type vocabulary.
    """
    violations: list[Violation] = []
    for i, item in enumerate(items):
        if allowed_acts is not None and item.act_type not in allowed_acts:
            violations.append(Violation(
                index=i, code="UNKNOWN_ACT_TYPE",
                message=f"act type {item.act_type!r} not in allow-list",
            ))
        try:
            resolve(item.slot, ont)
        except AmbiguousSlotError as e:
            violations.append(Violation(
                index=i, code="AMBIGUOUS_SLOT", message=e.message, candidates=e.candidates,
            ))
        except UnknownSlotError as e:
            violations.append(Violation(index=i, code="UNKNOWN_SLOT", message=e.message))
    return violations
