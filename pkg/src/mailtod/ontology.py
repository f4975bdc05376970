"""Travel-booking ontology: the domain -> slots schema that bounds annotations.

The built-in default covers five domains (hotel, flight, trip, user, act).
``act`` doubles as a domain of slots and as the dialogue-act label set; both
usages are accepted downstream, so its slots are mirrored in ``act_slots``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import AmbiguousSlotError, DuplicateSlotError, SchemaParseError, UnknownSlotError

DEFAULT_DOMAINS = {
    "hotel": (
        "board", "name", "area", "address", "price", "feature",
        "room_type", "room_amount", "stars", "transfer", "reviews",
    ),
    "flight": (
        "departure_airport", "arrival_airport", "airline", "type",
        "class", "price", "duration",
    ),
    "trip": (
        "travel_period_start", "travel_period_end", "length", "price",
        "type", "destination", "guests", "guests_children",
        "availability", "confirmation_number",
    ),
    "user": ("name", "phone", "e-mail"),
    "act": ("require_more", "booking", "information_sent", "general"),
}


@dataclass(frozen=True)
class SlotRef:
    """A slot mention, optionally qualified as ``domain.slot``."""

    slot: str
    domain: str | None = None

    @classmethod
    def parse(cls, text: str) -> "SlotRef":
        # The first dot separates domain from slot; bare names carry no domain.
        if "." in text:
            domain, slot = text.split(".", 1)
            if domain and slot:
                return cls(slot=slot, domain=domain)
        return cls(slot=text)

    def __str__(self) -> str:
        return f"{self.domain}.{self.slot}" if self.domain else self.slot


@dataclass(frozen=True)
class Ontology:
    domains: dict[str, tuple[str, ...]]
    act_slots: tuple[str, ...] = field(default=())

    def slots_of(self, domain: str) -> tuple[str, ...]:
        return self.domains.get(domain, ())

    def domains_with_slot(self, slot: str) -> list[str]:
        return [d for d, slots in self.domains.items() if slot in slots]

    def has(self, domain: str, slot: str) -> bool:
        return slot in self.domains.get(domain, ())

    def to_dict(self) -> dict:
        return {
            "domains": {d: list(slots) for d, slots in self.domains.items()},
            "act_slots": list(self.act_slots),
        }


def default_ontology() -> Ontology:
    return Ontology(domains=dict(DEFAULT_DOMAINS), act_slots=DEFAULT_DOMAINS["act"])


def _check_domains(domains: dict) -> dict[str, tuple[str, ...]]:
    checked: dict[str, tuple[str, ...]] = {}
    for domain, slots in domains.items():
        if not isinstance(slots, list) or not all(isinstance(s, str) for s in slots):
            raise SchemaParseError(f"domain {domain!r} must map to a list of slot names")
        seen = set()
        for s in slots:
            if s in seen:
                raise DuplicateSlotError(f"slot {s!r} defined twice in domain {domain!r}",
                                         domain=domain, slot=s)
            seen.add(s)
        checked[domain] = tuple(slots)
    return checked


def _reject_duplicate_keys(pairs):
    seen = set()
    for key, _ in pairs:
        if key in seen:
            raise SchemaParseError(f"duplicate key {key!r} in ontology file")
        seen.add(key)
    return dict(pairs)


def load_ontology(path: str | Path | None = None) -> Ontology:
    """Load an ontology file, or the built-in default when no path is given.

    File format: JSON ``{"domains": {name: [slots]}, "act_slots": [names]}``.
    ``act_slots`` falls back to the slots of an ``act`` domain if present.
    """
    if path is None:
        return default_ontology()
    try:
        raw = Path(path).read_text(encoding="utf-8")
        data = json.loads(raw, object_pairs_hook=_reject_duplicate_keys)
    except OSError as e:
        raise SchemaParseError(f"cannot read ontology file {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise SchemaParseError(f"ontology file {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict) or "domains" not in data:
        raise SchemaParseError("ontology file must be an object with a 'domains' key")
    domains = _check_domains(data["domains"])
    act_slots = data.get("act_slots")
    if act_slots is None:
        act_slots = list(domains.get("act", ()))
    if not all(isinstance(s, str) for s in act_slots):
        raise SchemaParseError("'act_slots' must be a list of names")
    return Ontology(domains=domains, act_slots=tuple(act_slots))


def save_ontology(ont: Ontology, path: str | Path) -> None:
    Path(path).write_text(json.dumps(ont.to_dict(), indent=2, ensure_ascii=False) + "\n",
                          encoding="utf-8")


def resolve(ref: SlotRef, ont: Ontology) -> tuple[str, str]:
    """Resolve a slot reference to a unique ``(domain, slot)`` pair.

    Bare slot names must be unambiguous across the ontology; qualified names
    must exist in their domain.
    """
    if ref.domain is not None:
        if ont.has(ref.domain, ref.slot):
            return (ref.domain, ref.slot)
        raise UnknownSlotError(f"no slot {ref.slot!r} in domain {ref.domain!r}",
                               slot=ref.slot, domain=ref.domain)
    candidates = ont.domains_with_slot(ref.slot)
    if len(candidates) == 1:
        return (candidates[0], ref.slot)
    if not candidates:
        raise UnknownSlotError(f"slot {ref.slot!r} not in ontology", slot=ref.slot)
    raise AmbiguousSlotError(
        f"slot {ref.slot!r} is ambiguous across domains: {', '.join(candidates)}",
        candidates=candidates, slot=ref.slot,
    )
