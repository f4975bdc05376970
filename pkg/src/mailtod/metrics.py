"""Per-utterance dialogue-state metrics and dataset-level evaluation.

An utterance's state is the set of ``(slot, value)`` pairs from its annotation
items.  Request-style items have no value and contribute ``(slot, None)``.

Three binary metrics compare a gold state ``y`` against a prediction ``yhat``:

* exact match: the two sets are equal;
* soft match: in ``prose`` mode, the slot-name sets are equal or the value
  multisets are equal; in ``appendix`` mode, the slot-name sets intersect or
  the value sets intersect (a strictly weaker test on nonempty states);
* presence: ``y`` is a subset of ``yhat``.

Two empty states count as a match under all three metrics so that
unannotated small-talk turns do not poison dataset scores.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    AmbiguousSlotError,
    MismatchedIdsError,
    MismatchedTurnCountsError,
    UnknownSlotError,
)
from .dsl import AnnotationItem
from .ontology import Ontology, SlotRef, resolve

SM_MODES = ("prose", "appendix")

StatePair = tuple
StateSet = frozenset


def normalize_value(v: str) -> str:
    """Trim, case-fold, and collapse internal whitespace.

    No date or number canonicalization is attempted.
    """
    return " ".join(v.split()).casefold()


def canonical_slot(ref: SlotRef, ont: Ontology | None = None) -> str:
    """Ontology-resolved ``domain.slot`` where possible, else the folded name."""
    folded = SlotRef(slot=ref.slot.casefold(),
                     domain=ref.domain.casefold() if ref.domain else None)
    if ont is not None:
        try:
            domain, slot = resolve(folded, ont)
            return f"{domain}.{slot}"
        except (UnknownSlotError, AmbiguousSlotError):
            pass
    return str(folded)


def state_set(items: list[AnnotationItem], ont: Ontology | None = None,
              include_act: bool = False) -> StateSet:
    """Build the state set for one utterance's annotation items."""
    pairs = []
    for item in items:
        slot = canonical_slot(item.slot, ont)
        value = normalize_value(item.value) if item.value is not None else None
        if include_act:
            pairs.append((item.act_type.casefold(), slot, value))
        else:
            pairs.append((slot, value))
    return frozenset(pairs)


def exact_match(y: StateSet, yhat: StateSet) -> int:
    return int(y == yhat)


def soft_match(y: StateSet, yhat: StateSet, mode: str = "prose") -> int:
    if mode not in SM_MODES:
        raise ValueError(f"sm mode must be one of {SM_MODES}, got {mode!r}")
    if not y and not yhat:
        return 1
    slots_y = {p[-2] for p in y}
    slots_hat = {p[-2] for p in yhat}
    values_y = [p[-1] for p in y]
    values_hat = [p[-1] for p in yhat]
    if mode == "prose":
        return int(slots_y == slots_hat or Counter(values_y) == Counter(values_hat))
    return int(bool(slots_y & slots_hat) or bool(set(values_y) & set(values_hat)))


def presence(y: StateSet, yhat: StateSet) -> int:
    return int(y <= yhat)


@dataclass
class MetricReport:
    em: float
    sm: float
    pr: float
    sm_mode: str
    n_utterances: int
    n_dialogues: int
    per_dialogue: dict[str, dict] = field(default_factory=dict)
    macro: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "em": self.em, "sm": self.sm, "pr": self.pr,
            "sm_mode": self.sm_mode,
            "n_utterances": self.n_utterances, "n_dialogues": self.n_dialogues,
            "macro": self.macro, "per_dialogue": self.per_dialogue,
        }

    def to_table(self) -> str:
        lines = [
            f"{'metric':<10}{'micro %':>10}{'macro %':>10}",
            f"{'EM':<10}{self.em:>10.2f}{self.macro.get('em', 0.0):>10.2f}",
            f"{'SM':<10}{self.sm:>10.2f}{self.macro.get('sm', 0.0):>10.2f}",
            f"{'PR':<10}{self.pr:>10.2f}{self.macro.get('pr', 0.0):>10.2f}",
            f"(sm mode: {self.sm_mode}; {self.n_utterances} utterances, "
            f"{self.n_dialogues} dialogues)",
        ]
        return "\n".join(lines)


def _dialogues_of(data) -> list:
    """Accept a DatasetBundle, a split map, or a plain dialogue list."""
    if hasattr(data, "splits"):
        data = data.splits
    if isinstance(data, dict):
        out = []
        for split in sorted(data):
            out.extend(data[split])
        return out
    return list(data)


def evaluate(gold, pred, mode: str = "prose", ont: Ontology | None = None,
             include_act: bool = False) -> MetricReport:
    """Score a prediction set against gold, micro-averaged over all utterances.

    Dialogues are matched by id and must have identical turn counts.  Scores
    are mean percentages; a per-dialogue breakdown and dialogue-macro means
    are reported alongside.
    """
    gold_dialogues = {d.id: d for d in _dialogues_of(gold)}
    pred_dialogues = {d.id: d for d in _dialogues_of(pred)}
    missing = sorted(set(gold_dialogues) - set(pred_dialogues))
    extra = sorted(set(pred_dialogues) - set(gold_dialogues))
    if missing or extra:
        raise MismatchedIdsError(
            f"dialogue ids differ: {len(missing)} missing from pred, {len(extra)} extra",
            missing=missing, extra=extra,
        )
    bad_counts = [
        {"dialogue_id": did, "gold_turns": len(gold_dialogues[did].turns),
         "pred_turns": len(pred_dialogues[did].turns)}
        for did in gold_dialogues
        if len(gold_dialogues[did].turns) != len(pred_dialogues[did].turns)
    ]
    if bad_counts:
        raise MismatchedTurnCountsError(
            f"{len(bad_counts)} dialogues have mismatched turn counts",
            offenders=bad_counts,
        )

    totals = Counter()
    n_utt = 0
    per_dialogue: dict[str, dict] = {}
    for did, gd in gold_dialogues.items():
        pd = pred_dialogues[did]
        dial = Counter()
        for gt, pt in zip(gd.turns, pd.turns):
            y = state_set(gt.items, ont, include_act)
            yhat = state_set(pt.items, ont, include_act)
            dial["em"] += exact_match(y, yhat)
            dial["sm"] += soft_match(y, yhat, mode)
            dial["pr"] += presence(y, yhat)
        n = len(gd.turns)
        per_dialogue[did] = {
            "em": 100.0 * dial["em"] / n if n else 0.0,
            "sm": 100.0 * dial["sm"] / n if n else 0.0,
            "pr": 100.0 * dial["pr"] / n if n else 0.0,
            "n_turns": n,
        }
        totals.update(dial)
        n_utt += n

    n_dial = len(gold_dialogues)
    macro = {
        m: (sum(per_dialogue[d][m] for d in per_dialogue) / n_dial if n_dial else 0.0)
        for m in ("em", "sm", "pr")
    }
    return MetricReport(
        em=100.0 * totals["em"] / n_utt if n_utt else 0.0,
        sm=100.0 * totals["sm"] / n_utt if n_utt else 0.0,
        pr=100.0 * totals["pr"] / n_utt if n_utt else 0.0,
        sm_mode=mode,
        n_utterances=n_utt,
        n_dialogues=n_dial,
        per_dialogue=per_dialogue,
        macro=macro,
    )


# --- flattened DST training format -----------------------------------------

def flatten_slot(ref: SlotRef, ont: Ontology | None = None) -> str:
    """``domain_slot`` when the reference resolves, else the bare name."""
    if ont is not None:
        try:
            domain, slot = resolve(ref, ont)
            return f"{domain}_{slot}"
        except (UnknownSlotError, AmbiguousSlotError):
            pass
    return str(ref).replace(".", "_")


def flatten_item(item: AnnotationItem, ont: Ontology | None = None) -> str:
    flat = f"{item.act_type}:{flatten_slot(item.slot, ont)}"
    if item.value is not None:
        flat += f"={item.value}"
    return flat


def dst_records(dialogues, ont: Ontology | None = None) -> list[dict]:
    """One training record per utterance: chat history in, flat annotation out.

    The input wraps every utterance up to and including the target turn in
    ``<ctx>...</ctx>``; the target wraps the turn's flattened items in
    ``<annot>...</annot>``.
    """
    speaker_label = {"user": "User", "bot": "Bot"}
    records = []
    for d in _dialogues_of(dialogues):
        history = ""
        for k, turn in enumerate(d.turns):
            history += f"{speaker_label[turn.speaker.value]}: {turn.text} "
            target = "; ".join(flatten_item(i, ont) for i in turn.items)
            records.append({
                "dialogue_id": d.id,
                "turn": k,
                "input": f"<ctx>{history}</ctx>",
                "target": f"<annot>{target}</annot>",
            })
    return records


def export_dst(dialogues, path: str | Path, ont: Ontology | None = None) -> int:
    """Write DST training records as JSONL; returns the record count."""
    records = dst_records(dialogues, ont)
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")
    return len(records)
