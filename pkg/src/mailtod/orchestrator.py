"""Two-phase inference pipeline against a chat-completion endpoint.

Phase one rewrites each e-mail as a dialogue; phase two annotates every
utterance with its own independent completion that sees only the dialogue
prefix up to that turn.  The phases never share prompt content with the
source e-mail during annotation, which keeps annotations uninformed about
facts that have not surfaced in the conversation yet.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import requests

from .corpus import SPLIT_NAMES, CleanEmail, SplitAssignment, emails_for_split
from .dsl import (
    AnnotatedUtterance,
    Speaker,
    extract_annotations,
    parse_items,
    serialize,
    validate,
)
from .errors import (
    AnnotationParseError,
    BadResponseError,
    EndpointUnavailableError,
    ExcessiveFailuresError,
    InvalidDialogueError,
    MailtodError,
    NoDialogueFoundError,
    RateLimitedError,
)
from .ontology import Ontology, SlotRef
from .promptkit import (
    PromptLibrary,
    RenderedPrompt,
    build_annotation_prompt,
    build_generation_prompt,
    choose_variant,
)

logger = logging.getLogger(__name__)

SPEAKER_LINE_RE = re.compile(r"^\s*(user|bot)\s*:\s?(.*)$", re.IGNORECASE)
SPLIT_FILES = {"train": "train.json", "validation": "val.json", "test": "test.json"}


# --- domain types ------------------------------------------------------------

@dataclass
class GenerationMeta:
    model: str
    temperature: float
    timestamp: str


@dataclass
class Dialogue:
    id: str
    email_id: str
    turns: list[AnnotatedUtterance]
    variant_id: str
    generation_meta: GenerationMeta


@dataclass
class LLMClientConfig:
    base_url: str = ""
    model: str = "chat-model"
    temperature: float = 0.7
    max_retries: int = 2
    concurrency_limit: int = 1
    timeout: float = 60.0

    def __post_init__(self):
        if self.concurrency_limit < 1:
            raise ValueError("concurrency_limit must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


def dialogue_to_dict(d: Dialogue) -> dict:
    turns = []
    for t in d.turns:
        annotation = serialize(t.items) if t.items else (t.raw_suffix or "")
        turns.append({
            "speaker": t.speaker.value,
            "text": t.text,
            "annotation": annotation,
            "items": [{"act_type": i.act_type, "slot": str(i.slot), "value": i.value}
                      for i in t.items],
        })
    return {
        "id": d.id,
        "email_id": d.email_id,
        "variant_id": d.variant_id,
        "generation_meta": {
            "model": d.generation_meta.model,
            "temperature": d.generation_meta.temperature,
            "timestamp": d.generation_meta.timestamp,
        },
        "turns": turns,
    }


def dialogue_from_dict(data: dict) -> Dialogue:
    from .dsl import AnnotationItem

    turns = []
    for t in data["turns"]:
        items = [AnnotationItem(act_type=i["act_type"], slot=SlotRef.parse(i["slot"]),
                                value=i.get("value"))
                 for i in t.get("items", [])]
        turns.append(AnnotatedUtterance(
            speaker=Speaker(t["speaker"]),
            text=t["text"],
            items=items,
            raw_suffix=t.get("annotation") or None,
        ))
    meta = data.get("generation_meta", {})
    return Dialogue(
        id=data["id"],
        email_id=data["email_id"],
        turns=turns,
        variant_id=data.get("variant_id", "v0"),
        generation_meta=GenerationMeta(
            model=meta.get("model", "unknown"),
            temperature=meta.get("temperature", 0.0),
            timestamp=meta.get("timestamp", ""),
        ),
    )


# --- chat-completion clients ---------------------------------------------------

def chat_payload(prompt: RenderedPrompt, model: str, temperature: float) -> dict:
    """The wire payload; prompt.meta is bookkeeping and never included."""
    return {
        "model": model,
        "messages": [{"role": role, "content": content} for role, content in prompt.messages],
        "temperature": temperature,
    }


class HttpLLMClient:
    """Minimal chat-completion client with exponential-backoff retries."""

    def __init__(self, cfg: LLMClientConfig, token: str | None = None,
                 session=None, sleeper=None, backoff_base: float = 0.25):
        self.cfg = cfg
        self.model = cfg.model
        self.token = token if token is not None else os.environ.get("MAILTOD_LLM_TOKEN")
        self.session = session or requests.Session()
        self.sleeper = sleeper or time.sleep
        self.backoff_base = backoff_base

    def complete(self, prompt: RenderedPrompt, temperature: float | None = None) -> str:
        temp = self.cfg.temperature if temperature is None else temperature
        payload = chat_payload(prompt, self.cfg.model, temp)
        headers = {"Authorization": f"Bearer {self.token}"} if self.token else {}
        last_error = None
        rate_limited = False
        for attempt in range(self.cfg.max_retries + 1):
            if attempt:
                self.sleeper(self.backoff_base * 2 ** (attempt - 1))
            try:
                resp = self.session.post(self.cfg.base_url, json=payload, headers=headers,
                                         timeout=self.cfg.timeout)
            except requests.RequestException as e:
                last_error, rate_limited = str(e), False
                continue
            if resp.status_code == 429:
                last_error, rate_limited = "HTTP 429", True
                continue
            if resp.status_code >= 500:
                last_error, rate_limited = f"HTTP {resp.status_code}", False
                continue
            if resp.status_code >= 400:
                raise EndpointUnavailableError(
                    f"endpoint refused request: HTTP {resp.status_code}",
                    status=resp.status_code,
                )
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as e:
                raise BadResponseError(f"malformed completion payload: {e}") from e
        attempts = self.cfg.max_retries + 1
        if rate_limited:
            raise RateLimitedError(f"rate limited after {attempts} attempts", attempts=attempts)
        raise EndpointUnavailableError(
            f"endpoint unavailable after {attempts} attempts: {last_error}",
            attempts=attempts,
        )


class MockLLMClient:
    """Deterministic offline client; captures every wire payload it sees.

    Responses come from fixture files when a fixtures directory is given
    (``generation/<email_id>.txt`` and ``annotation/<dialogue_id>/<turn>.txt``)
    and are synthesized deterministically from the payload otherwise.
    """

    def __init__(self, fixtures_dir: str | Path | None = None, model: str = "mock-model"):
        self.fixtures_dir = Path(fixtures_dir) if fixtures_dir else None
        self.model = model
        self.captured: list[dict] = []
        self._lock = threading.Lock()

    def complete(self, prompt: RenderedPrompt, temperature: float | None = None) -> str:
        payload = chat_payload(prompt, self.model, 0.0 if temperature is None else temperature)
        with self._lock:
            self.captured.append({"purpose": prompt.purpose, "payload": payload,
                                  "meta": dict(prompt.meta)})
        if prompt.purpose == "generation":
            return self._generation_response(prompt, payload)
        return self._annotation_response(prompt, payload)

    def captured_payloads(self, purpose: str | None = None) -> list[dict]:
        with self._lock:
            records = list(self.captured)
        if purpose is None:
            return [r["payload"] for r in records]
        return [r["payload"] for r in records if r["purpose"] == purpose]

    def _fixture(self, *parts: str) -> str | None:
        if self.fixtures_dir is None:
            return None
        path = self.fixtures_dir.joinpath(*parts)
        if path.exists():
            return path.read_text(encoding="utf-8")
        return None

    def _generation_response(self, prompt: RenderedPrompt, payload: dict) -> str:
        email_id = prompt.meta.get("email_id", "")
        fixture = self._fixture("generation", f"{email_id}.txt")
        if fixture is not None:
            return fixture
        h = hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()
        n_turns = 4 + int(h[:2], 16) % 3
        lines = ["Sure, here is the conversation:", ""]
        for k in range(n_turns):
            if k % 2 == 0:
                lines.append(f"User: I am planning a trip, detail {k} (ref {h[:6]}).")
            else:
                lines.append(f"Bot: Noted, let me ask about detail {k} (ref {h[:6]}).")
        lines += ["", "Hope this helps!"]
        return "\n".join(lines)

    def _annotation_response(self, prompt: RenderedPrompt, payload: dict) -> str:
        dialogue_id = prompt.meta.get("dialogue_id", "")
        turn = prompt.meta.get("target_turn", 0)
        fixture = self._fixture("annotation", dialogue_id, f"{turn}.txt")
        if fixture is not None:
            return fixture
        cycle = (
            "// inform(destination=Namibia)",
            "// request(trip.type)",
            "// inform(guests=2)",
            "// act(require_more)",
        )
        return cycle[turn % len(cycle)]


# --- post-processing and parsing ---------------------------------------------

def postprocess_dialogue(raw: str) -> str:
    """Trim LLM output down to the speaker-prefixed dialogue block.

    Removes code fences, anything before the first ``User:``/``Bot:`` line,
    and trailing lines without a speaker prefix (commentary).  Idempotent.
    """
    lines = [l for l in raw.splitlines() if not l.lstrip().startswith("```")]
    prefixed = [i for i, l in enumerate(lines) if SPEAKER_LINE_RE.match(l)]
    if not prefixed:
        raise NoDialogueFoundError("no 'User:' or 'Bot:' line in completion")
    return "\n".join(lines[prefixed[0]:prefixed[-1] + 1])


def _parse_suffix(suffix: str | None) -> tuple[list, str | None]:
    if not suffix:
        return [], None
    try:
        return parse_items(suffix), suffix
    except AnnotationParseError as e:
        # Malformed corpus annotations are kept as raw text, never dropped.
        logger.warning("unparseable annotation %r: %s", suffix, e.message)
        return [], suffix


def parse_dialogue_text(clean: str) -> list[AnnotatedUtterance]:
    """Split a post-processed dialogue into turns.

    Lines without a speaker prefix continue the previous turn.  Non-alternating
    speakers produce a warning, not an error.
    """
    turns: list[AnnotatedUtterance] = []
    for line in clean.splitlines():
        if not line.strip():
            continue
        m = SPEAKER_LINE_RE.match(line)
        if m:
            speaker = Speaker.USER if m.group(1).lower() == "user" else Speaker.BOT
            text, suffix = extract_annotations(m.group(2))
            items, raw_suffix = _parse_suffix(suffix)
            turns.append(AnnotatedUtterance(speaker=speaker, text=text, items=items,
                                            raw_suffix=raw_suffix))
        else:
            if not turns:
                raise NoDialogueFoundError("continuation line before any speaker line")
            text, suffix = extract_annotations(line)
            turn = turns[-1]
            if text:
                turn.text = f"{turn.text} {text}".strip()
            if suffix:
                items, raw_suffix = _parse_suffix(suffix)
                turn.items.extend(items)
                turn.raw_suffix = f"{turn.raw_suffix} {raw_suffix}".strip() if turn.raw_suffix else raw_suffix
    if not turns:
        raise NoDialogueFoundError("no turns found")
    for k in range(1, len(turns)):
        if turns[k].speaker is turns[k - 1].speaker:
            logger.warning("ALTERNATION: consecutive %s turns at %d-%d",
                           turns[k].speaker.value, k - 1, k)
    return turns


# --- phase one: generation -----------------------------------------------------

def _timestamp(clock) -> str:
    ts = (clock or time.time)()
    return datetime.fromtimestamp(ts, tz=timezone.utc).isoformat()


def generate_dialogue(email: CleanEmail, client, library: PromptLibrary, variant: int,
                      temperature: float = 0.7, dialogue_id: str | None = None,
                      clock=None) -> Dialogue:
    """Phase one: one completion per e-mail, parsed into unannotated turns."""
    prompt = build_generation_prompt(email, variant, library)
    raw = client.complete(prompt, temperature=temperature)
    turns = parse_dialogue_text(postprocess_dialogue(raw))
    # Phase one output carries no annotations even if the model emitted some.
    turns = [AnnotatedUtterance(speaker=t.speaker, text=t.text) for t in turns]
    if len(turns) < 2:
        raise InvalidDialogueError(f"dialogue has {len(turns)} turn(s), need at least 2",
                                   n_turns=len(turns))
    if any(not t.text.strip() for t in turns):
        raise InvalidDialogueError("dialogue contains an empty turn text")
    return Dialogue(
        id=dialogue_id or f"dlg-{email.id}",
        email_id=email.id,
        turns=turns,
        variant_id=f"v{variant}",
        generation_meta=GenerationMeta(model=getattr(client, "model", "unknown"),
                                       temperature=temperature,
                                       timestamp=_timestamp(clock)),
    )


# --- phase two: annotation ------------------------------------------------------

def annotation_suffix(completion: str) -> str | None:
    """Pull the annotation text out of a phase-two completion.

    If several lines carry the ``//`` marker the last one wins (the prompt
    asks for the final utterance only); extras are logged.  A completion
    without a marker is treated as bare annotation text.
    """
    marked = [l for l in completion.splitlines() if "//" in l]
    if len(marked) > 1:
        logger.warning("annotation completion has %d marked lines, keeping the last",
                       len(marked))
    if marked:
        _, suffix = extract_annotations(marked[-1])
        return suffix or None
    text = completion.strip()
    return text or None


def annotate_dialogue(dialogue: Dialogue, client, library: PromptLibrary, ont: Ontology,
                      temperature: float = 0.0, failure_log: list | None = None) -> Dialogue:
    """Phase two: one independent completion per turn.

    A turn whose completion fails to arrive or parse keeps an empty item list
    and is recorded in the failure log; ontology violations are logged but the
    offending items are retained.
    """
    new_turns = []
    for k, turn in enumerate(dialogue.turns):
        prompt = build_annotation_prompt(dialogue, k, ont, library)
        items: list = []
        raw_suffix = None
        try:
            completion = client.complete(prompt, temperature=temperature)
            raw_suffix = annotation_suffix(completion)
            if raw_suffix is not None:
                items = parse_items(raw_suffix)
        except MailtodError as e:
            entry = {"kind": "turn", "dialogue_id": dialogue.id, "turn": k,
                     "error": e.code, "message": e.message}
            logger.warning("annotation failed for %s turn %d: %s", dialogue.id, k, e.message)
            if failure_log is not None:
                failure_log.append(entry)
            items = []
        else:
            violations = validate(items, ont)
            for v in violations:
                logger.warning("annotation violation in %s turn %d: %s",
                               dialogue.id, k, v.message)
        new_turns.append(AnnotatedUtterance(speaker=turn.speaker, text=turn.text,
                                            items=items, raw_suffix=raw_suffix))
    return Dialogue(id=dialogue.id, email_id=dialogue.email_id, turns=new_turns,
                    variant_id=dialogue.variant_id, generation_meta=dialogue.generation_meta)


# --- dataset bundle --------------------------------------------------------------

@dataclass
class DatasetBundle:
    splits: dict[str, list[Dialogue]]
    manifest: dict = field(default_factory=dict)

    def dialogues(self) -> list[Dialogue]:
        out = []
        for split in SPLIT_NAMES:
            out.extend(self.splits.get(split, []))
        return out


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def save_bundle(bundle: DatasetBundle, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for split, filename in SPLIT_FILES.items():
        dialogues = [dialogue_to_dict(d) for d in bundle.splits.get(split, [])]
        _write_atomic(out / filename, json.dumps(dialogues, indent=2, ensure_ascii=False) + "\n")
    _write_atomic(out / "manifest.json",
                  json.dumps(bundle.manifest, indent=2, ensure_ascii=False) + "\n")


def load_bundle(path: str | Path) -> DatasetBundle:
    root = Path(path)
    splits: dict[str, list[Dialogue]] = {}
    for split, filename in SPLIT_FILES.items():
        f = root / filename
        if f.exists():
            splits[split] = [dialogue_from_dict(d)
                             for d in json.loads(f.read_text(encoding="utf-8"))]
        else:
            splits[split] = []
    manifest_file = root / "manifest.json"
    manifest = json.loads(manifest_file.read_text(encoding="utf-8")) if manifest_file.exists() else {}
    return DatasetBundle(splits=splits, manifest=manifest)


def load_dialogues(path: str | Path) -> list[Dialogue]:
    """Load dialogues from a bundle directory, a JSON array, or reduced JSONL.

    The reduced form is one record per turn:
    ``{"dialogue_id", "turn", "items": [{"slot", "value", "act_type"?}]}``;
    turns not mentioned get empty item lists.
    """
    from .dsl import AnnotationItem

    p = Path(path)
    if p.is_dir():
        return load_bundle(p).dialogues()
    text = p.read_text(encoding="utf-8")
    if p.suffix == ".jsonl":
        by_dialogue: dict[str, dict[int, list]] = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            items = [AnnotationItem(act_type=i.get("act_type", "inform"),
                                    slot=SlotRef.parse(i["slot"]), value=i.get("value"))
                     for i in rec.get("items", [])]
            by_dialogue.setdefault(rec["dialogue_id"], {})[int(rec["turn"])] = items
        dialogues = []
        for did in by_dialogue:
            n_turns = max(by_dialogue[did]) + 1
            turns = [AnnotatedUtterance(speaker=Speaker.USER if k % 2 == 0 else Speaker.BOT,
                                        text="", items=by_dialogue[did].get(k, []))
                     for k in range(n_turns)]
            meta = GenerationMeta(model="external", temperature=0.0, timestamp="")
            dialogues.append(Dialogue(id=did, email_id="", turns=turns,
                                      variant_id="external", generation_meta=meta))
        return dialogues
    return [dialogue_from_dict(d) for d in json.loads(text)]


# --- full pipeline ----------------------------------------------------------------

def run_pipeline(emails: list[CleanEmail], splits: SplitAssignment, client,
                 library: PromptLibrary, ont: Ontology, out_dir: str | Path, *,
                 seed: int = 42, generation_temperature: float = 0.7,
                 annotation_temperature: float = 0.0,
                 variant_policy: str = "round_robin", concurrency: int = 1,
                 max_failure_rate: float = 0.1, annotate: bool = True,
                 clock=None) -> DatasetBundle:
    """Generate and annotate dialogues for every split, then write the bundle.

    Resumable: an e-mail whose per-dialogue work file already exists under
    ``out_dir/work/<split>/`` is loaded instead of re-processed.  Failed
    e-mails are recorded in ``failures.jsonl`` and skipped; the run aborts
    only when the e-mail failure rate exceeds ``max_failure_rate``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    failures: list[dict] = []
    failure_lock = threading.Lock()

    def record(entry: dict) -> None:
        with failure_lock:
            failures.append(entry)

    n_variants = len(library.generation)
    counts: dict[str, dict] = {}
    bundle_splits: dict[str, list[Dialogue]] = {}
    total_emails = 0

    for split in SPLIT_NAMES:
        split_emails = emails_for_split(emails, splits, split)
        total_emails += len(split_emails)
        work_dir = out / "work" / split
        work_dir.mkdir(parents=True, exist_ok=True)

        def process(task: tuple[int, CleanEmail]) -> Dialogue | None:
            index, email = task
            work_file = work_dir / f"{email.id}.json"
            if work_file.exists():
                return dialogue_from_dict(json.loads(work_file.read_text(encoding="utf-8")))
            variant = choose_variant(index, n_variants, variant_policy, seed)
            turn_failures: list[dict] = []
            try:
                dialogue = generate_dialogue(email, client, library, variant,
                                             temperature=generation_temperature, clock=clock)
                if annotate:
                    dialogue = annotate_dialogue(dialogue, client, library, ont,
                                                 temperature=annotation_temperature,
                                                 failure_log=turn_failures)
            except MailtodError as e:
                record({"kind": "email", "split": split, "email_id": email.id,
                        "error": e.code, "message": e.message})
                return None
            for entry in turn_failures:
                record(dict(entry, split=split, email_id=email.id))
            _write_atomic(work_file,
                          json.dumps(dialogue_to_dict(dialogue), indent=2, ensure_ascii=False) + "\n")
            return dialogue

        with ThreadPoolExecutor(max_workers=max(1, concurrency)) as pool:
            results = list(pool.map(process, enumerate(split_emails)))
        bundle_splits[split] = [d for d in results if d is not None]
        counts[split] = {
            "emails": len(split_emails),
            "dialogues": len(bundle_splits[split]),
            "failures": len(split_emails) - len(bundle_splits[split]),
        }

    config = {
        "seed": seed,
        "model": getattr(client, "model", "unknown"),
        "generation_temperature": generation_temperature,
        "annotation_temperature": annotation_temperature,
        "variant_policy": variant_policy,
        "sizes": {s: counts[s]["emails"] for s in SPLIT_NAMES},
    }
    manifest = {
        "seed": seed,
        "config_hash": hashlib.sha256(
            json.dumps(config, sort_keys=True).encode("utf-8")).hexdigest(),
        "model": config["model"],
        "variant_policy": variant_policy,
        "counts": counts,
        "created_at": _timestamp(clock),
    }
    bundle = DatasetBundle(splits=bundle_splits, manifest=manifest)
    save_bundle(bundle, out)
    failure_lines = [json.dumps(f, ensure_ascii=False, sort_keys=True) for f in failures]
    _write_atomic(out / "failures.jsonl", "\n".join(failure_lines) + ("\n" if failure_lines else ""))

    email_failures = len({f["email_id"] for f in failures if f["kind"] == "email"})
    if total_emails and email_failures / total_emails > max_failure_rate:
        raise ExcessiveFailuresError(
            f"{email_failures}/{total_emails} e-mails failed "
            f"(limit {max_failure_rate:.0%})",
            failed=email_failures, total=total_emails,
        )
    return bundle
