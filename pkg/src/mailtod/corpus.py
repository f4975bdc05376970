"""Raw e-mail corpus preparation: ingest, filter, anonymize, translate, split.

The canonical corpus format is JSONL with one object per e-mail:
``{"id", "body", "subject"?, "source_lang", "translated",
"redactions": [{"start", "end", "category"}]}``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import random
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Protocol

import requests

from .errors import (
    InsufficientCorpusError,
    MalformedRecordError,
    MTRejectedError,
    MTUnavailableError,
    UnreadableFileError,
)

try:
    import tomllib
except ImportError:  # py3.10
    import tomli as tomllib

logger = logging.getLogger(__name__)

TRAIN = "train"
VALIDATION = "validation"
TEST = "test"
SPLIT_NAMES = (TRAIN, VALIDATION, TEST)

REDACTION_CATEGORIES = ("EMAIL_ADDR", "PHONE", "PERSON_NAME", "URL", "OTHER_PII")


# --- domain types ------------------------------------------------------------

@dataclass
class RawEmail:
    id: str
    body: str
    subject: str | None = None
    source_lang: str = "de"
    received_at: str | None = None


@dataclass(frozen=True)
class Redaction:
    start: int  # span in the original body, end-exclusive
    end: int
    category: str


@dataclass
class CleanEmail:
    id: str
    body: str
    subject: str | None = None
    source_lang: str = "de"
    translated: bool = False
    redactions: list[Redaction] = field(default_factory=list)


class FilterReason(str, Enum):
    EMPTY = "EMPTY"
    TOO_SHORT = "TOO_SHORT"
    OUT_OF_OFFICE = "OUT_OF_OFFICE"
    TEST_MESSAGE = "TEST_MESSAGE"
    SCAM_SUSPECT = "SCAM_SUSPECT"
    DUPLICATE = "DUPLICATE"
    NONE = "NONE"


@dataclass(frozen=True)
class FilterVerdict:
    email_id: str
    kept: bool
    reason: FilterReason


@dataclass
class SplitAssignment:
    assignments: dict[str, str]
    seed: int

    def ids_for(self, split: str) -> list[str]:
        return [i for i, s in self.assignments.items() if s == split]

    def sizes(self) -> dict[str, int]:
        sizes = {name: 0 for name in SPLIT_NAMES}
        for s in self.assignments.values():
            sizes[s] += 1
        return sizes

    def to_dict(self) -> dict:
        return {"seed": self.seed,
                "splits": {name: self.ids_for(name) for name in SPLIT_NAMES}}

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "SplitAssignment":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        assignments = {}
        for name, ids in data["splits"].items():
            for i in ids:
                assignments[i] = name
        return cls(assignments=assignments, seed=data["seed"])


@dataclass
class StatsReport:
    n_emails: int
    short: int
    elaborate: int
    short_threshold: int
    mean_tokens: float
    histogram: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "n_emails": self.n_emails, "short": self.short, "elaborate": self.elaborate,
            "short_threshold": self.short_threshold, "mean_tokens": self.mean_tokens,
            "histogram": self.histogram,
        }


# --- config file helper -------------------------------------------------------

def load_mapping_file(path: str | Path) -> dict:
    """Read a TOML or JSON mapping file (sniffed by extension, JSON fallback)."""
    p = Path(path)
    try:
        data = p.read_bytes()
    except OSError as e:
        raise UnreadableFileError(f"cannot read {p}: {e}") from e
    if p.suffix.lower() == ".toml":
        return tomllib.loads(data.decode("utf-8"))
    return json.loads(data.decode("utf-8"))


# --- ingest ---------------------------------------------------------------

JSONL = "jsonl"
CSV = "csv"
DIRECTORY_OF_TEXT = "directory_of_text"
_FORMAT_ALIASES = {"jsonl": JSONL, "json": JSONL, "csv": CSV,
                   "directory_of_text": DIRECTORY_OF_TEXT, "dir": DIRECTORY_OF_TEXT,
                   "text": DIRECTORY_OF_TEXT}


def _generated_id(index: int, body: str) -> str:
    digest = hashlib.sha256(body.encode("utf-8")).hexdigest()[:8]
    return f"m{index:05d}-{digest}"


def _email_from_record(record: dict, index: int) -> RawEmail:
    body = record.get("body")
    if not isinstance(body, str):
        raise ValueError("missing or non-string 'body' field")
    return RawEmail(
        id=str(record["id"]) if record.get("id") is not None else _generated_id(index, body),
        body=body,
        subject=record.get("subject"),
        source_lang=record.get("source_lang", "de"),
        received_at=record.get("received_at"),
    )


def ingest(path: str | Path, format: str | None = None, strict: bool = False) -> list[RawEmail]:
    """Read raw e-mails from JSONL, CSV, or a directory of .txt files.

    Records without an id get one generated deterministically from the record
    index and a body hash.  Malformed records are logged and skipped unless
    ``strict`` is set, in which case the first one aborts the ingest.
    """
    p = Path(path)
    if not p.exists():
        raise UnreadableFileError(f"no such path: {p}")
    if format is None:
        format = DIRECTORY_OF_TEXT if p.is_dir() else (CSV if p.suffix.lower() == ".csv" else JSONL)
    fmt = _FORMAT_ALIASES.get(format.lower())
    if fmt is None:
        raise UnreadableFileError(f"unknown ingest format: {format!r}")
    if fmt == DIRECTORY_OF_TEXT and not p.is_dir():
        raise UnreadableFileError(f"{p} is not a directory")
    if fmt != DIRECTORY_OF_TEXT and p.is_dir():
        raise UnreadableFileError(f"{p} is a directory, expected a {fmt} file")

    emails: list[RawEmail] = []
    seen_ids: set[str] = set()

    def add(record: dict, where: str, index: int) -> None:
        try:
            email = _email_from_record(record, index)
            if email.id in seen_ids:
                raise ValueError(f"duplicate id {email.id!r}")
        except ValueError as e:
            if strict:
                raise MalformedRecordError(f"{where}: {e}", location=where) from e
            logger.warning("MALFORMED_RECORD %s: %s", where, e)
            return
        seen_ids.add(email.id)
        emails.append(email)

    if fmt == JSONL:
        with open(p, encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                where = f"{p.name}:{lineno}"
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as e:
                    if strict:
                        raise MalformedRecordError(f"{where}: {e}", location=where) from e
                    logger.warning("MALFORMED_RECORD %s: %s", where, e)
                    continue
                add(record if isinstance(record, dict) else {}, where, lineno - 1)
    elif fmt == CSV:
        with open(p, encoding="utf-8", newline="") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames is None or "body" not in reader.fieldnames:
                raise UnreadableFileError(f"{p}: CSV must have a 'body' column")
            for lineno, row in enumerate(reader, start=2):
                add({k: v for k, v in row.items() if v not in (None, "")},
                    f"{p.name}:{lineno}", lineno - 2)
    else:
        for index, txt in enumerate(sorted(p.glob("*.txt"))):
            try:
                body = txt.read_text(encoding="utf-8")
            except OSError as e:
                if strict:
                    raise MalformedRecordError(f"{txt.name}: {e}", location=str(txt)) from e
                logger.warning("MALFORMED_RECORD %s: %s", txt.name, e)
                continue
            add({"id": txt.stem, "body": body}, txt.name, index)
    return emails


# --- canonical corpus IO ----------------------------------------------------

def _clean_to_dict(email: CleanEmail) -> dict:
    record = {"id": email.id, "body": email.body}
    if email.subject is not None:
        record["subject"] = email.subject
    record["source_lang"] = email.source_lang
    record["translated"] = email.translated
    record["redactions"] = [{"start": r.start, "end": r.end, "category": r.category}
                            for r in email.redactions]
    return record


def write_corpus(emails: list[CleanEmail], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for email in emails:
            f.write(json.dumps(_clean_to_dict(email), ensure_ascii=False) + "\n")


def read_corpus(path: str | Path, strict: bool = False) -> list[CleanEmail]:
    emails: list[CleanEmail] = []
    p = Path(path)
    if not p.exists():
        raise UnreadableFileError(f"no such file: {p}")
    with open(p, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            where = f"{p.name}:{lineno}"
            try:
                record = json.loads(line)
                emails.append(CleanEmail(
                    id=str(record["id"]),
                    body=record["body"],
                    subject=record.get("subject"),
                    source_lang=record.get("source_lang", "de"),
                    translated=bool(record.get("translated", False)),
                    redactions=[Redaction(r["start"], r["end"], r["category"])
                                for r in record.get("redactions", [])],
                ))
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                if strict:
                    raise MalformedRecordError(f"{where}: {e}", location=where) from e
                logger.warning("MALFORMED_RECORD %s: %s", where, e)
    return emails


def as_clean(email: RawEmail) -> CleanEmail:
    """Wrap a raw e-mail unchanged (no redactions, untranslated)."""
    return CleanEmail(id=email.id, body=email.body, subject=email.subject,
                      source_lang=email.source_lang)


# --- filtering ----------------------------------------------------------------

DEFAULT_OUT_OF_OFFICE = (
    "out of office", "out-of-office", "abwesenheitsnotiz", "automatische antwort",
    "automatic reply", "auto-reply", "autoreply", "bin derzeit nicht erreichbar",
    "currently out of the office", "nicht im büro",
)
DEFAULT_TEST_PHRASES = (
    "test message", "testmail", "test mail", "testnachricht", "this is a test",
    "nur ein test", "bitte ignorieren", "please ignore this",
)
DEFAULT_SCAM_KEYWORDS = (
    "lottery", "inheritance", "western union", "wire transfer urgently",
    "bitcoin wallet", "gewinnbenachrichtigung", "sie haben gewonnen",
)

URL_RE = re.compile(r"(?:https?://|www\.)[^\s<>\"]+")


@dataclass
class FilterRuleSet:
    min_tokens: int = 2
    out_of_office: tuple[str, ...] = DEFAULT_OUT_OF_OFFICE
    test_phrases: tuple[str, ...] = DEFAULT_TEST_PHRASES
    scam_keywords: tuple[str, ...] = DEFAULT_SCAM_KEYWORDS
    min_scam_urls: int = 2
    scam_url_density: float = 0.2
    dedup: bool = False

    @classmethod
    def load(cls, path: str | Path) -> "FilterRuleSet":
        data = load_mapping_file(path)
        kwargs = {}
        for key in ("min_tokens", "min_scam_urls", "scam_url_density", "dedup"):
            if key in data:
                kwargs[key] = data[key]
        for key in ("out_of_office", "test_phrases", "scam_keywords"):
            if key in data:
                kwargs[key] = tuple(data[key])
        return cls(**kwargs)


def _verdict_reason(email: RawEmail, rules: FilterRuleSet, seen_hashes: set[str]) -> FilterReason:
    body = email.body
    if not body.strip():
        return FilterReason.EMPTY
    tokens = body.split()
    if len(tokens) < rules.min_tokens:
        return FilterReason.TOO_SHORT
    haystack = ((email.subject or "") + "\n" + body).lower()
    if any(phrase in haystack for phrase in rules.out_of_office):
        return FilterReason.OUT_OF_OFFICE
    if body.strip().lower() == "test" or any(p in haystack for p in rules.test_phrases):
        return FilterReason.TEST_MESSAGE
    urls = URL_RE.findall(body)
    if any(k in haystack for k in rules.scam_keywords):
        return FilterReason.SCAM_SUSPECT
    if len(urls) >= rules.min_scam_urls and len(urls) / len(tokens) >= rules.scam_url_density:
        return FilterReason.SCAM_SUSPECT
    if rules.dedup:
        digest = hashlib.sha256(body.encode("utf-8")).hexdigest()
        if digest in seen_hashes:
            return FilterReason.DUPLICATE
        seen_hashes.add(digest)
    return FilterReason.NONE


def filter_emails(emails: list[RawEmail], rules: FilterRuleSet | None = None) -> list[FilterVerdict]:
    """Rule-based noise filtering; pure and deterministic, one verdict per input."""
    rules = rules or FilterRuleSet()
    seen_hashes: set[str] = set()
    verdicts = []
    for email in emails:
        reason = _verdict_reason(email, rules, seen_hashes)
        verdicts.append(FilterVerdict(email_id=email.id, kept=reason is FilterReason.NONE,
                                      reason=reason))
    return verdicts


def kept_emails(emails: list[RawEmail], verdicts: list[FilterVerdict]) -> list[RawEmail]:
    kept_ids = {v.email_id for v in verdicts if v.kept}
    return [e for e in emails if e.id in kept_ids]


# --- anonymization --------------------------------------------------------------

EMAIL_ADDR_RE = re.compile(r"[A-Za-z0-9._%+\-]+@[A-Za-z0-9.\-]+\.[A-Za-z]{2,}")
# Phone shapes: +49 170 1234567 / 0170-1234567 / (089) 123456.  Dot separators
# are deliberately excluded so date strings like 01.07.2024 never match.
PHONE_RE = re.compile(r"(?:\+\d{1,3}|\(?0\d{1,4}\)?)(?:[ \-/]?\d{2,8}){1,5}")
IBAN_RE = re.compile(r"\b[A-Z]{2}\d{2}(?: ?[A-Z0-9]{4}){4,7}(?: ?[A-Z0-9]{1,4})?\b")


def _phone_spans(body: str):
    for m in PHONE_RE.finditer(body):
        digits = sum(c.isdigit() for c in m.group(0))
        if 7 <= digits <= 15:
            yield m.start(), m.end()


@dataclass
class RedactionRuleSet:
    """Pattern rules per category plus an optional person-name dictionary."""

    redact_urls: bool = True
    redact_emails: bool = True
    redact_phones: bool = True
    redact_iban: bool = True
    names: tuple[str, ...] = ()
    extra_patterns: tuple[str, ...] = ()  # regexes redacted as OTHER_PII

    @classmethod
    def load(cls, path: str | Path) -> "RedactionRuleSet":
        data = load_mapping_file(path)
        kwargs = {k: data[k] for k in
                  ("redact_urls", "redact_emails", "redact_phones", "redact_iban")
                  if k in data}
        if "names" in data:
            kwargs["names"] = tuple(data["names"])
        if "extra_patterns" in data:
            kwargs["extra_patterns"] = tuple(data["extra_patterns"])
        return cls(**kwargs)

    def _name_re(self) -> re.Pattern | None:
        if not self.names:
            return None
        alts = sorted((re.escape(n) for n in self.names), key=len, reverse=True)
        return re.compile(r"\b(?:" + "|".join(alts) + r")\b", re.IGNORECASE)


def _candidate_spans(body: str, rules: RedactionRuleSet):
    # Priority order decides overlap winners: URLs swallow embedded addresses.
    if rules.redact_urls:
        for m in URL_RE.finditer(body):
            yield (m.start(), m.end(), "URL")
    if rules.redact_emails:
        for m in EMAIL_ADDR_RE.finditer(body):
            yield (m.start(), m.end(), "EMAIL_ADDR")
    if rules.redact_phones:
        for start, end in _phone_spans(body):
            yield (start, end, "PHONE")
    name_re = rules._name_re()
    if name_re:
        for m in name_re.finditer(body):
            yield (m.start(), m.end(), "PERSON_NAME")
    if rules.redact_iban:
        for m in IBAN_RE.finditer(body):
            yield (m.start(), m.end(), "OTHER_PII")
    for pattern in rules.extra_patterns:
        for m in re.finditer(pattern, body):
            yield (m.start(), m.end(), "OTHER_PII")


def anonymize(email: RawEmail, rules: RedactionRuleSet | None = None) -> CleanEmail:
    """Replace PII matches with ``[CATEGORY]`` placeholders.

    Spans are recorded against the original body and never overlap; when
    candidates overlap, the higher-priority category wins.
    """
    rules = rules or RedactionRuleSet()
    claimed: list[tuple[int, int, str]] = []
    for start, end, category in _candidate_spans(email.body, rules):
        if any(start < e and s < end for s, e, _ in claimed):
            continue
        claimed.append((start, end, category))
    claimed.sort()
    body = email.body
    for start, end, category in reversed(claimed):
        body = body[:start] + f"[{category}]" + body[end:]
    return CleanEmail(
        id=email.id,
        body=body,
        subject=email.subject,
        source_lang=email.source_lang,
        redactions=[Redaction(s, e, c) for s, e, c in claimed],
    )


# --- translation --------------------------------------------------------------

class MTClient(Protocol):
    def translate(self, text: str, source: str, target: str) -> str: ...


class HttpMTClient:
    """Provider-agnostic MT endpoint client.

    POSTs ``{"text", "source", "target"}`` and expects ``{"text"}`` back.
    Transient failures (connection errors, 429, 5xx) are retried with
    exponential backoff; other 4xx responses are non-retryable rejections.
    """

    def __init__(self, endpoint: str, token: str | None = None, max_retries: int = 3,
                 timeout: float = 30.0, backoff_base: float = 0.25,
                 session=None, sleeper=None):
        self.endpoint = endpoint
        self.token = token if token is not None else os.environ.get("MAILTOD_MT_TOKEN")
        self.max_retries = max_retries
        self.timeout = timeout
        self.backoff_base = backoff_base
        self.session = session or requests.Session()
        self.sleeper = sleeper or __import__("time").sleep

    def translate(self, text: str, source: str, target: str) -> str:
        headers = {"Authorization": f"Bearer {self.token}"} if self.token else {}
        payload = {"text": text, "source": source, "target": target}
        last_error = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                self.sleeper(self.backoff_base * 2 ** (attempt - 1))
            try:
                resp = self.session.post(self.endpoint, json=payload, headers=headers,
                                         timeout=self.timeout)
            except requests.RequestException as e:
                last_error = str(e)
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last_error = f"HTTP {resp.status_code}"
                continue
            if resp.status_code >= 400:
                raise MTRejectedError(f"MT endpoint rejected request: HTTP {resp.status_code}",
                                      status=resp.status_code)
            try:
                return resp.json()["text"]
            except (ValueError, KeyError) as e:
                raise MTRejectedError(f"MT endpoint returned malformed payload: {e}") from e
        raise MTUnavailableError(
            f"MT endpoint unavailable after {self.max_retries + 1} attempts: {last_error}",
            attempts=self.max_retries + 1,
        )


def translate(email: CleanEmail, mt: MTClient, target_lang: str = "en") -> CleanEmail:
    """Translate the body to English; English input passes through untouched."""
    if email.translated:
        return email
    source = (email.source_lang or "").lower()
    if source[:2] == target_lang[:2].lower():
        return replace(email, translated=False)
    translated = mt.translate(email.body, source=email.source_lang, target=target_lang)
    return replace(email, body=translated, translated=True)


def translate_all(emails: list[CleanEmail], mt: MTClient, target_lang: str = "en",
                  concurrency: int = 4) -> tuple[list[CleanEmail], list[dict]]:
    """Translate a batch with bounded parallelism.

    Output order equals input order; failed e-mails are excluded and returned
    as failure records instead.
    """
    results: list[CleanEmail | None] = [None] * len(emails)
    failures: list[dict] = []

    def work(index: int) -> None:
        try:
            results[index] = translate(emails[index], mt, target_lang)
        except (MTUnavailableError, MTRejectedError) as e:
            failures.append({"email_id": emails[index].id, "error": e.code,
                             "message": e.message})

    with ThreadPoolExecutor(max_workers=max(1, concurrency)) as pool:
        list(pool.map(work, range(len(emails))))
    return [r for r in results if r is not None], failures


# --- split sampling --------------------------------------------------------------

def sample_splits(emails: list[CleanEmail], sizes: tuple[int, int, int],
                  seed: int) -> SplitAssignment:
    """Randomly assign disjoint train/validation/test splits of exact sizes."""
    n_train, n_val, n_test = sizes
    needed = n_train + n_val + n_test
    if len(emails) < needed:
        raise InsufficientCorpusError(
            f"need {needed} e-mails for splits {sizes}, have {len(emails)}",
            needed=needed, available=len(emails),
        )
    ids = [e.id for e in emails]
    rng = random.Random(seed)
    rng.shuffle(ids)
    assignments: dict[str, str] = {}
    for i in ids[:n_train]:
        assignments[i] = TRAIN
    for i in ids[n_train:n_train + n_val]:
        assignments[i] = VALIDATION
    for i in ids[n_train + n_val:needed]:
        assignments[i] = TEST
    return SplitAssignment(assignments=assignments, seed=seed)


def emails_for_split(emails: list[CleanEmail], splits: SplitAssignment,
                     split: str) -> list[CleanEmail]:
    """Filter a corpus to one split, preserving corpus order."""
    return [e for e in emails if splits.assignments.get(e.id) == split]


# --- statistics ------------------------------------------------------------------

def corpus_stats(emails: list[CleanEmail], short_threshold: int = 25) -> StatsReport:
    """Token-length histogram plus the short vs elaborate breakdown."""
    counts = [len(e.body.split()) for e in emails]
    histogram: dict[str, int] = {}
    for c in counts:
        label = "100+" if c >= 100 else f"{(c // 10) * 10}-{(c // 10) * 10 + 9}"
        histogram[label] = histogram.get(label, 0) + 1

    def bucket_key(label: str) -> int:
        return 100 if label == "100+" else int(label.split("-")[0])

    return StatsReport(
        n_emails=len(emails),
        short=sum(1 for c in counts if c < short_threshold),
        elaborate=sum(1 for c in counts if c >= short_threshold),
        short_threshold=short_threshold,
        mean_tokens=round(sum(counts) / len(counts), 2) if counts else 0.0,
        histogram={k: histogram[k] for k in sorted(histogram, key=bucket_key)},
    )
