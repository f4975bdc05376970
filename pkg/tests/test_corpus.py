from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from mailtod.corpus import (
    CleanEmail,
    FilterReason,
    FilterRuleSet,
    HttpMTClient,
    RawEmail,
    RedactionRuleSet,
    anonymize,
    as_clean,
    corpus_stats,
    filter_emails,
    ingest,
    kept_emails,
    read_corpus,
    sample_splits,
    translate,
    translate_all,
    write_corpus,
)
from mailtod.errors import (
    InsufficientCorpusError,
    MalformedRecordError,
    MTRejectedError,
    MTUnavailableError,
    UnreadableFileError,
)

from conftest import FIXTURES


# --- ingest -----------------------------------------------------------------

def test_ingest_jsonl_basic(tmp_path):
    path = tmp_path / "emails.jsonl"
    path.write_text('{"id":"e1","body":"Namibia individual trip"}\n')
    emails = ingest(path)
    assert emails == [RawEmail(id="e1", body="Namibia individual trip")]


def test_ingest_empty_file(tmp_path):
    path = tmp_path / "emails.jsonl"
    path.write_text("")
    assert ingest(path) == []


def test_ingest_malformed_line_non_strict(tmp_path, caplog):
    path = tmp_path / "emails.jsonl"
    path.write_text('{"id":"a","body":"x y"}\nnot json\n{"id":"b","body":"z w"}\n')
    with caplog.at_level(logging.WARNING):
        emails = ingest(path)
    assert [e.id for e in emails] == ["a", "b"]
    assert sum("MALFORMED_RECORD" in r.message for r in caplog.records) == 1


def test_ingest_malformed_line_strict(tmp_path):
    path = tmp_path / "emails.jsonl"
    path.write_text('{"id":"a","body":"x"}\nnot json\n')
    with pytest.raises(MalformedRecordError) as err:
        ingest(path, strict=True)
    assert "2" in err.value.details["location"]


def test_ingest_generates_deterministic_ids(tmp_path):
    path = tmp_path / "emails.jsonl"
    path.write_text('{"body":"first mail"}\n{"body":"second mail"}\n')
    first = ingest(path)
    second = ingest(path)
    assert [e.id for e in first] == [e.id for e in second]
    assert len({e.id for e in first}) == 2


def test_ingest_duplicate_ids_skipped(tmp_path, caplog):
    path = tmp_path / "emails.jsonl"
    path.write_text('{"id":"a","body":"x"}\n{"id":"a","body":"y"}\n')
    with caplog.at_level(logging.WARNING):
        emails = ingest(path)
    assert len(emails) == 1


def test_ingest_csv(tmp_path):
    path = tmp_path / "emails.csv"
    path.write_text("id,body,subject\ne1,hello world,greeting\ne2,second body,\n")
    emails = ingest(path)
    assert emails[0] == RawEmail(id="e1", body="hello world", subject="greeting")
    assert emails[1].subject is None


def test_ingest_csv_without_body_column(tmp_path):
    path = tmp_path / "emails.csv"
    path.write_text("id,text\ne1,hello\n")
    with pytest.raises(UnreadableFileError):
        ingest(path)


def test_ingest_directory_of_text(tmp_path):
    (tmp_path / "b.txt").write_text("second")
    (tmp_path / "a.txt").write_text("first")
    emails = ingest(tmp_path)
    assert [(e.id, e.body) for e in emails] == [("a", "first"), ("b", "second")]


def test_ingest_missing_path():
    with pytest.raises(UnreadableFileError):
        ingest("/no/such/место")


def test_ingest_bad_format(tmp_path):
    path = tmp_path / "x.jsonl"
    path.write_text("{}")
    with pytest.raises(UnreadableFileError):
        ingest(path, format="parquet")


def test_canonical_round_trip_identity(tmp_path):
    emails = [CleanEmail(id="a", body="hello world", source_lang="de"),
              CleanEmail(id="b", body="zwei", subject="s", source_lang="en", translated=True)]
    path = tmp_path / "corpus.jsonl"
    write_corpus(emails, path)
    loaded = read_corpus(path)
    assert [(e.id, e.body, e.source_lang) for e in loaded] == \
        [(e.id, e.body, e.source_lang) for e in emails]
    # and a canonical file is ingestible as raw input
    raw = ingest(path)
    assert [(e.id, e.body, e.source_lang) for e in raw] == \
        [(e.id, e.body, e.source_lang) for e in emails]


# --- filter ---------------------------------------------------------------------

def _raw(body: str, id: str = "x", subject: str | None = None) -> RawEmail:
    return RawEmail(id=id, body=body, subject=subject)


def test_filter_empty_body():
    (verdict,) = filter_emails([_raw("")])
    assert not verdict.kept
    assert verdict.reason is FilterReason.EMPTY


def test_filter_out_of_office_case_insensitive():
    (verdict,) = filter_emails([_raw("I am OUT OF OFFICE until May")])
    assert verdict.reason is FilterReason.OUT_OF_OFFICE


def test_filter_keeps_short_real_request():
    (verdict,) = filter_emails([_raw("Namibia individual trip")])
    assert verdict.kept
    assert verdict.reason is FilterReason.NONE


def test_filter_fixture_matches_hand_labels():
    emails = [RawEmail(id=e.id, body=e.body, subject=e.subject, source_lang=e.source_lang)
              for e in read_corpus(FIXTURES / "filter_corpus.jsonl")]
    labels = json.loads((FIXTURES / "filter_labels.json").read_text())
    verdicts = filter_emails(emails)
    got = {v.email_id: v.reason.value for v in verdicts}
    assert got == labels
    for v in verdicts:
        assert v.kept == (v.reason is FilterReason.NONE)


def test_filter_is_deterministic_and_idempotent():
    emails = [RawEmail(id=e.id, body=e.body, subject=e.subject)
              for e in read_corpus(FIXTURES / "filter_corpus.jsonl")]
    first = filter_emails(emails)
    assert filter_emails(emails) == first
    kept = kept_emails(emails, first)
    again = filter_emails(kept)
    assert all(v.kept for v in again)


def test_filter_dedup_off_by_default_and_on_when_enabled():
    emails = [_raw("same body here", id="a"), _raw("same body here", id="b")]
    default = filter_emails(emails)
    assert all(v.kept for v in default)
    with_dedup = filter_emails(emails, FilterRuleSet(dedup=True))
    assert [v.reason for v in with_dedup] == [FilterReason.NONE, FilterReason.DUPLICATE]


def test_filter_rules_load_json(tmp_path):
    path = tmp_path / "rules.json"
    path.write_text(json.dumps({"min_tokens": 5, "dedup": True}))
    rules = FilterRuleSet.load(path)
    assert rules.min_tokens == 5 and rules.dedup is True


def test_filter_rules_load_toml(tmp_path):
    path = tmp_path / "rules.toml"
    path.write_text('min_tokens = 3\nout_of_office = ["gone fishing"]\n')
    rules = FilterRuleSet.load(path)
    assert rules.min_tokens == 3
    assert rules.out_of_office == ("gone fishing",)


# --- anonymize ---------------------------------------------------------------------

def test_anonymize_email_address_span():
    clean = anonymize(_raw("contact me at max@example.org"))
    assert clean.body == "contact me at [EMAIL_ADDR]"
    assert [(r.start, r.end, r.category) for r in clean.redactions] == [(14, 29, "EMAIL_ADDR")]


def test_anonymize_no_pii_is_identity():
    clean = anonymize(_raw("just a plain travel wish"))
    assert clean.body == "just a plain travel wish"
    assert clean.redactions == []


def test_anonymize_phone():
    assert anonymize(_raw("call +49 170 1234567")).body == "call [PHONE]"


def test_anonymize_fixture_cases():
    fixture = json.loads((FIXTURES / "pii_cases.json").read_text())
    rules = RedactionRuleSet(names=tuple(fixture["names"]))
    for case in fixture["cases"]:
        clean = anonymize(_raw(case["text"]), rules)
        assert clean.body == case["expected"], case["text"]
        assert [r.category for r in clean.redactions] == case["categories"], case["text"]


def test_anonymize_spans_never_overlap_and_rerun_adds_nothing():
    fixture = json.loads((FIXTURES / "pii_cases.json").read_text())
    rules = RedactionRuleSet(names=tuple(fixture["names"]))
    for case in fixture["cases"]:
        clean = anonymize(_raw(case["text"]), rules)
        spans = sorted((r.start, r.end) for r in clean.redactions)
        for (s1, e1), (s2, e2) in zip(spans, spans[1:]):
            assert e1 <= s2
        again = anonymize(_raw(clean.body), rules)
        assert again.redactions == []
        assert again.body == clean.body


def test_anonymize_rules_load(tmp_path):
    path = tmp_path / "rules.json"
    path.write_text(json.dumps({"names": ["Max"], "redact_urls": False}))
    rules = RedactionRuleSet.load(path)
    assert rules.names == ("Max",) and rules.redact_urls is False


# --- translate ----------------------------------------------------------------------

class CannedMT:
    def __init__(self, mapping):
        self.mapping = mapping
        self.calls = 0

    def translate(self, text, source, target):
        self.calls += 1
        return self.mapping[text]


def test_translate_uses_client():
    email = CleanEmail(id="a", body="Namibia Individualreise", source_lang="de")
    mt = CannedMT({"Namibia Individualreise": "Namibia individual trip"})
    out = translate(email, mt)
    assert out.body == "Namibia individual trip"
    assert out.translated is True


def test_translate_passthrough_for_english():
    email = CleanEmail(id="a", body="already english", source_lang="en")
    mt = CannedMT({})
    out = translate(email, mt)
    assert out.body == "already english"
    assert out.translated is False
    assert mt.calls == 0


def test_translate_all_preserves_order_and_records_failures():
    emails = [CleanEmail(id=f"e{i}", body=f"text {i}", source_lang="de") for i in range(6)]

    class FlakyMT:
        def translate(self, text, source, target):
            if text == "text 3":
                raise MTRejectedError("nope")
            return text.upper()

    translated, failures = translate_all(emails, FlakyMT(), concurrency=3)
    assert [e.id for e in translated] == ["e0", "e1", "e2", "e4", "e5"]
    assert failures == [{"email_id": "e3", "error": "MT_REJECTED", "message": "nope"}]


# --- MT HTTP client against a scripted local server -----------------------------------

class _ScriptedHandler(BaseHTTPRequestHandler):
    script: list[int] = []
    hits: list[int] = []

    def do_POST(self):
        status = self.script[min(len(self.hits), len(self.script) - 1)]
        self.hits.append(status)
        length = int(self.headers.get("Content-Length", 0))
        self.rfile.read(length)
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        if status == 200:
            self.wfile.write(json.dumps({"text": "translated!"}).encode())
        else:
            self.wfile.write(b"{}")

    def log_message(self, *args):
        pass


@pytest.fixture
def scripted_server():
    server = HTTPServer(("127.0.0.1", 0), _ScriptedHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield server
    finally:
        server.shutdown()


def _mt_client(server, max_retries=3):
    url = f"http://127.0.0.1:{server.server_address[1]}/"
    return HttpMTClient(url, max_retries=max_retries, sleeper=lambda s: None)


def test_mt_retries_on_503_then_succeeds(scripted_server):
    _ScriptedHandler.script = [503, 503, 200]
    _ScriptedHandler.hits = []
    client = _mt_client(scripted_server)
    assert client.translate("hallo", "de", "en") == "translated!"
    assert _ScriptedHandler.hits == [503, 503, 200]


def test_mt_unavailable_after_exhausted_retries(scripted_server):
    _ScriptedHandler.script = [500]
    _ScriptedHandler.hits = []
    client = _mt_client(scripted_server, max_retries=2)
    with pytest.raises(MTUnavailableError):
        client.translate("hallo", "de", "en")
    assert len(_ScriptedHandler.hits) == 3


def test_mt_rejected_is_not_retried(scripted_server):
    _ScriptedHandler.script = [400]
    _ScriptedHandler.hits = []
    client = _mt_client(scripted_server)
    with pytest.raises(MTRejectedError):
        client.translate("hallo", "de", "en")
    assert len(_ScriptedHandler.hits) == 1


# --- splits --------------------------------------------------------------------------

def _corpus(n):
    return [CleanEmail(id=f"m{i:04d}", body=f"mail {i}") for i in range(n)]


def test_sample_splits_exact_sizes_and_disjoint():
    splits = sample_splits(_corpus(2000), (1500, 150, 200), seed=42)
    sizes = splits.sizes()
    assert (sizes["train"], sizes["validation"], sizes["test"]) == (1500, 150, 200)
    train = set(splits.ids_for("train"))
    val = set(splits.ids_for("validation"))
    test = set(splits.ids_for("test"))
    assert not (train & val) and not (train & test) and not (val & test)


def test_sample_splits_deterministic():
    a = sample_splits(_corpus(100), (50, 20, 20), seed=42)
    b = sample_splits(_corpus(100), (50, 20, 20), seed=42)
    assert a == b


def test_sample_splits_seed_changes_membership_not_sizes():
    a = sample_splits(_corpus(100), (50, 20, 20), seed=1)
    b = sample_splits(_corpus(100), (50, 20, 20), seed=2)
    assert a.sizes() == b.sizes()
    assert a.assignments != b.assignments


def test_sample_splits_zero_sizes():
    assert sample_splits(_corpus(5), (0, 0, 0), seed=0).assignments == {}


def test_sample_splits_insufficient_corpus():
    with pytest.raises(InsufficientCorpusError):
        sample_splits(_corpus(10), (10, 1, 0), seed=0)


def test_split_assignment_save_load(tmp_path):
    splits = sample_splits(_corpus(30), (20, 5, 5), seed=7)
    path = tmp_path / "splits.json"
    splits.save(path)
    from mailtod.corpus import SplitAssignment
    assert SplitAssignment.load(path) == splits


# --- stats ----------------------------------------------------------------------------

def test_stats_empty():
    report = corpus_stats([])
    assert report.n_emails == 0 and report.short == 0 and report.elaborate == 0
    assert report.histogram == {} and report.mean_tokens == 0.0


def test_stats_threshold():
    report = corpus_stats([CleanEmail(id="a", body="one two three")], short_threshold=20)
    assert report.short == 1 and report.elaborate == 0


def test_stats_fixture_hand_count():
    emails = read_corpus(FIXTURES / "filter_corpus.jsonl")
    report = corpus_stats(emails, short_threshold=10)
    hand_counts = [len(e.body.split()) for e in emails]
    assert report.n_emails == 20
    assert report.short == sum(1 for c in hand_counts if c < 10)
    assert report.elaborate == sum(1 for c in hand_counts if c >= 10)
    assert sum(report.histogram.values()) == 20


def test_as_clean_wraps_raw():
    raw = RawEmail(id="a", body="text", subject="s", source_lang="de")
    clean = as_clean(raw)
    assert (clean.id, clean.body, clean.subject, clean.translated) == ("a", "text", "s", False)
