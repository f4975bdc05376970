"""mailtod: monologue e-mail corpora in, annotated task-oriented dialogues out."""

from .corpus import (
    CleanEmail,
    FilterReason,
    FilterRuleSet,
    FilterVerdict,
    RawEmail,
    RedactionRuleSet,
    SplitAssignment,
    anonymize,
    corpus_stats,
    filter_emails,
    ingest,
    read_corpus,
    sample_splits,
    translate,
    write_corpus,
)
from .dsl import (
    AnnotatedUtterance,
    AnnotationItem,
    Speaker,
    Violation,
    extract_annotations,
    parse_items,
    serialize,
    validate,
)
from .metrics import (
    MetricReport,
    evaluate,
    exact_match,
    export_dst,
    normalize_value,
    presence,
    soft_match,
    state_set,
)
from .ontology import Ontology, SlotRef, default_ontology, load_ontology, resolve
from .orchestrator import (
    DatasetBundle,
    Dialogue,
    HttpLLMClient,
    LLMClientConfig,
    MockLLMClient,
    annotate_dialogue,
    generate_dialogue,
    load_bundle,
    parse_dialogue_text,
    postprocess_dialogue,
    run_pipeline,
    save_bundle,
)
from .promptkit import PromptLibrary, build_annotation_prompt, build_generation_prompt

__version__ = "0.1.0"
